"""Manifests, feature files, embeddings, config, tagging, and synthesis."""

import json
from pathlib import Path

import numpy as np
import pytest

from conftest import detect_planted_interval, interval_iou_oracle, tiny_config
from hdrr.data import (
    EmbeddingTable,
    RunConfig,
    embed_tokens,
    lexicon_tag,
    load_features,
    load_manifest,
    synthesize_dataset,
    write_features,
    write_manifest,
)
from hdrr.errors import ConfigError, DataFormatError, ManifestError


def _write_lines(path: Path, lines) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _record_line(rec_id="r1", duration=10.0, moment=(1.0, 4.0), tokens=("a", "woman"),
                 action_mask=(0, 0), object_mask=(0, 1), feature_path="f.vfea"):
    return json.dumps({
        "id": rec_id,
        "feature_path": feature_path,
        "duration_seconds": duration,
        "tokens": list(tokens),
        "action_mask": list(action_mask),
        "object_mask": list(object_mask),
        "moment": list(moment),
    })


class TestManifest:
    def test_well_formed_three_lines(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line(f"r{i}") for i in range(3)])
        records = load_manifest(path)
        assert [r.id for r in records] == ["r0", "r1", "r2"]

    def test_feature_path_resolves_relative_to_manifest(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line(feature_path="feats/x.vfea")])
        assert load_manifest(path)[0].feature_path == tmp_path / "feats" / "x.vfea"

    def test_inverted_moment_rejected_with_record_id(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line("bad", moment=(4.0, 4.0))])
        with pytest.raises(ManifestError, match="bad"):
            load_manifest(path)

    def test_moment_beyond_duration_rejected(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line("r9", moment=(1.0, 11.0))])
        with pytest.raises(ManifestError, match="r9"):
            load_manifest(path)

    def test_mask_length_mismatch_rejected(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line(action_mask=(0, 1, 1))])
        with pytest.raises(ManifestError, match="mask length"):
            load_manifest(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = _write_lines(tmp_path / "m.jsonl", [_record_line(), "{not json"])
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path)

    def test_missing_field_reported(self, tmp_path):
        raw = json.loads(_record_line())
        del raw["moment"]
        path = _write_lines(tmp_path / "m.jsonl", [json.dumps(raw)])
        with pytest.raises(ManifestError, match="moment"):
            load_manifest(path)

    def test_round_trip(self, tmp_path):
        entries = [json.loads(_record_line(f"r{i}")) for i in range(3)]
        write_manifest(entries, tmp_path / "m.jsonl")
        records = load_manifest(tmp_path / "m.jsonl")
        assert [r.tokens for r in records] == [["a", "woman"]] * 3


class TestFeatureFiles:
    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = rng.normal(size=(7, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "f.vfea"
        write_features(path, matrix)
        first = path.read_bytes()
        write_features(path, load_features(path))
        assert path.read_bytes() == first

    def test_resample_selects_every_other_row(self, tmp_path):
        matrix = np.arange(150 * 2, dtype=np.float64).reshape(150, 2)
        path = tmp_path / "f.vfea"
        write_features(path, matrix)
        out = load_features(path, t_units=75)
        np.testing.assert_array_equal(out, matrix[::2])

    def test_resample_identity_when_counts_match(self, tmp_path):
        matrix = np.random.default_rng(1).normal(size=(75, 4))
        path = tmp_path / "f.vfea"
        write_features(path, matrix)
        out = load_features(path, t_units=75)
        np.testing.assert_array_equal(out, matrix.astype(np.float32).astype(np.float64))

    def test_upsample_duplicates_rows(self, tmp_path):
        matrix = np.arange(4, dtype=np.float64)[:, None]
        path = tmp_path / "f.vfea"
        write_features(path, matrix)
        out = load_features(path, t_units=8)
        np.testing.assert_array_equal(out[:, 0], [0, 0, 1, 1, 2, 2, 3, 3])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "f.vfea"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataFormatError, match="magic"):
            load_features(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "f.vfea"
        write_features(path, np.ones((4, 2)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(DataFormatError, match="payload"):
            load_features(path)

    def test_non_finite_rejected_on_read(self, tmp_path):
        path = tmp_path / "f.vfea"
        import struct

        payload = struct.pack("<4f", 1.0, float("nan"), 0.0, 2.0)
        path.write_bytes(b"VFEA" + struct.pack("<II", 2, 2) + payload)
        with pytest.raises(DataFormatError, match="non-finite"):
            load_features(path)

    def test_non_finite_rejected_on_write(self, tmp_path):
        with pytest.raises(DataFormatError):
            write_features(tmp_path / "f.vfea", np.array([[np.inf]]))


class TestEmbeddings:
    def test_table_file_parse_and_lookup(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("cat 1.0 2.0\ndog 3.0 4.0\n", encoding="utf-8")
        table = EmbeddingTable.load(path, seed=5)
        np.testing.assert_array_equal(table.lookup("dog"), [3.0, 4.0])
        assert table.dim == 2

    def test_inconsistent_dims_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("cat 1.0 2.0\ndog 3.0\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="line 2"):
            EmbeddingTable.load(path, seed=5)

    def test_oov_fallback_is_deterministic(self):
        a = EmbeddingTable.hashed(8, seed=3).lookup("zylophone")
        b = EmbeddingTable.hashed(8, seed=3).lookup("zylophone")
        np.testing.assert_array_equal(a, b)
        c = EmbeddingTable.hashed(8, seed=4).lookup("zylophone")
        assert not np.array_equal(a, c)

    def test_padding_rows_zero(self):
        table = EmbeddingTable.hashed(6, seed=1)
        out = embed_tokens(["x", "y", "z"], table, l_max=10)
        assert out.shape == (10, 6)
        assert np.all(out[3:] == 0)
        assert np.all(out[:3] != 0)

    def test_empty_query_all_zero(self):
        out = embed_tokens([], EmbeddingTable.hashed(4, seed=1), l_max=5)
        np.testing.assert_array_equal(out, np.zeros((5, 4)))

    def test_truncation_beyond_l_max(self):
        table = EmbeddingTable.hashed(4, seed=1)
        out = embed_tokens(["a"] * 9, table, l_max=3)
        assert out.shape == (3, 4)


class TestRunConfig:
    def test_json_round_trip(self, tmp_path):
        config = tiny_config()
        config.save(tmp_path / "c.json")
        loaded = RunConfig.load(tmp_path / "c.json")
        assert loaded.to_dict() == config.to_dict()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="mystery"):
            RunConfig.from_dict({"mystery": 1})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"m": 0},
            {"filter_sizes": [200]},
            {"filter_sizes": []},
            {"heads": 3},
            {"alpha": -0.1},
            {"d_f": 5},
            {"batch_size": 0},
            {"learning_rate": 0.0},
            {"iou_thresholds": [1.5]},
        ],
    )
    def test_invariant_violations_rejected(self, overrides):
        with pytest.raises(ConfigError):
            tiny_config(**overrides)

    def test_filter_sizes_sorted_and_deduped(self):
        config = tiny_config(filter_sizes=[5, 3, 5])
        assert config.filter_sizes == [3, 5]

    def test_d_f_defaults_to_twice_d_s(self):
        assert tiny_config(d_s=6, d_f=None).d_f == 12

    def test_enabled_levels_follow_flags(self):
        assert tiny_config().enabled_levels() == ("g", "a", "o")
        assert tiny_config(use_action=False).enabled_levels() == ("g", "o")
        assert tiny_config(use_action=False, use_object=False).enabled_levels() == ("g",)


class TestLexiconTag:
    def test_frame_example(self):
        action, obj = lexicon_tag(["a", "woman", "holding", "a", "book"])
        assert action == [False, False, True, False, False]
        assert obj == [False, True, False, False, True]

    def test_no_lexicon_hits(self):
        action, obj = lexicon_tag(["quickly", "the", "xyz"])
        assert not any(action) and not any(obj)

    def test_repeated_verb_tagged_everywhere(self):
        action, _ = lexicon_tag(["holding", "and", "holding"])
        assert action == [True, False, True]


class TestSynthesize:
    def test_byte_identical_across_runs(self, tmp_path):
        config = tiny_config(t_units=30, l_max=5)
        for sub in ("one", "two"):
            synthesize_dataset(9, 5, config, tmp_path / sub)
        for rel in sorted(p.relative_to(tmp_path / "one") for p in (tmp_path / "one").rglob("*")):
            a, b = tmp_path / "one" / rel, tmp_path / "two" / rel
            assert b.exists()
            if a.is_file():
                assert a.read_bytes() == b.read_bytes(), rel

    def test_records_validate_and_moments_inside_duration(self, tmp_path):
        config = tiny_config(t_units=30, l_max=5)
        records = load_manifest(synthesize_dataset(3, 12, config, tmp_path))
        assert len(records) == 12
        for rec in records:
            start, end = rec.moment
            assert 0.0 <= start < end <= rec.duration_seconds
            feats = load_features(rec.feature_path, config.t_units)
            assert feats.shape == (config.t_units, config.d_v)

    def test_masks_mark_exactly_one_action_and_object(self, tmp_path):
        config = tiny_config(t_units=30, l_max=5)
        for rec in load_manifest(synthesize_dataset(4, 8, config, tmp_path)):
            assert sum(rec.action_mask) == 1
            assert sum(rec.object_mask) == 1

    def test_detector_oracle_recovers_intervals(self, tmp_path):
        # learnability calibration: the planted signal must be recoverable
        # by a query-aware nearest-centroid detector before any training
        config = tiny_config(t_units=75, d_v=16, l_max=10)
        records = load_manifest(synthesize_dataset(2, 64, config, tmp_path))
        hits = 0
        for rec in records:
            span = detect_planted_interval(rec, config.t_units, config.d_v)
            if span is None:
                continue
            t = config.t_units / rec.duration_seconds
            iou = interval_iou_oracle(
                span[0], span[1] + 1, rec.moment[0] * t, rec.moment[1] * t
            )
            hits += iou >= 0.8
        assert hits / len(records) >= 0.95

    def test_zero_records_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            synthesize_dataset(1, 0, tiny_config(t_units=30), tmp_path)
