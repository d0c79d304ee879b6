"""Dataset manifests, feature/embedding file formats, run configuration,
and the synthetic-data generator.

File formats
------------
Manifest: UTF-8 JSON Lines, one record per line with fields exactly
    ``id``, ``feature_path``, ``duration_seconds``, ``tokens``,
    ``action_mask`` (0/1), ``object_mask`` (0/1), ``moment``
    ([start, end] in seconds).  ``feature_path`` resolves relative to the
    manifest's directory.

Feature file: binary, magic ``VFEA``, u32-LE unit count T, u32-LE feature
    dim, then T*d f32-LE values, row-major.

Embedding table: UTF-8 text, one ``token v1 v2 ... v_dw`` line per token.
    Out-of-vocabulary tokens fall back to a deterministic seeded hash
    vector, so a table file is optional.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, ManifestError

FEATURE_MAGIC = b"VFEA"

# Tiny lexicon for role tagging of synthetic queries: gerunds act, nouns
# are objects.  Real datasets carry their role masks in the manifest.
ACTION_WORDS = (
    "closing", "cooking", "drinking", "eating", "holding", "lifting",
    "opening", "reading", "throwing", "walking", "washing", "writing",
)
OBJECT_WORDS = (
    "ball", "book", "bottle", "box", "cup", "door", "laptop", "man",
    "person", "plate", "room", "sandwich", "towel", "woman",
)
_ACTION_SET = frozenset(ACTION_WORDS)
_OBJECT_SET = frozenset(OBJECT_WORDS)


def _hash_words(text: str):
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Hyperparameters and ablation switches for one run.

    ``d_f`` (the fused dimension) defaults to 2*d_s, matching the
    concatenation of a video row with the pooled sentence vector.
    """

    l_max: int = 10
    t_units: int = 75
    d_s: int = 32
    d_f: int | None = None
    d_v: int = 16
    d_w: int = 50
    m: int = 3
    filter_sizes: list = field(default_factory=lambda: [6, 12, 24, 48, 72])
    heads: int = 4
    learning_rate: float = 0.003
    batch_size: int = 128
    epochs: int = 100
    alpha: float = 0.001
    seed: int = 1
    use_action: bool = True
    use_object: bool = True
    use_res_bigru: bool = True
    use_self_attention: bool = True
    embeddings_path: str | None = None
    iou_thresholds: list = field(default_factory=lambda: [0.3, 0.5, 0.7])

    def __post_init__(self):
        if self.d_f is None:
            self.d_f = 2 * self.d_s
        self.filter_sizes = sorted({int(w) for w in self.filter_sizes})
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(f"invalid config: {msg}")

        need(self.m >= 1, f"fusion depth m must be >= 1, got {self.m}")
        need(self.l_max >= 1, f"l_max must be >= 1, got {self.l_max}")
        need(self.t_units >= 1, f"t_units must be >= 1, got {self.t_units}")
        need(min(self.d_s, self.d_v, self.d_w) >= 1, "dimensions must be positive")
        need(self.d_f == 2 * self.d_s, f"d_f must equal 2*d_s, got {self.d_f} != {2 * self.d_s}")
        need(len(self.filter_sizes) > 0, "filter_sizes must be non-empty")
        for w in self.filter_sizes:
            need(1 <= w <= self.t_units, f"filter size {w} must lie in [1, t_units={self.t_units}]")
        need(self.heads >= 1 and self.d_s % self.heads == 0,
             f"d_s={self.d_s} must be divisible by heads={self.heads}")
        need(self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}")
        need(self.learning_rate > 0, "learning_rate must be positive")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.epochs >= 0, "epochs must be >= 0")
        for n in self.iou_thresholds:
            need(0.0 < n < 1.0, f"IoU threshold {n} must lie in (0, 1)")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def enabled_levels(self) -> tuple:
        levels = ["g"]
        if self.use_action:
            levels.append("a")
        if self.use_object:
            levels.append("o")
        return tuple(levels)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


@dataclass
class DatasetRecord:
    id: str
    feature_path: Path
    duration_seconds: float
    tokens: list
    action_mask: list
    object_mask: list
    moment: tuple  # (start, end) seconds

    def validate(self) -> None:
        start, end = self.moment
        if not (0.0 <= start < end <= self.duration_seconds):
            raise ManifestError(
                f"record {self.id!r}: moment ({start}, {end}) violates "
                f"0 <= start < end <= duration ({self.duration_seconds})"
            )
        if len(self.action_mask) != len(self.tokens) or len(self.object_mask) != len(self.tokens):
            raise ManifestError(
                f"record {self.id!r}: mask lengths "
                f"({len(self.action_mask)}, {len(self.object_mask)}) "
                f"do not match token count {len(self.tokens)}"
            )


_MANIFEST_FIELDS = (
    "id", "feature_path", "duration_seconds", "tokens",
    "action_mask", "object_mask", "moment",
)


def load_manifest(path) -> list:
    """Parse and validate a JSON-Lines manifest, preserving file order."""
    path = Path(path)
    base = path.parent
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            missing = [k for k in _MANIFEST_FIELDS if k not in raw]
            if missing:
                raise ManifestError(f"{path}: line {lineno}: missing fields {missing}")
            try:
                feature_path = Path(raw["feature_path"])
                if not feature_path.is_absolute():
                    feature_path = base / feature_path
                record = DatasetRecord(
                    id=str(raw["id"]),
                    feature_path=feature_path,
                    duration_seconds=float(raw["duration_seconds"]),
                    tokens=[str(t) for t in raw["tokens"]],
                    action_mask=[bool(v) for v in raw["action_mask"]],
                    object_mask=[bool(v) for v in raw["object_mask"]],
                    moment=(float(raw["moment"][0]), float(raw["moment"][1])),
                )
            except (TypeError, ValueError, IndexError, KeyError) as exc:
                raise ManifestError(f"{path}: line {lineno}: malformed record ({exc})") from exc
            record.validate()
            records.append(record)
    return records


def write_manifest(entries, path) -> None:
    """Write manifest lines; each entry is a plain dict in schema order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps({k: entry[k] for k in _MANIFEST_FIELDS}) + "\n")


# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------


def write_features(path, matrix) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DataFormatError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise DataFormatError("feature matrix contains non-finite values")
    t_len, dim = matrix.shape
    with Path(path).open("wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", t_len, dim))
        fh.write(matrix.astype("<f4").tobytes())


def load_features(path, t_units: int | None = None) -> np.ndarray:
    """Load a feature file as float64 (T, d_v).

    When ``t_units`` is given and differs from the stored unit count, rows
    are resampled by nearest neighbour over the unit index:
    row i comes from floor(i * T_stored / t_units).
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != FEATURE_MAGIC:
        raise DataFormatError(f"{path}: not a feature file (bad magic)")
    t_len, dim = struct.unpack_from("<II", raw, 4)
    expected = 12 + 4 * t_len * dim
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(raw) - 12} bytes, expected {expected - 12} "
            f"for T={t_len}, d_v={dim}"
        )
    matrix = np.frombuffer(raw, dtype="<f4", offset=12).reshape(t_len, dim).astype(np.float64)
    if not np.isfinite(matrix).all():
        raise DataFormatError(f"{path}: non-finite feature values")
    if t_units is not None and t_units != t_len:
        idx = (np.arange(t_units) * t_len) // t_units
        matrix = matrix[idx]
    return matrix


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


class EmbeddingTable:
    """token -> vector lookup with a deterministic hash fallback for OOV."""

    def __init__(self, vectors: dict, dim: int, seed: int):
        self.vectors = vectors
        self.dim = int(dim)
        self.seed = int(seed)
        self._bound = 1.0 / np.sqrt(self.dim)

    @classmethod
    def load(cls, path, seed: int) -> "EmbeddingTable":
        vectors = {}
        dim = None
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                token, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                    if dim == 0:
                        raise DataFormatError(f"{path}: line {lineno}: no vector values")
                elif len(values) != dim:
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected {dim} values, got {len(values)}"
                    )
                try:
                    vectors[token] = np.array([float(v) for v in values])
                except ValueError as exc:
                    raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if dim is None:
            raise DataFormatError(f"{path}: empty embedding table")
        return cls(vectors, dim, seed)

    @classmethod
    def hashed(cls, dim: int, seed: int) -> "EmbeddingTable":
        """Table with no stored vocabulary; every token hashes to a vector."""
        return cls({}, dim, seed)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *_hash_words(token)]))
        return rng.uniform(-self._bound, self._bound, self.dim)


def embed_tokens(tokens, table: EmbeddingTable, l_max: int) -> np.ndarray:
    """(l_max, d_w) embedding matrix: zero-padded, truncated beyond l_max."""
    out = np.zeros((l_max, table.dim))
    for i, token in enumerate(tokens[:l_max]):
        out[i] = table.lookup(token)
    return out


def table_for_config(config: RunConfig) -> EmbeddingTable:
    if config.embeddings_path:
        return EmbeddingTable.load(config.embeddings_path, config.seed)
    return EmbeddingTable.hashed(config.d_w, config.seed)


# ---------------------------------------------------------------------------
# role tagging
# ---------------------------------------------------------------------------


def lexicon_tag(tokens):
    """Mark lexicon verbs as actions and lexicon nouns as objects."""
    action = [t.lower() in _ACTION_SET for t in tokens]
    obj = [t.lower() in _OBJECT_SET for t in tokens]
    return action, obj


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

_PATTERN_SALT = 0x5FEA
_BG_NOISE = 0.8
_FG_NOISE = 0.8
# drawing pairs from a small pool makes queries collide across records
# with different interval geometry, so per-record score calibration
# cannot be memorized from the sentence alone
_POOL_ACTIONS = ACTION_WORDS[:2]
_POOL_OBJECTS = OBJECT_WORDS[:2]


def pattern_vector(action: str, obj: str, d_v: int) -> np.ndarray:
    """Fixed +-1 signature planted for one (action, object) pair."""
    rng = np.random.default_rng(
        np.random.SeedSequence([_PATTERN_SALT, *_hash_words(f"{action}|{obj}")])
    )
    return rng.choice(np.array([-1.0, 1.0]), size=d_v)


def query_pool():
    """The (action, object) pairs the synthesizer plants and queries."""
    return [(a, o) for a in _POOL_ACTIONS for o in _POOL_OBJECTS]


def synthesize_dataset(seed: int, n_records: int, config: RunConfig, out_dir) -> Path:
    """Generate a learnable dataset: manifest plus one feature file per record.

    Every record plants the signature of each pool pair in its own
    disjoint interval over seeded noise; the query names one pair and the
    ground truth is that pair's interval.  The video alone therefore says
    nothing about which interval is the answer, and with only four
    distinct queries the interval geometry cannot be memorized from the
    sentence either.  Pure function of (seed, n_records, config): reruns
    produce byte-identical trees.
    """
    if n_records < 1:
        raise ConfigError(f"n_records must be >= 1, got {n_records}")
    if config.l_max < 3:
        raise ConfigError("synthetic queries need l_max >= 3")
    if config.t_units < 10:
        raise ConfigError("synthesis needs t_units >= 10 to place the pattern intervals")
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    t_units = config.t_units
    pairs = query_pool()
    min_len = max(2, t_units // 9)
    max_len = max(min_len, t_units // 5)
    entries = []
    for i in range(n_records):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        queried = int(rng.integers(len(pairs)))
        order = rng.permutation(len(pairs))
        lengths = rng.integers(min_len, max_len + 1, size=len(pairs))
        slack = t_units - int(lengths.sum())
        cuts = np.sort(rng.integers(0, slack + 1, size=len(pairs)))
        gaps = np.diff(np.concatenate([[0], cuts]))

        features = _BG_NOISE * rng.standard_normal((t_units, config.d_v))
        spans = {}
        pos = 0
        for j in range(len(pairs)):
            pos += int(gaps[j])
            length = int(lengths[j])
            pair_idx = int(order[j])
            features[pos : pos + length] = pattern_vector(*pairs[pair_idx], config.d_v) + (
                _FG_NOISE * rng.standard_normal((length, config.d_v))
            )
            spans[pair_idx] = (pos, pos + length - 1)
            pos += length

        action, obj = pairs[queried]
        u_start, u_end = spans[queried]
        duration = float(np.round(rng.uniform(20.0, 40.0), 2))
        det = "a" if rng.integers(2) == 0 else "the"
        tokens = ["someone", "is", action, det, obj][-config.l_max :]
        action_mask, object_mask = lexicon_tag(tokens)

        rec_id = f"rec{i:04d}"
        write_features(feat_dir / f"{rec_id}.vfea", features)
        entries.append(
            {
                "id": rec_id,
                "feature_path": f"features/{rec_id}.vfea",
                "duration_seconds": duration,
                "tokens": tokens,
                "action_mask": [int(v) for v in action_mask],
                "object_mask": [int(v) for v in object_mask],
                "moment": [u_start * duration / t_units, (u_end + 1) * duration / t_units],
            }
        )
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(entries, manifest_path)
    return manifest_path
