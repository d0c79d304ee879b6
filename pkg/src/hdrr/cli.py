"""Command-line interface.

Subcommands: synth, train, eval, localize, gradcheck, scores.
Usage errors exit 2 (argparse); runtime failures exit 1 with a message.
"""

import argparse
import json
import sys
from pathlib import Path

from .data import RunConfig, load_features, load_manifest, synthesize_dataset, table_for_config
from .errors import HdrrError
from .gradcheck import run_full_model_check, run_op_suite
from .metrics import evaluate
from .model import build_params, predict_moments, prepare_inputs, forward
from .params import load_checkpoint
from .training import train


def _load_model(args):
    config = RunConfig.load(args.config)
    params = build_params(config)
    params.load_state_dict(load_checkpoint(args.checkpoint))
    return config, params


def _find_record(records, record_id):
    for rec in records:
        if rec.id == record_id:
            return rec
    raise HdrrError(f"record {record_id!r} not found in manifest")


def cmd_synth(args) -> int:
    config = RunConfig.load(args.config)
    seed = config.seed if args.seed is None else args.seed
    manifest = synthesize_dataset(seed, args.n, config, args.out)
    print(f"wrote {args.n} records to {manifest}")
    return 0


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    records = load_manifest(args.manifest)
    result = train(records, config, out_dir=args.out)
    last = result.history[-1] if result.history else {}
    print(json.dumps({"checkpoint": str(result.checkpoint_path), **last}))
    return 0


def cmd_eval(args) -> int:
    config, params = _load_model(args)
    records = load_manifest(args.manifest)
    report = evaluate(params, config, records, table_for_config(config), top_m=args.top_m)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_localize(args) -> int:
    config, params = _load_model(args)
    rec = _find_record(load_manifest(args.manifest), args.record_id)
    feats = load_features(rec.feature_path, config.t_units)
    inputs = prepare_inputs(rec, table_for_config(config), config, feats)
    moments = predict_moments(params, config, inputs, rec.duration_seconds, args.top_m)
    print(json.dumps({
        "record_id": rec.id,
        "moments": [
            {"start": m.start_seconds, "end": m.end_seconds, "score": m.score}
            for m in moments
        ],
    }, indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    failed = False
    for name, report in run_op_suite(seed=args.seed):
        status = "ok" if report.ok else "FAIL"
        print(f"{status:4s} op {name}: worst_rel_err={report.worst():.3e}")
        failed = failed or not report.ok
    full = run_full_model_check(seed=args.seed)
    status = "ok" if full.ok else "FAIL"
    print(f"{status:4s} full model: worst_rel_err={full.worst():.3e}")
    failed = failed or not full.ok
    return 1 if failed else 0


_SCORES_HEADER = "k,t_s,t_e,scale,r_g,r_a,r_o,r,d_s,d_e,xi_s_sec,xi_e_sec"


def cmd_scores(args) -> int:
    config, params = _load_model(args)
    rec = _find_record(load_manifest(args.manifest), args.record_id)
    feats = load_features(rec.feature_path, config.t_units)
    inputs = prepare_inputs(rec, table_for_config(config), config, feats)
    out = forward(params, config, inputs)
    cands = out.candidates
    duration, t_units = rec.duration_seconds, config.t_units

    def level_col(level):
        if level in out.level_scores:
            return out.level_scores[level].data
        return None

    r_g, r_a, r_o = level_col("g"), level_col("a"), level_col("o")
    lines = [_SCORES_HEADER]
    for k in range(cands.count):
        xi_s = float(out.refined_start.data[k])
        xi_e = float(out.refined_end.data[k])
        row = [
            str(k),
            str(int(cands.t_start[k])),
            str(int(cands.t_end[k])),
            str(int(cands.scale[k])),
            "" if r_g is None else f"{r_g[k]:.10g}",
            "" if r_a is None else f"{r_a[k]:.10g}",
            "" if r_o is None else f"{r_o[k]:.10g}",
            f"{out.fused_scores.data[k]:.10g}",
            f"{out.offset_start.data[k]:.10g}",
            f"{out.offset_end.data[k]:.10g}",
            f"{xi_s * duration / t_units:.10g}",
            f"{(xi_e + 1.0) * duration / t_units:.10g}",
        ]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / f"scores_{rec.id}.csv"
        target.write_text(text, encoding="utf-8")
        print(f"wrote {target}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdrr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report R@m,IoU@n over a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--top-m", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("localize", help="print top-m moments for one record")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--record-id", required=True)
    p.add_argument("--top-m", type=int, default=1)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("scores", help="dump the per-candidate score CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--record-id", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_scores)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HdrrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
