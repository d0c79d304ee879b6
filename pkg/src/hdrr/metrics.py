"""Temporal IoU and the R@m,IoU@n evaluation protocol.

A sample counts as a hit at threshold n when at least one of its top-m
predicted moments has IoU strictly greater than n against the truth.
Metrics are computed in seconds.  Per-sample localization parallelizes
across ``HDRR_THREADS`` worker threads (default 1); the reduction order
is fixed, so results do not depend on the thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .data import load_features
from .errors import ConfigError, EvaluationError, UsageError
from .model import predict_moments, prepare_inputs


def worker_threads() -> int:
    raw = os.environ.get("HDRR_THREADS", "1").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HDRR_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def interval_iou(a, b) -> float:
    """Intersection over union of two [start, end] intervals.

    Degenerate point-vs-point overlaps (0/0) evaluate to 0.
    """
    a_s, a_e = float(a[0]), float(a[1])
    b_s, b_e = float(b[0]), float(b[1])
    if a_s > a_e or b_s > b_e:
        raise UsageError(f"interval start exceeds end: {a} vs {b}")
    inter = max(0.0, min(a_e, b_e) - max(a_s, b_s))
    union = (a_e - a_s) + (b_e - b_s) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def recall_at(predictions, truths, m: int, n: float, sample_ids=None) -> float:
    """Fraction of samples whose top-m predictions contain at least one
    moment with IoU > n against the truth."""
    if len(predictions) != len(truths):
        raise EvaluationError(
            f"{len(predictions)} prediction lists vs {len(truths)} truths"
        )
    if not predictions:
        raise EvaluationError("recall_at needs at least one sample")
    hits = 0
    for i, (preds, truth) in enumerate(zip(predictions, truths)):
        if not preds:
            name = sample_ids[i] if sample_ids else f"#{i}"
            raise EvaluationError(f"sample {name} has an empty prediction list")
        if any(interval_iou(p, truth) > n for p in preds[:m]):
            hits += 1
    return hits / len(predictions)


@dataclass
class MetricReport:
    m: int
    fractions: dict          # threshold -> recall fraction
    samples: int
    mean_iou_top1: float

    def to_dict(self) -> dict:
        out = {f"r_at_{self.m}_iou_{n:g}": frac for n, frac in self.fractions.items()}
        out["samples"] = self.samples
        out["mean_iou_top1"] = self.mean_iou_top1
        return out


def evaluate(params, config, records, table, top_m: int = 1, thresholds=None) -> MetricReport:
    """Run the model over a manifest and score it at every threshold."""
    if not records:
        raise EvaluationError("evaluate needs at least one record")
    thresholds = list(config.iou_thresholds) if thresholds is None else list(thresholds)

    def run_one(record):
        feats = load_features(record.feature_path, config.t_units)
        inputs = prepare_inputs(record, table, config, feats)
        moments = predict_moments(params, config, inputs, record.duration_seconds, top_m)
        return [(mo.start_seconds, mo.end_seconds) for mo in moments]

    n_workers = worker_threads()
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            predictions = list(pool.map(run_one, records))
    else:
        predictions = [run_one(r) for r in records]

    truths = [r.moment for r in records]
    ids = [r.id for r in records]
    fractions = {n: recall_at(predictions, truths, top_m, n, ids) for n in thresholds}
    top1 = [interval_iou(p[0], t) for p, t in zip(predictions, truths)]
    return MetricReport(
        m=top_m,
        fractions=fractions,
        samples=len(records),
        mean_iou_top1=sum(top1) / len(top1),
    )
