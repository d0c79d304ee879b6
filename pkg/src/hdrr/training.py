"""Losses, optimizer, and the training loop.

The alignment loss is a soft-target binary cross-entropy pushing each
candidate's fused score toward its IoU with the ground truth; the
regression loss is smooth-L1 on the refined boundaries of the single
candidate whose unrefined span has the highest IoU.  Total loss is
L_aln + alpha * L_reg.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .autograd import GradTape, Tensor, backward
from .data import RunConfig, load_features, table_for_config
from .errors import ConfigError, TrainingError
from .localizer import seconds_to_unit_interval
from .metrics import interval_iou
from .model import ForwardOutputs, build_params, forward, predict_moments, prepare_inputs
from .params import ParamRegistry, save_checkpoint

SCORE_EPS = 1e-7  # clamp for scores entering the logs


@dataclass
class LossBreakdown:
    l_aln: float
    l_reg: float
    l_total: float
    best_candidate_index: int


def candidate_iou_targets(candidates, gt_start: float, gt_end: float) -> np.ndarray:
    """IoU of every unrefined candidate span against the ground truth.

    Both are continuous intervals in unit coordinates; a candidate
    (t_s, t_e) covers [t_s, t_e + 1).
    """
    c_start = candidates.t_start.astype(np.float64)
    c_end = candidates.t_end.astype(np.float64) + 1.0
    inter = np.clip(np.minimum(c_end, gt_end) - np.maximum(c_start, gt_start), 0.0, None)
    union = (c_end - c_start) + (gt_end - gt_start) - inter
    return inter / union


def alignment_loss(scores: Tensor, iou_targets: np.ndarray) -> Tensor:
    """Mean soft-target binary cross-entropy over all candidates."""
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise ConfigError(f"alignment_loss needs a non-empty score vector, got {scores.shape}")
    y = np.asarray(iou_targets, dtype=np.float64)
    r = ops.clamp(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    term = ops.add(ops.mul(Tensor(y), ops.log(r)), ops.mul(Tensor(1.0 - y), ops.log(ops.sub(1.0, r))))
    return ops.neg(ops.tmean(term))


def regression_loss(pred_start: Tensor, pred_end: Tensor, gt_start: float, gt_end: float) -> Tensor:
    """smooth_l1(gt_s - pred_s) + smooth_l1(gt_e - pred_e), unit coordinates."""
    return ops.add(
        ops.smooth_l1(ops.sub(gt_start, pred_start)),
        ops.smooth_l1(ops.sub(gt_end, pred_end)),
    )


def total_loss(l_aln: Tensor, l_reg: Tensor, alpha: float) -> Tensor:
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    return ops.add(l_aln, ops.mul(l_reg, alpha))


def sample_losses(out: ForwardOutputs, gt_start: float, gt_end: float, alpha: float):
    """Losses for one record; ground truth is the continuous unit interval
    [gt_start, gt_end).  The regression target index is the argmax-IoU
    candidate by unrefined span (ties to the smallest index)."""
    iou = candidate_iou_targets(out.candidates, gt_start, gt_end)
    l_aln = alignment_loss(out.fused_scores, iou)
    best = int(np.argmax(iou))
    # the candidate end coordinate convention puts the gt end at gt_end - 1
    l_reg = regression_loss(
        ops.take(out.refined_start, best),
        ops.take(out.refined_end, best),
        gt_start,
        gt_end - 1.0,
    )
    total = total_loss(l_aln, l_reg, alpha)
    breakdown = LossBreakdown(
        l_aln=l_aln.item(),
        l_reg=l_reg.item(),
        l_total=total.item(),
        best_candidate_index=best,
    )
    return total, breakdown


class Adam:
    """Bias-corrected Adam over a parameter registry."""

    def __init__(self, params: ParamRegistry, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainResult:
    params: ParamRegistry
    history: list
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None


def _prepare_dataset(records, table, config: RunConfig):
    prepared = []
    for rec in records:
        feats = load_features(rec.feature_path, config.t_units)
        if feats.shape[1] != config.d_v:
            raise ConfigError(
                f"record {rec.id!r} has feature dim {feats.shape[1]}, config d_v={config.d_v}"
            )
        inputs = prepare_inputs(rec, table, config, feats)
        gs, ge = seconds_to_unit_interval(
            rec.moment[0], rec.moment[1], rec.duration_seconds, config.t_units
        )
        prepared.append((rec, inputs, gs, ge))
    return prepared


def _holdout_metrics(params, config, hold_set, thresholds) -> dict:
    hits = {n: 0 for n in thresholds}
    iou_sum = 0.0
    for rec, inputs, _gs, _ge in hold_set:
        top = predict_moments(params, config, inputs, rec.duration_seconds, top_m=1)[0]
        iou = interval_iou((top.start_seconds, top.end_seconds), rec.moment)
        iou_sum += iou
        for n in thresholds:
            if iou > n:
                hits[n] += 1
    count = len(hold_set)
    out = {f"r_at_1_iou_{n:g}": hits[n] / count for n in thresholds}
    out["holdout_mean_iou"] = iou_sum / count
    return out


def train(records, config: RunConfig, table=None, out_dir=None) -> TrainResult:
    """Full training run: seeded shuffling, mini-batches, per-epoch log.

    The last 20% of the manifest is held out for epoch metrics; gradient
    updates use the remaining records.  With ``out_dir`` set, writes
    ``checkpoint.ckpt`` and ``metrics.jsonl`` there.
    """
    if not records:
        raise ConfigError("training needs a non-empty dataset")
    if table is None:
        table = table_for_config(config)
    prepared = _prepare_dataset(records, table, config)
    n_hold = int(0.2 * len(prepared))
    train_set = prepared[: len(prepared) - n_hold]
    hold_set = prepared[len(prepared) - n_hold :]

    params = build_params(config)
    adam = Adam(params, lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
        perm = rng.permutation(len(train_set))
        sums = np.zeros(3)  # l_aln, l_reg, l_total
        for batch_index, lo in enumerate(range(0, len(perm), config.batch_size)):
            batch = perm[lo : lo + config.batch_size]
            params.zero_grads()
            for j in batch:
                rec, inputs, gs, ge = train_set[j]
                with GradTape():
                    out = forward(params, config, inputs)
                    total, brk = sample_losses(out, gs, ge, config.alpha)
                    if not np.isfinite(brk.l_total):
                        raise TrainingError(
                            f"non-finite loss at epoch {epoch}, batch {batch_index}, "
                            f"record {rec.id!r}"
                        )
                    backward(total)
                sums += (brk.l_aln, brk.l_reg, brk.l_total)
            inv = 1.0 / len(batch)
            for t in params.tensors():
                if t.grad is not None:
                    t.grad *= inv
            adam.step()
        entry = {
            "epoch": epoch,
            "l_aln": float(sums[0]) / len(train_set),
            "l_reg": float(sums[1]) / len(train_set),
            "l_total": float(sums[2]) / len(train_set),
        }
        if hold_set:
            entry.update(_holdout_metrics(params, config, hold_set, config.iou_thresholds))
        history.append(entry)

    checkpoint_path = metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / "checkpoint.ckpt"
        save_checkpoint(params, checkpoint_path)
        metrics_path = out_dir / "metrics.jsonl"
        with metrics_path.open("w", encoding="utf-8") as fh:
            for entry in history:
                fh.write(json.dumps(entry) + "\n")
    return TrainResult(params=params, history=history,
                       checkpoint_path=checkpoint_path, metrics_path=metrics_path)
