"""Finite-difference verification of analytic gradients.

:func:`finite_diff_check` compares the tape's gradients against central
differences for an arbitrary scalar function of a set of parameters.
:func:`run_op_suite` sweeps every differentiable op over randomized
shapes and values; :func:`run_full_model_check` differentiates the whole
composed model at tiny dimensions.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autograd import GradTape, Tensor, backward
from .errors import UsageError

ZERO_GRAD_CUTOFF = 1e-12  # below this, compare absolutely instead of relatively
ABS_FALLBACK_TOL = 1e-7


@dataclass
class ParamCheck:
    name: str
    max_abs_diff: float
    max_rel_err: float
    ok: bool


@dataclass
class GradCheckReport:
    checks: list = field(default_factory=list)
    failure: str = ""

    @property
    def ok(self) -> bool:
        return not self.failure and all(c.ok for c in self.checks)

    def worst(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def lines(self):
        if self.failure:
            yield f"  FAIL {self.failure}"
        for c in self.checks:
            status = "ok" if c.ok else "FAIL"
            yield (
                f"  {status:4s} {c.name}: max_rel_err={c.max_rel_err:.3e} "
                f"max_abs_diff={c.max_abs_diff:.3e}"
            )


def finite_diff_check(f, params: dict, step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic and central-difference gradients of ``f``.

    ``f`` must be a deterministic scalar function of the tensors in
    ``params`` (a name -> Tensor mapping), reading their current
    ``.data``.  Elements whose analytic and numeric gradients are both
    below 1e-12 in magnitude fall back to an absolute comparison.
    """
    if step <= 0:
        raise UsageError("finite_diff_check requires step > 0")
    report = GradCheckReport()
    for p in params.values():
        p.zero_grad()
    with GradTape():
        loss = f()
        value = loss.item()
        if not np.isfinite(value):
            report.failure = f"non-finite function value {value}"
            return report
        backward(loss)

    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = np.empty_like(p.data)
        bad = None
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + step
            hi = f().item()
            p.data[idx] = orig - step
            lo = f().item()
            p.data[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                bad = f"non-finite value while probing {name}{list(idx)}"
                break
            numeric[idx] = (hi - lo) / (2.0 * step)
        if bad is not None:
            report.failure = bad
            return report
        diff = np.abs(analytic - numeric)
        denom = np.maximum(np.abs(analytic), np.abs(numeric))
        near_zero = denom < ZERO_GRAD_CUTOFF
        rel = np.where(near_zero, 0.0, diff / np.where(near_zero, 1.0, denom))
        # tiny gradients sit at the central-difference noise floor; an
        # absolute discrepancy below the fallback tolerance still passes
        ok = bool(np.all((rel <= tol) | (diff <= ABS_FALLBACK_TOL)))
        report.checks.append(
            ParamCheck(
                name=name,
                max_abs_diff=float(diff.max(initial=0.0)),
                max_rel_err=float(rel.max(initial=0.0)),
                ok=ok,
            )
        )
    return report


# ---------------------------------------------------------------------------
# randomized per-op sweeps
# ---------------------------------------------------------------------------


def _rand(rng, *shape):
    return Tensor(rng.uniform(-1.5, 1.5, shape), requires_grad=True)


def _away_from(arr: np.ndarray, points, margin: float) -> np.ndarray:
    # nudge values off non-smooth points so central differences stay valid
    for pt in points:
        close = np.abs(arr - pt) < margin
        arr = arr + np.where(close, np.sign(arr - pt + 1e-9) * margin, 0.0)
    return arr


def _fixed_loss(fwd, rng):
    """Scalar loss <out, W> with weights frozen at construction time."""
    shape = fwd().shape
    w = Tensor(rng.uniform(-1.0, 1.0, shape))
    return lambda: ops.tsum(ops.mul(fwd(), w))


def _op_scenarios(rng):
    """One randomized (params, forward) instance per op."""
    m, k, n = (int(rng.integers(1, 5)) for _ in range(3))
    t_len = int(rng.integers(2, 7))
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 3))
    w_len = int(rng.integers(1, t_len + 1))
    d_in = int(rng.integers(1, 5))
    d_h = int(rng.integers(1, 5))

    a = _rand(rng, m, k)
    b = _rand(rng, k, n)
    vec = _rand(rng, n)
    row = _rand(rng, k)
    pos = Tensor(rng.uniform(0.1, 3.0, (m, n)), requires_grad=True)
    kinked = Tensor(
        _away_from(rng.uniform(-2.0, 2.0, (m, n)), (-1.0, 0.0, 1.0), 5e-2),
        requires_grad=True,
    )
    pair_a = _rand(rng, m, n)
    pair_b = Tensor(
        _away_from(rng.uniform(-1.5, 1.5, (m, n)) - pair_a.data, (0.0,), 5e-2) + pair_a.data,
        requires_grad=True,
    )
    tail = _rand(rng, m, int(rng.integers(1, 4)))
    take_idx = int(rng.integers(0, n))
    conv_in = _rand(rng, t_len, c_in)
    conv_k = _rand(rng, w_len, c_in, c_out)
    conv_b = _rand(rng, c_out)
    cell_x = _rand(rng, d_in)
    cell_h = _rand(rng, d_h)
    cell_w = _rand(rng, d_in, 3 * d_h)
    cell_u = _rand(rng, d_h, 3 * d_h)
    cell_b = _rand(rng, 3 * d_h)
    seq_x = _rand(rng, t_len, d_in)

    return {
        "matmul": ({"a": a, "b": b}, lambda: ops.matmul(a, b)),
        "matmul_vec": ({"b": b, "v": vec}, lambda: ops.matmul(b, vec)),
        "add": ({"a": a, "row": row}, lambda: ops.add(a, row)),
        "sub": ({"a": pair_a, "b": pair_b}, lambda: ops.sub(pair_a, pair_b)),
        "mul": ({"a": pair_a, "b": pair_b}, lambda: ops.mul(pair_a, pair_b)),
        "neg": ({"a": pair_a}, lambda: ops.neg(pair_a)),
        "relu": ({"x": kinked}, lambda: ops.relu(kinked)),
        "sigmoid": ({"x": pair_a}, lambda: ops.sigmoid(pair_a)),
        "tanh": ({"x": pair_a}, lambda: ops.tanh(pair_a)),
        "log": ({"x": pos}, lambda: ops.log(pos)),
        "clamp": ({"x": kinked}, lambda: ops.clamp(kinked, -1.0, 1.0)),
        "smooth_l1": ({"x": kinked}, lambda: ops.smooth_l1(kinked)),
        "minimum": ({"a": pair_a, "b": pair_b}, lambda: ops.minimum(pair_a, pair_b)),
        "maximum": ({"a": pair_a, "b": pair_b}, lambda: ops.maximum(pair_a, pair_b)),
        "softmax_last_dim": ({"x": pair_a}, lambda: ops.softmax_last_dim(pair_a)),
        "concat_last_dim": ({"a": pair_a, "b": tail}, lambda: ops.concat_last_dim(pair_a, tail)),
        "slice_last": ({"a": a}, lambda: ops.slice_last(a, 0, max(1, k - 1))),
        "take": ({"v": vec}, lambda: ops.take(vec, take_idx)),
        "transpose": ({"a": a}, lambda: ops.transpose(a)),
        "reshape": ({"a": a}, lambda: ops.reshape(a, (k, m))),
        "flip0": ({"a": a}, lambda: ops.flip0(a)),
        "tsum": ({"a": a}, lambda: ops.tsum(a)),
        "tmean": ({"a": a}, lambda: ops.tmean(a)),
        "conv1d": (
            {"inp": conv_in, "kern": conv_k, "bias": conv_b},
            lambda: ops.conv1d(conv_in, conv_k, conv_b),
        ),
        "gru_cell": (
            {"x": cell_x, "h": cell_h, "w": cell_w, "u": cell_u, "b": cell_b},
            lambda: ops.gru_cell(cell_x, cell_h, cell_w, cell_u, cell_b),
        ),
        "gru_sequence": (
            {"x": seq_x, "w": cell_w, "u": cell_u, "b": cell_b},
            lambda: ops.gru_sequence(seq_x, cell_w, cell_u, cell_b),
        ),
    }


def run_op_suite(seed: int = 7, instances: int = 12, tol: float = 1e-4):
    """Randomized gradient sweep over every differentiable op.

    Each op is checked on ``instances`` independent random shape/value
    draws (well over 100 randomized values per op at the defaults).
    Returns (op name, worst-case GradCheckReport) pairs, sorted by name.
    """
    results = {}
    for i in range(instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        for name, (params, fwd) in _op_scenarios(rng).items():
            f = _fixed_loss(fwd, rng)
            report = finite_diff_check(f, params, step=1e-5, tol=tol)
            prev = results.get(name)
            if prev is None or (prev.ok and not report.ok) or report.worst() > prev.worst():
                results[name] = report
    return sorted(results.items())


def run_full_model_check(seed: int = 7, tol: float = 1e-3) -> GradCheckReport:
    """Finite-difference check of the full composed model at tiny dims."""
    from .data import RunConfig
    from .model import SampleInputs, build_params, forward
    from .training import sample_losses

    config = RunConfig(
        l_max=4,
        t_units=6,
        d_s=4,
        d_f=8,
        d_v=5,
        d_w=3,
        m=2,
        filter_sizes=[2, 3],
        heads=2,
        seed=seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    inputs = SampleInputs(
        embeddings=rng.normal(0.0, 0.8, (config.l_max, config.d_w)),
        valid_len=3,
        action_mask=np.array([False, True, False, False]),
        object_mask=np.array([True, False, True, False]),
        features=rng.normal(0.0, 0.8, (config.t_units, config.d_v)),
    )
    params = build_params(config)

    def f():
        out = forward(params, config, inputs)
        total, _ = sample_losses(out, gt_start=1.2, gt_end=4.4, alpha=0.5)
        return total

    return finite_diff_check(f, dict(params.items()), step=1e-5, tol=tol)
