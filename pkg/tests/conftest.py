"""Shared helpers: tiny configs and independent oracles used across tests."""

import numpy as np

from hdrr.data import RunConfig, load_features, pattern_vector, query_pool


def tiny_config(**overrides) -> RunConfig:
    """Small, fast configuration for unit tests."""
    base = dict(
        l_max=4,
        t_units=12,
        d_s=8,
        d_v=4,
        d_w=5,
        m=2,
        filter_sizes=[3, 5],
        heads=2,
        learning_rate=0.01,
        batch_size=4,
        epochs=2,
        alpha=0.001,
        seed=11,
    )
    base.update(overrides)
    return RunConfig(**base)


def overfit_config(**overrides) -> RunConfig:
    """The desk-scale training configuration used by the acceptance suite."""
    base = dict(
        l_max=10,
        t_units=75,
        d_s=16,
        d_v=16,
        d_w=16,
        m=3,
        filter_sizes=[6, 12, 24],
        heads=4,
        learning_rate=0.01,
        batch_size=4,
        epochs=200,
        alpha=0.001,
        seed=1,
    )
    base.update(overrides)
    return RunConfig(**base)


def detect_planted_interval(record, t_units: int, d_v: int, smooth: int = 3):
    """Nearest-centroid oracle detector for synthetic records.

    Assigns every unit (after a light moving average) to the nearest of
    {zero} + planted pattern centroids and returns the longest run of
    units labelled with the record's own pattern, or None.
    """
    feats = load_features(record.feature_path, t_units)
    if smooth > 1:
        kern = np.ones(smooth) / smooth
        feats = np.stack(
            [np.convolve(feats[:, c], kern, mode="same") for c in range(d_v)], axis=1
        )
    pairs = query_pool()
    action = next(t for t, m in zip(record.tokens, record.action_mask) if m)
    obj = next(t for t, m in zip(record.tokens, record.object_mask) if m)
    centroids = [np.zeros(d_v)] + [pattern_vector(a, o, d_v) for a, o in pairs]
    target = 1 + pairs.index((action, obj))
    dists = np.stack([((feats - c) ** 2).sum(axis=1) for c in centroids])
    labels = np.argmin(dists, axis=0) == target
    best_len = cur_len = 0
    best_start = cur_start = 0
    for t in range(t_units):
        if labels[t]:
            if cur_len == 0:
                cur_start = t
            cur_len += 1
            if cur_len > best_len:
                best_len, best_start = cur_len, cur_start
        else:
            cur_len = 0
    if best_len == 0:
        return None
    return best_start, best_start + best_len - 1


def interval_iou_oracle(a_start, a_end, b_start, b_end) -> float:
    """Plain interval arithmetic, kept independent of the library."""
    inter = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    union = (a_end - a_start) + (b_end - b_start) - inter
    return inter / union if union > 0 else 0.0
