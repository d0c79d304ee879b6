"""Temporal moment localization at desk scale.

Given an untrimmed video (as per-unit features) and a sentence query
(with action/object role masks), the model ranks multi-scale candidate
spans against global, action, and object level representations fused by
residual BiGRU stacks, then regresses boundary offsets.  Everything runs
on a small float64 reverse-mode autodiff core with numba-accelerated
kernels (pure-numpy fallback via HDRR_BACKEND=numpy).
"""

from .autograd import GradTape, Tensor, backward
from .data import RunConfig
from .kernels import active_backend

__version__ = "0.1.0"

__all__ = ["GradTape", "RunConfig", "Tensor", "active_backend", "backward", "__version__"]
