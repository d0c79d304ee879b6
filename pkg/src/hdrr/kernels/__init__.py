"""Hot numeric kernels: GRU sequence scans and 1-D convolutions.

Each kernel ships in two functionally identical flavours:

* explicit-loop code compiled with ``numba.njit`` (the default when numba
  imports cleanly), and
* a vectorized pure-numpy fallback.

The backend is resolved once at import time from the ``HDRR_BACKEND``
environment variable: ``auto`` (default), ``numba``, or ``numpy``.
``numpy`` forces the fallback; ``numba`` errors out if numba is missing.
Within one backend all kernels are bit-deterministic.
"""

import os

from ..errors import ConfigError

_REQUESTED = os.environ.get("HDRR_BACKEND", "auto").strip().lower()
if _REQUESTED not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"HDRR_BACKEND must be one of auto/numba/numpy, got {_REQUESTED!r}"
    )

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

if _REQUESTED == "numba" and not HAVE_NUMBA:
    raise ConfigError("HDRR_BACKEND=numba but numba is not importable")

USE_NUMBA = HAVE_NUMBA and _REQUESTED != "numpy"


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
