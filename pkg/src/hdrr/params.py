"""Learnable-parameter registry and checkpoint serialization.

Every parameter is initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
from a generator seeded by (root seed, parameter name), so adding or
removing parameters never perturbs the initialization of the others.

Checkpoint format (little-endian throughout): magic ``HDRR``, u32 format
version, u32 entry count, then per entry a u32 name length, the UTF-8
name, u32 ndim, u32 dims, and the float64 payload.
"""

import hashlib
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import DataFormatError, UsageError

CHECKPOINT_MAGIC = b"HDRR"
CHECKPOINT_VERSION = 1


def _name_words(name: str):
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class ParamRegistry:
    """Ordered name -> Tensor mapping for one model instance."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, shape, fan_in: int) -> Tensor:
        if name in self._params:
            raise UsageError(f"parameter {name!r} registered twice")
        bound = 1.0 / np.sqrt(max(1, fan_in))
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *_name_words(name)]))
        t = Tensor(rng.uniform(-bound, bound, tuple(shape)), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def total_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state_dict(self, state) -> None:
        """Overwrite parameter values; names and shapes must match exactly."""
        missing = [k for k in self._params if k not in state]
        extra = [k for k in state if k not in self._params]
        if missing or extra:
            raise DataFormatError(
                f"checkpoint does not match model: missing={missing[:3]} extra={extra[:3]}"
            )
        for name, arr in state.items():
            t = self._params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DataFormatError(
                    f"checkpoint entry {name!r} has shape {arr.shape}, expected {t.data.shape}"
                )
            t.data = arr.copy()


def save_checkpoint(state, path) -> None:
    """Write a name -> array mapping (or a ParamRegistry) to ``path``."""
    if isinstance(state, ParamRegistry):
        state = state.state_dict()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(state))
    for name, arr in state.items():
        arr = np.asarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    state = OrderedDict()
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            end = pos + 8 * n
            if end > len(raw):
                raise DataFormatError(f"{path}: truncated payload for entry {name!r}")
            state[name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
            pos = end
    except struct.error as exc:
        raise DataFormatError(f"{path}: truncated checkpoint ({exc})") from exc
    if pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return state
