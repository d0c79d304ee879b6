"""Multi-level video encoding.

Ingested unit features pass through one shared BiGRU (same architecture
as the sentence encoder) to give the global sequence V_g; the action and
object level sequences are row-wise affine+ReLU projections of V_g.
"""

from dataclasses import dataclass

from . import ops
from .autograd import Tensor


@dataclass
class VideoLevels:
    levels: dict  # level name -> (T, d_s)

    def __getitem__(self, level: str) -> Tensor:
        return self.levels[level]


def encode_video_global(features, params) -> Tensor:
    h = ops.bi_gru(
        features,
        params["video.fwd.w"], params["video.fwd.u"], params["video.fwd.b"],
        params["video.bwd.w"], params["video.bwd.u"], params["video.bwd.b"],
    )
    return ops.relu(ops.add(ops.matmul(h, params["video.fuse.w"]), params["video.fuse.b"]))


def project_semantic(v_g: Tensor, w, b) -> Tensor:
    """Row-local affine + ReLU highlighting one semantic level."""
    return ops.relu(ops.add(ops.matmul(v_g, w), b))


def encode_video(features, params, config) -> VideoLevels:
    v_g = encode_video_global(ops.as_tensor(features), params)
    levels = {"g": v_g}
    if config.use_action:
        levels["a"] = project_semantic(v_g, params["video.proj.a.w"], params["video.proj.a.b"])
    if config.use_object:
        levels["o"] = project_semantic(v_g, params["video.proj.o.w"], params["video.proj.o.b"])
    return VideoLevels(levels=levels)
