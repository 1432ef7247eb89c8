"""Self-contained 360-degree depth estimation: spherical geometry, a minimal
reverse-mode autodiff engine, two-branch (equirect + cubemap) depth and pose
networks with bidirectional feature fusion, photometric self-supervision, and
a synthetic panorama data source -- all on numpy.
"""

from .autodiff import Parameter, Tensor, adam_step, backward
from .depthnet import DepthNet, DepthNetConfig
from .errors import SphereDepthError
from .pipeline import TrainConfig, evaluate, train_selfsup, train_supervised
from .posenet import PoseNet
from .resample import c2e, e2c, warp_to_reference
from .sphere import PoseSE3
from .synth import SceneSpec, make_sequence, random_trajectory

__all__ = [
    "Parameter", "Tensor", "adam_step", "backward",
    "DepthNet", "DepthNetConfig", "PoseNet", "TrainConfig",
    "SphereDepthError", "PoseSE3", "SceneSpec",
    "c2e", "e2c", "warp_to_reference",
    "evaluate", "train_selfsup", "train_supervised",
    "make_sequence", "random_trajectory",
]
