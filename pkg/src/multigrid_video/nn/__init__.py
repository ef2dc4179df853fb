"""Minimal numpy network stack: layers, a small video net, SGD, checkpoints."""

from .layers import (
    conv3d_forward,
    conv3d_backward,
    batchnorm_forward,
    batchnorm_backward,
    relu_forward,
    relu_backward,
    global_avg_pool_forward,
    global_avg_pool_backward,
    fc_forward,
    fc_backward,
    softmax_cross_entropy,
)
from .model import VideoNet
from .optim import SgdMomentum
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "conv3d_forward", "conv3d_backward",
    "batchnorm_forward", "batchnorm_backward",
    "relu_forward", "relu_backward",
    "global_avg_pool_forward", "global_avg_pool_backward",
    "fc_forward", "fc_backward",
    "softmax_cross_entropy",
    "VideoNet", "SgdMomentum",
    "save_checkpoint", "load_checkpoint",
]
