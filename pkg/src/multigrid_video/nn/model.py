"""A small 3-D convolutional classifier for clips of varying shape.

Three conv/norm/relu stages (each halving the spatial size), global average
pooling and a linear head.  "Same" padding everywhere means any input shape
down to a single frame works, so one set of weights trains across all the
shapes a schedule produces.  Convolutions carry no bias: the following
normalization would cancel it and its gradient would be identically zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..rng import STREAM_INIT, stream_rng
from . import layers

_STRIDE = (1, 2, 2)
_KERNELS = ((3, 7, 7), (3, 3, 3), (3, 3, 3))


def _same_pad(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max(0, (out - 1) * stride + k - size)
    return total // 2, total - total // 2


class VideoNet:
    """Fixed-architecture video classifier with explicit forward/backward.

    Parameters and normalization buffers live in plain dicts of numpy
    arrays, so the training loop, optimizer and checkpoints stay decoupled
    from this class.
    """

    def __init__(
        self,
        num_classes: int,
        in_channels: int = 1,
        widths: tuple[int, ...] = (8, 16, 32),
        seed: int = 0,
        dtype=np.float32,
        bn_momentum: float = 0.1,
        bn_eps: float = 1e-5,
    ):
        if num_classes < 2:
            raise ShapeError(f"need at least 2 classes, got {num_classes}")
        if len(widths) != len(_KERNELS):
            raise ShapeError(f"widths must have {len(_KERNELS)} entries, got {widths}")
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.dtype = np.dtype(dtype)
        self.bn_momentum = bn_momentum
        self.bn_eps = bn_eps

        rng = stream_rng(seed, STREAM_INIT)
        self.params: dict[str, np.ndarray] = {}
        self.stats: dict[str, np.ndarray] = {}
        c_in = in_channels
        for i, (k, c_out) in enumerate(zip(_KERNELS, self.widths)):
            fan_in = c_in * k[0] * k[1] * k[2]
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in) + k)
            self.params[f"conv{i}.w"] = w.astype(self.dtype)
            self.params[f"bn{i}.gamma"] = np.ones(c_out, dtype=self.dtype)
            self.params[f"bn{i}.beta"] = np.zeros(c_out, dtype=self.dtype)
            self.stats[f"bn{i}.mean"] = np.zeros(c_out, dtype=self.dtype)
            self.stats[f"bn{i}.var"] = np.ones(c_out, dtype=self.dtype)
            c_in = c_out
        d = self.widths[-1]
        self.params["fc.w"] = rng.normal(
            0.0, np.sqrt(2.0 / d), size=(d, num_classes)).astype(self.dtype)
        self.params["fc.b"] = np.zeros(num_classes, dtype=self.dtype)

    @property
    def spatial_downsample(self) -> int:
        """Product of spatial strides; inputs at least this large keep a
        non-degenerate feature map."""
        return _STRIDE[1] ** len(_KERNELS)

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 5:
            raise ShapeError(f"expected (N, C, T, H, W) input, got {x.shape}")
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}")
        return np.ascontiguousarray(x, dtype=self.dtype)

    def _forward(self, x: np.ndarray, *, bn_group: int | None, training: bool):
        caches = []
        h = x
        for i, k in enumerate(_KERNELS):
            pad = tuple(
                _same_pad(h.shape[2 + ax], k[ax], _STRIDE[ax]) for ax in range(3))
            h, c_conv = layers.conv3d_forward(
                h, self.params[f"conv{i}.w"], _STRIDE, pad)
            h, c_bn = layers.batchnorm_forward(
                h, self.params[f"bn{i}.gamma"], self.params[f"bn{i}.beta"],
                self.stats[f"bn{i}.mean"], self.stats[f"bn{i}.var"],
                group=bn_group if training else 1,
                momentum=self.bn_momentum, eps=self.bn_eps, training=training)
            h, c_relu = layers.relu_forward(h)
            caches.append((c_conv, c_bn, c_relu))
        pooled, c_gap = layers.global_avg_pool_forward(h)
        logits, c_fc = layers.fc_forward(
            pooled, self.params["fc.w"], self.params["fc.b"])
        return logits, (caches, c_gap, c_fc)

    def forward_backward(self, x: np.ndarray, y: np.ndarray, *, bn_group: int):
        """One training-mode pass; updates normalization running stats.

        Args:
            x: batch (N, C, T, H, W).
            y: integer labels (N,).
            bn_group: statistics group size; must divide N.

        Returns:
            (loss, grads, probs) where grads is keyed like ``self.params``.
        """
        x = self._check_input(x)
        logits, (caches, c_gap, c_fc) = self._forward(
            x, bn_group=bn_group, training=True)
        loss, dlogits, probs = layers.softmax_cross_entropy(logits, y)

        grads: dict[str, np.ndarray] = {}
        d, grads["fc.w"], grads["fc.b"] = layers.fc_backward(dlogits, c_fc)
        d = layers.global_avg_pool_backward(d, c_gap)
        for i in reversed(range(len(_KERNELS))):
            c_conv, c_bn, c_relu = caches[i]
            d = layers.relu_backward(d, c_relu)
            d, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = \
                layers.batchnorm_backward(d, c_bn)
            d, grads[f"conv{i}.w"] = layers.conv3d_backward(d, c_conv)
        return loss, grads, probs

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode logits using running normalization statistics."""
        x = self._check_input(x)
        logits, _ = self._forward(x, bn_group=None, training=False)
        return logits

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All learnable and buffer arrays, keyed for checkpointing."""
        out = {f"param.{k}": v for k, v in self.params.items()}
        out.update({f"stats.{k}": v for k, v in self.stats.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key, target in (("param.", self.params), ("stats.", self.stats)):
            for name, current in target.items():
                full = key + name
                if full not in arrays:
                    raise ShapeError(f"checkpoint is missing array {full!r}")
                arr = np.asarray(arrays[full], dtype=current.dtype)
                if arr.shape != current.shape:
                    raise ShapeError(
                        f"checkpoint array {full!r} has shape {arr.shape}, "
                        f"expected {current.shape}")
                target[name] = arr.copy()
