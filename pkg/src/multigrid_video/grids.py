"""Spatiotemporal sampling grids and clip resampling.

A grid is a span (extent covered in the source), a stride (spacing between
sample points) and an offset per dimension.  Dividing span by stride gives
the number of output samples, so many different grids can produce the same
output shape.  Resampling is nearest-frame in time and bilinear in space,
with pixel centers at integer coordinates and edge clamping.

All operations are pure given an explicit ``numpy.random.Generator``; there
is no module state, so everything here is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridBoundsError, GridError, ShapeError

# Tolerance used when a float ratio like span/stride lands just below an
# integer; keeps output shapes stable for strides constructed as span/target.
_DIM_EPS = 1e-9


def _grid_points(span: float, stride: float) -> int:
    return int(math.floor(span / stride + _DIM_EPS))


@dataclass(frozen=True)
class GridSpec:
    """A concrete sampling grid for one source clip.

    Temporal units are frames, spatial units are pixels of the source clip.
    Spans are integral; strides and offsets may be fractional.  The output
    shape is ``floor(span / stride)`` points per dimension.
    """

    t_span: int
    t_stride: float
    t_offset: float
    s_span_h: int
    s_span_w: int
    s_stride_h: float
    s_stride_w: float
    s_offset_y: float
    s_offset_x: float

    def __post_init__(self) -> None:
        if self.t_span < 1 or self.s_span_h < 1 or self.s_span_w < 1:
            raise GridError(f"grid spans must be positive: {self}")
        if self.t_stride <= 0 or self.s_stride_h <= 0 or self.s_stride_w <= 0:
            raise GridError(f"grid strides must be positive: {self}")
        if self.t_offset < 0 or self.s_offset_y < 0 or self.s_offset_x < 0:
            raise GridError(f"grid offsets must be non-negative: {self}")
        if min(self.out_t, self.out_h, self.out_w) < 1:
            raise GridError(f"grid produces an empty output: {self}")

    @property
    def out_t(self) -> int:
        return _grid_points(self.t_span, self.t_stride)

    @property
    def out_h(self) -> int:
        return _grid_points(self.s_span_h, self.s_stride_h)

    @property
    def out_w(self) -> int:
        return _grid_points(self.s_span_w, self.s_stride_w)

    @property
    def out_shape(self) -> tuple[int, int, int]:
        return (self.out_t, self.out_h, self.out_w)

    def check_bounds(self, frames: int, height: int, width: int) -> None:
        """Raise ``GridBoundsError`` unless the grid lies inside the extent."""
        if self.t_offset + self.t_span > frames + _DIM_EPS:
            raise GridBoundsError(
                f"temporal grid [{self.t_offset}, {self.t_offset + self.t_span}) "
                f"exceeds {frames} source frames"
            )
        if self.s_offset_y + self.s_span_h > height + _DIM_EPS:
            raise GridBoundsError(
                f"vertical grid [{self.s_offset_y}, {self.s_offset_y + self.s_span_h}) "
                f"exceeds source height {height}"
            )
        if self.s_offset_x + self.s_span_w > width + _DIM_EPS:
            raise GridBoundsError(
                f"horizontal grid [{self.s_offset_x}, {self.s_offset_x + self.s_span_w}) "
                f"exceeds source width {width}"
            )

    @classmethod
    def identity(cls, frames: int, height: int, width: int) -> "GridSpec":
        """Grid that reproduces a clip of the given shape exactly."""
        return cls(
            t_span=frames, t_stride=1.0, t_offset=0.0,
            s_span_h=height, s_span_w=width,
            s_stride_h=1.0, s_stride_w=1.0,
            s_offset_y=0.0, s_offset_x=0.0,
        )


@dataclass(frozen=True)
class GridSampleRanges:
    """Randomization ranges for training-time grid draws.

    ``short_side_min``/``short_side_max`` bound the scale the source's short
    side is (conceptually) resized to before a random crop.  The temporal
    stride is drawn as an integer from
    ``{ceil(t_stride_min), ..., floor(t_stride_max)}``.
    """

    short_side_min: float
    short_side_max: float
    t_stride_min: float
    t_stride_max: float

    def __post_init__(self) -> None:
        if self.short_side_min <= 0 or self.t_stride_min <= 0:
            raise GridError(f"sample ranges must be positive: {self}")
        if self.short_side_min > self.short_side_max + _DIM_EPS:
            raise GridError(
                f"short-side range empty: [{self.short_side_min}, {self.short_side_max}]"
            )
        if self.t_stride_min > self.t_stride_max + _DIM_EPS:
            raise GridError(
                f"temporal stride range empty: [{self.t_stride_min}, {self.t_stride_max}]"
            )


def check_clip(clip: np.ndarray, name: str = "clip") -> np.ndarray:
    """Validate a dense video clip: 4-D (frames, height, width, channels), finite."""
    arr = np.asarray(clip)
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (frames, height, width, channels), got {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def resample(clip: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Resample a clip onto a grid.

    Temporal samples take the nearest source frame (``floor(coord + 0.5)``);
    spatial samples are bilinear with pixel centers at integer coordinates
    and edge clamping.  Each output value is clamped to the range of its
    four interpolation corners, so outputs never leave ``[min, max]`` of the
    source even under float rounding.

    Args:
        clip: source array of shape (frames, height, width, channels).
        grid: sampling grid; must lie inside the clip extent.

    Returns:
        Array of shape (out_t, out_h, out_w, channels), same dtype as `clip`.
    """
    clip = check_clip(clip)
    frames, height, width, _ = clip.shape
    grid.check_bounds(frames, height, width)

    nt, nh, nw = grid.out_shape
    t_coord = grid.t_offset + np.arange(nt) * grid.t_stride
    t_idx = np.clip(np.floor(t_coord + 0.5).astype(np.int64), 0, frames - 1)

    ys = grid.s_offset_y + np.arange(nh) * grid.s_stride_h
    xs = grid.s_offset_x + np.arange(nw) * grid.s_stride_w
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[None, :, None, None]
    fx = (xs - x0)[None, None, :, None]
    y0c = np.clip(y0, 0, height - 1)
    y1c = np.clip(y0 + 1, 0, height - 1)
    x0c = np.clip(x0, 0, width - 1)
    x1c = np.clip(x0 + 1, 0, width - 1)

    rows0 = clip[t_idx][:, y0c]
    rows1 = clip[t_idx][:, y1c]
    a = rows0[:, :, x0c]
    b = rows0[:, :, x1c]
    c = rows1[:, :, x0c]
    d = rows1[:, :, x1c]

    # Lerp form (a + f*(b-a)) is exact for f=0 and for constant inputs.
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    out = top + fy * (bottom - top)
    lo = np.minimum(np.minimum(a, b), np.minimum(c, d))
    hi = np.maximum(np.maximum(a, b), np.maximum(c, d))
    np.clip(out, lo, hi, out=out)
    return out.astype(clip.dtype, copy=False)


def draw_training_grid(
    source_shape: tuple[int, int, int],
    target: tuple[int, int, int],
    ranges: GridSampleRanges,
    rng: np.random.Generator,
    *,
    clamp_span: bool = True,
) -> GridSpec:
    """Draw a randomized grid producing exactly the target shape.

    Temporal: an integer stride is drawn uniformly from the stride range,
    the span is ``t * stride`` and the start frame is uniform over valid
    integer positions.  Spatial: a short-side scale is drawn uniformly,
    which fixes a crop size in source pixels (aspect ratio preserved);
    the crop position is uniform over valid real-valued offsets.

    Draw order is fixed (temporal stride, temporal offset, scale, vertical
    offset, horizontal offset) so results are reproducible bit-for-bit for
    a given generator state.

    Args:
        source_shape: (frames, height, width) of the source clip.
        target: (t, h, w) output shape; every dimension >= 1.
        ranges: randomization ranges.
        rng: seeded random generator.
        clamp_span: if True (default), spans that exceed the source extent
            are clamped to it (stride becomes span/target); if False such
            draws raise ``GridBoundsError``.

    Returns:
        A ``GridSpec`` with ``out_shape == target``.
    """
    frames, height, width = source_shape
    t, h, w = target
    if min(t, h, w) < 1:
        raise GridError(f"target shape must be positive, got {target}")
    if min(frames, height, width) < 1:
        raise GridError(f"source shape must be positive, got {source_shape}")

    # Temporal: integer stride and start frame.
    lo = math.ceil(ranges.t_stride_min - _DIM_EPS)
    hi = math.floor(ranges.t_stride_max + _DIM_EPS)
    hi = max(lo, hi)
    t_stride = int(rng.integers(lo, hi + 1))
    t_span = t * t_stride
    t_stride_f = float(t_stride)
    if t_span > frames:
        if not clamp_span:
            raise GridBoundsError(
                f"temporal span {t_span} exceeds {frames} source frames"
            )
        t_span = frames
        t_stride_f = t_span / t
    t_offset = float(rng.integers(0, frames - t_span + 1))

    # Spatial: scale the short side, crop to target.
    scale = float(rng.uniform(ranges.short_side_min, ranges.short_side_max))
    short_side = min(height, width)
    spans = []
    for dim, size in ((h, height), (w, width)):
        span = int(math.floor(dim * short_side / scale + 0.5))
        span = max(1, span)
        if span > size:
            if not clamp_span:
                raise GridBoundsError(f"spatial span {span} exceeds source size {size}")
            span = size
        spans.append(span)
    span_h, span_w = spans
    off_y = float(rng.uniform(0.0, height - span_h))
    off_x = float(rng.uniform(0.0, width - span_w))

    return GridSpec(
        t_span=t_span, t_stride=t_stride_f, t_offset=t_offset,
        s_span_h=span_h, s_span_w=span_w,
        s_stride_h=span_h / h, s_stride_w=span_w / w,
        s_offset_y=off_y, s_offset_x=off_x,
    )


def center_eval_grid(
    source_shape: tuple[int, int, int],
    target: tuple[int, int, int],
    *,
    scale: float,
    t_stride: float,
    t_start: float | None = None,
) -> GridSpec:
    """Deterministic test-time grid: center spatial crop at a fixed scale.

    The spatial crop is the center crop a short-side resize to ``scale``
    would produce; the temporal window starts at ``t_start`` (centered when
    None).  Spans are clamped to the source extent.
    """
    frames, height, width = source_shape
    t, h, w = target
    t_span = min(frames, int(math.floor(t * t_stride + _DIM_EPS)))
    t_stride_f = t_stride if t_span == t * t_stride else t_span / t
    if t_start is None:
        t_start = (frames - t_span) / 2.0
    t_start = min(max(t_start, 0.0), float(frames - t_span))

    short_side = min(height, width)
    span_h = min(height, max(1, int(math.floor(h * short_side / scale + 0.5))))
    span_w = min(width, max(1, int(math.floor(w * short_side / scale + 0.5))))
    return GridSpec(
        t_span=t_span, t_stride=t_stride_f, t_offset=float(t_start),
        s_span_h=span_h, s_span_w=span_w,
        s_stride_h=span_h / h, s_stride_w=span_w / w,
        s_offset_y=(height - span_h) / 2.0,
        s_offset_x=(width - span_w) / 2.0,
    )
