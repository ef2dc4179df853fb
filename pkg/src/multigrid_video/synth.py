"""Synthetic labeled videos: a Gaussian blob drifting on a torus.

The class determines motion (four axis-aligned directions crossed with a
speed table), so a classifier must integrate over time to do better than
chance.  Content is a deterministic function of (seed, video index): videos
are rendered on demand and never materialized as a whole dataset, which
keeps memory flat no matter how many videos a spec declares.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from . import clipbin
from .errors import ConfigError
from .grids import GridSampleRanges, draw_training_grid, resample
from .rng import STREAM_VIDEO, stream_rng

_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))


@runtime_checkable
class VideoDataset(Protocol):
    """What the trainer needs from a dataset: count, labels, lazy frames."""

    num_classes: int

    def __len__(self) -> int: ...

    def label(self, index: int) -> int: ...

    def render(self, index: int) -> np.ndarray: ...


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic video collection."""

    num_videos: int
    num_classes: int
    frames: int
    height: int
    width: int
    channels: int = 1
    blob_radius: float = 5.0
    noise_sigma: float = 0.1
    speeds: tuple[float, ...] = (1.0, 2.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "speeds", tuple(self.speeds))
        if self.num_videos < 1:
            raise ConfigError(f"num_videos must be positive, got {self.num_videos}")
        if min(self.frames, self.height, self.width, self.channels) < 1:
            raise ConfigError(f"video shape must be positive: {self}")
        if self.blob_radius <= 0:
            raise ConfigError(f"blob_radius must be positive, got {self.blob_radius}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.speeds:
            raise ConfigError("speeds must be non-empty")
        limit = len(_DIRECTIONS) * len(self.speeds)
        if not 2 <= self.num_classes <= limit:
            raise ConfigError(
                f"num_classes must be in [2, {limit}] "
                f"({len(_DIRECTIONS)} directions x {len(self.speeds)} speeds), "
                f"got {self.num_classes}"
            )


def velocity_for_class(spec: SynthSpec, cls: int) -> tuple[float, float]:
    """(vy, vx) in pixels per frame for a class index."""
    dy, dx = _DIRECTIONS[cls % len(_DIRECTIONS)]
    speed = spec.speeds[cls // len(_DIRECTIONS)]
    return dy * speed, dx * speed


class SyntheticVideos:
    """Lazy dataset of blob videos; video i is a pure function of (seed, i)."""

    def __init__(self, spec: SynthSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.num_classes = spec.num_classes

    def __len__(self) -> int:
        return self.spec.num_videos

    def label(self, index: int) -> int:
        if not 0 <= index < self.spec.num_videos:
            raise IndexError(index)
        return index % self.spec.num_classes

    def render(self, index: int) -> np.ndarray:
        """Render video `index` as float32 (frames, height, width, channels)."""
        spec = self.spec
        rng = stream_rng(self.seed, STREAM_VIDEO, index)
        cy0 = rng.uniform(0.0, spec.height)
        cx0 = rng.uniform(0.0, spec.width)
        if spec.noise_sigma > 0:
            noise = rng.normal(
                0.0, spec.noise_sigma,
                size=(spec.frames, spec.height, spec.width)).astype(np.float32)
        else:
            noise = None

        vy, vx = velocity_for_class(spec, self.label(index))
        f = np.arange(spec.frames, dtype=np.float64)
        cy = cy0 + vy * f
        cx = cx0 + vx * f
        # Toroidal offsets: distance to the blob center along the shortest
        # wrap-around path, so motion never hits a boundary.
        ys = np.arange(spec.height, dtype=np.float64)
        xs = np.arange(spec.width, dtype=np.float64)
        dy = (ys[None, :] - cy[:, None] + spec.height / 2.0) % spec.height \
            - spec.height / 2.0
        dx = (xs[None, :] - cx[:, None] + spec.width / 2.0) % spec.width \
            - spec.width / 2.0
        inv = 1.0 / (2.0 * spec.blob_radius ** 2)
        gy = np.exp(-dy * dy * inv).astype(np.float32)
        gx = np.exp(-dx * dx * inv).astype(np.float32)
        video = np.einsum("fh,fw->fhw", gy, gx)
        if noise is not None:
            video += noise
        if spec.channels == 1:
            return video[..., None]
        return np.repeat(video[..., None], spec.channels, axis=-1)


def generate(spec: SynthSpec, seed: int) -> SyntheticVideos:
    """Build a lazy synthetic dataset for a spec and seed."""
    return SyntheticVideos(spec, seed)


def labels_array(dataset: VideoDataset) -> np.ndarray:
    return np.array([dataset.label(i) for i in range(len(dataset))], dtype=np.int64)


def next_batch(
    dataset: VideoDataset,
    batch_size: int,
    target: tuple[int, int, int],
    ranges: GridSampleRanges,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample one training mini-batch.

    Videos are drawn with replacement, then each gets its own randomized
    sampling grid.  Generator call order is fixed (one index draw, then
    grids in batch order), so a batch is fully determined by the generator
    state coming in.

    Returns:
        (clips, labels): float32 (batch, t, h, w, channels) and int64 (batch,).
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    idx = rng.integers(0, len(dataset), size=batch_size)
    clips = np.empty(0)
    labels = np.empty(batch_size, dtype=np.int64)
    for j, i in enumerate(idx):
        video = dataset.render(int(i))
        grid = draw_training_grid(video.shape[:3], target, ranges, rng)
        clip = resample(video, grid)
        if clips.size == 0:
            clips = np.empty((batch_size,) + clip.shape, dtype=np.float32)
        clips[j] = clip
        labels[j] = dataset.label(int(i))
    return clips, labels


class StoredVideos:
    """Dataset backed by per-video clip files written by ``dump``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise ConfigError(f"no manifest.json under {self.root}")
        manifest = json.loads(manifest_path.read_text())
        try:
            self._files = list(manifest["files"])
            self._labels = [int(v) for v in manifest["labels"]]
            self.num_classes = int(manifest["num_classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{manifest_path}: malformed manifest: {exc}") from exc
        if len(self._files) != len(self._labels):
            raise ConfigError(f"{manifest_path}: files/labels length mismatch")

    def __len__(self) -> int:
        return len(self._files)

    def label(self, index: int) -> int:
        return self._labels[index]

    def render(self, index: int) -> np.ndarray:
        return clipbin.read_clipbin(self.root / self._files[index])


def dump(dataset: VideoDataset, out_dir: str | Path,
         indices: list[int] | None = None) -> Path:
    """Write a dataset (or a subset) as clip files plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if indices is None:
        indices = list(range(len(dataset)))
    files, labels = [], []
    for i in indices:
        name = f"video_{i:05d}.clb"
        clipbin.write_clipbin(out / name, dataset.render(i))
        files.append(name)
        labels.append(dataset.label(i))
    manifest = {
        "num_classes": dataset.num_classes,
        "files": files,
        "labels": labels,
    }
    if isinstance(dataset, SyntheticVideos):
        manifest["synth_spec"] = asdict(dataset.spec)
        manifest["seed"] = dataset.seed
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load(root: str | Path) -> StoredVideos:
    """Open a directory written by ``dump`` as a lazy dataset."""
    return StoredVideos(root)
