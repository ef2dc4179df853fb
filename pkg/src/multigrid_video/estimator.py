"""Estimator-style wrappers around the functional core.

``MultigridVideoClassifier`` exposes plan compilation plus training as a
fit/predict classifier; ``GridResampler`` exposes deterministic resampling
as a transformer.  Both follow the usual conventions (constructor-only
hyperparameters, ``get_params``/``set_params`` from the base class,
trailing-underscore fitted attributes), so they compose with pipelines and
parameter search utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .errors import ShapeError
from .grids import center_eval_grid, check_clip, resample
from .nn.model import VideoNet
from .schedule import CycleConfig, LrSchedule, LrStage, Shape4D, compile
from .trainer import SamplingConfig, TrainParams, to_model_layout, train


def check_videos(X) -> list[np.ndarray]:
    """Validate a collection of videos.

    Accepts a 5-D array (n, t, h, w, c) or a sequence of 4-D arrays with
    possibly different shapes but a common channel count.  Returns a list
    of float32 arrays.
    """
    if isinstance(X, np.ndarray):
        if X.ndim != 5:
            raise ShapeError(
                f"expected videos as (n, t, h, w, c) or a list of 4-D arrays, "
                f"got array with shape {X.shape}")
        videos = [X[i] for i in range(X.shape[0])]
    else:
        videos = list(X)
    if not videos:
        raise ShapeError("need at least one video")
    out = [check_clip(v, name=f"videos[{i}]") for i, v in enumerate(videos)]
    channels = {v.shape[-1] for v in out}
    if len(channels) > 1:
        raise ShapeError(f"videos have mixed channel counts: {sorted(channels)}")
    return out


class ArrayVideos:
    """Adapter presenting in-memory arrays as a lazy dataset."""

    def __init__(self, videos: list[np.ndarray], labels: np.ndarray,
                 num_classes: int):
        self._videos = videos
        self._labels = labels
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self._videos)

    def label(self, index: int) -> int:
        return int(self._labels[index])

    def render(self, index: int) -> np.ndarray:
        return self._videos[index]


class GridResampler(TransformerMixin, BaseEstimator):
    """Resample every video to a fixed shape with a centered grid.

    Parameters
    ----------
    target : tuple of (t, h, w), output clip shape.
    scale : short-side scale of the spatial crop; the source short side
        when None (pure center crop).
    t_stride : frame stride of the temporal window.
    """

    def __init__(self, target=(8, 32, 32), scale=None, t_stride=1.0):
        self.target = target
        self.scale = scale
        self.t_stride = t_stride

    def fit(self, X, y=None):
        check_videos(X)
        return self

    def transform(self, X) -> np.ndarray:
        videos = check_videos(X)
        t, h, w = self.target
        out = []
        for video in videos:
            scale = self.scale
            if scale is None:
                scale = min(video.shape[1], video.shape[2])
            grid = center_eval_grid(
                video.shape[:3], (t, h, w),
                scale=float(scale), t_stride=float(self.t_stride))
            out.append(resample(video, grid))
        return np.stack(out)


class MultigridVideoClassifier(ClassifierMixin, BaseEstimator):
    """Video classifier trained under a variable-shape schedule.

    ``fit`` compiles a plan from the constructor's recipe and trains the
    bundled convolutional network on the given videos; ``predict`` scores
    centered base-shape clips.  With both cycles disabled this is a plain
    fixed-shape training run, which makes ablations a one-parameter change.

    Parameters mirror the run-config schema: ``stages`` is a tuple of
    (learning rate, iterations) pairs, ``epoch_multiplier`` scales the clip
    budget, and the ``short_side_*``/``t_stride`` values control sampling
    augmentation.  ``random_state`` seeds weight init and batch sampling.
    """

    def __init__(
        self,
        base_shape=(8, 8, 32, 32),
        stages=((0.02, 300), (0.002, 200)),
        warmup_iters=0,
        warmup_start_lr=0.0,
        lr_mode="step",
        long_cycle=True,
        short_cycle=True,
        cycle_mode="multi",
        epoch_multiplier=1.0,
        momentum=0.9,
        weight_decay=1e-4,
        short_side_min=None,
        short_side_max=None,
        t_stride=1.0,
        bn_base=8,
        widths=(8, 16, 32),
        random_state=0,
    ):
        self.base_shape = base_shape
        self.stages = stages
        self.warmup_iters = warmup_iters
        self.warmup_start_lr = warmup_start_lr
        self.lr_mode = lr_mode
        self.long_cycle = long_cycle
        self.short_cycle = short_cycle
        self.cycle_mode = cycle_mode
        self.epoch_multiplier = epoch_multiplier
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.short_side_min = short_side_min
        self.short_side_max = short_side_max
        self.t_stride = t_stride
        self.bn_base = bn_base
        self.widths = widths
        self.random_state = random_state

    def _sampling(self, base: Shape4D) -> SamplingConfig:
        short = min(base.h, base.w)
        s_min = self.short_side_min
        s_max = self.short_side_max
        if s_min is None:
            s_min = round(short * 9 / 8)
        if s_max is None:
            s_max = round(short * 3 / 2)
        return SamplingConfig(short_side_min=float(s_min),
                              short_side_max=float(s_max),
                              t_stride_min=float(self.t_stride))

    def fit(self, X, y):
        videos = check_videos(X)
        y = np.asarray(y)
        if y.shape != (len(videos),):
            raise ShapeError(
                f"labels must be one per video: {y.shape} vs {len(videos)} videos")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ShapeError("need at least 2 classes to fit")

        base = Shape4D(*self.base_shape)
        schedule = LrSchedule(
            stages=tuple(LrStage(lr=float(a), iters=int(b))
                         for a, b in self.stages),
            warmup_iters=int(self.warmup_iters),
            warmup_start_lr=float(self.warmup_start_lr),
            mode=self.lr_mode,
        )
        cycles = CycleConfig(
            long_cycle=bool(self.long_cycle),
            short_cycle=bool(self.short_cycle),
            mode=self.cycle_mode,
            epoch_multiplier=float(self.epoch_multiplier),
        )
        self.plan_ = compile(base, schedule, cycles, dataset_size=len(videos),
                             bn_base=int(self.bn_base))

        dataset = ArrayVideos(videos, encoded, num_classes=len(self.classes_))
        self.model_ = VideoNet(
            num_classes=len(self.classes_),
            in_channels=videos[0].shape[-1],
            widths=tuple(self.widths),
            seed=int(self.random_state),
        )
        params = TrainParams(sampling=self._sampling(base),
                             momentum=float(self.momentum),
                             weight_decay=float(self.weight_decay))
        result = train(self.plan_, self.model_, dataset, params,
                       seed=int(self.random_state))
        self.final_loss_ = result.summary["final_loss"]
        self.n_features_in_ = videos[0][0].size
        return self

    def _scores(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise ShapeError("this classifier is not fitted yet; call fit first")
        videos = check_videos(X)
        base = Shape4D(*self.base_shape)
        clips = []
        for video in videos:
            grid = center_eval_grid(
                video.shape[:3], (base.t, base.h, base.w),
                scale=min(video.shape[1], video.shape[2]),
                t_stride=float(self.t_stride))
            clips.append(resample(video, grid))
        logits = self.model_.predict_logits(to_model_layout(np.stack(clips)))
        return logits

    def decision_function(self, X) -> np.ndarray:
        return self._scores(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self._scores(X).astype(np.float64)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def predict(self, X) -> np.ndarray:
        scores = self._scores(X)
        return self.classes_[np.argmax(scores, axis=1)]
