"""scikit-learn style estimators wrapping the network and the baseline.

X is a stack of grayscale images (n_samples, H, W) with values in
[0, 1]; y is the matching sequence of Scene annotations. `fit` trains,
`predict` returns per-image object counts, and the histogram/count-map
predictions come from the dedicated predict_* methods so the estimators
compose with ordinary sklearn tooling (get_params, clone, CV splits).
"""

import numpy as np
from sklearn.base import BaseEstimator

from .metrics import evaluate, fit_average_model, mae
from .network import CountHistogramNet, ModelConfig
from .rng import stream
from .scenes import REFERENCE_AREA_MEAN, REFERENCE_AREA_STD
from .targets import (
    bin_edges,
    bin_weights,
    build_histograms,
    default_s_max,
)
from .training import train_network


def check_images(X):
    """Validate an image stack: 3-D, square, finite, values in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected images of shape (n, H, W), got {X.shape}")
    if X.shape[1] != X.shape[2]:
        raise ValueError(f"images must be square, got {X.shape[1]}x{X.shape[2]}")
    if not np.isfinite(X).all():
        raise ValueError("images contain non-finite values")
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("image intensities must lie in [0, 1]")
    return X


def check_images_scenes(X, y):
    X = check_images(X)
    y = list(y)
    if len(y) != X.shape[0]:
        raise ValueError(f"got {X.shape[0]} images but {len(y)} scenes")
    return X, y


def targets_from_scenes(scenes, s_max, bins):
    """Per-scene (count, histogram) arrays used for fitting and scoring."""
    counts = np.array([s.count for s in scenes], dtype=float)
    hists = np.array(
        [build_histograms(s, s_max).level(bins) for s in scenes], dtype=float
    )
    return counts, hists


def _resolve_s_max(s_max):
    if s_max is not None:
        return float(s_max)
    return default_s_max(REFERENCE_AREA_MEAN, REFERENCE_AREA_STD)


class CountHistogramRegressor(BaseEstimator):
    """Trainable joint count/size-histogram predictor.

    Parameters mirror the training recipe: architecture scale ("desk"
    or "tiny"), histogram resolution, deep supervision, and optimizer
    settings. The upper size-histogram bound s_max defaults to the
    reference area moments when not given.
    """

    def __init__(
        self,
        bins=8,
        dsn=False,
        receptive_field=9,
        arch="desk",
        epochs=10,
        batch_size=4,
        lr=1e-3,
        dropout=0.3,
        augment=True,
        val_frac=0.0,
        s_max=None,
        seed=0,
    ):
        self.bins = bins
        self.dsn = dsn
        self.receptive_field = receptive_field
        self.arch = arch
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dropout = dropout
        self.augment = augment
        self.val_frac = val_frac
        self.s_max = s_max
        self.seed = seed

    def _make_config(self, image_size):
        base = {"desk": ModelConfig.desk, "tiny": ModelConfig.tiny}
        if self.arch not in base:
            raise ValueError(f"unknown arch {self.arch!r}")
        return base[self.arch](
            image_size=image_size,
            receptive_field=self.receptive_field,
            bins=self.bins,
            dsn=self.dsn,
            dropout=self.dropout,
        )

    def fit(self, X, y, on_epoch=None):
        X, y = check_images_scenes(X, y)
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        config = self._make_config(int(X.shape[1]))
        self.s_max_ = _resolve_s_max(self.s_max)
        self.net_ = CountHistogramNet(config, stream(self.seed, 0))
        self.n_params_ = self.net_.n_params
        self.history_ = train_network(
            self.net_,
            list(X),
            y,
            epochs=self.epochs,
            s_max=self.s_max_,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            augment_data=self.augment,
            val_frac=self.val_frac,
            on_epoch=on_epoch,
        )
        return self

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise RuntimeError("estimator is not fitted; call fit() first")

    def adopt(self, net, s_max=None):
        """Wrap an externally trained or loaded network."""
        self.net_ = net
        self.n_params_ = net.n_params
        self.s_max_ = _resolve_s_max(self.s_max if s_max is None else s_max)
        self.history_ = []
        return self

    def predict(self, X):
        """Object counts recovered from the predicted count maps."""
        self._require_fitted()
        X = check_images(X)
        out = np.empty(X.shape[0])
        for i, image in enumerate(X):
            o = self.net_.forward(image, parts="count")
            out[i] = self.net_.predicted_count(o)
        return out

    def predict_histogram(self, X):
        self._require_fitted()
        X = check_images(X)
        out = np.empty((X.shape[0], self.net_.config.bins))
        for i, image in enumerate(X):
            o = self.net_.forward(image, parts="hist")
            out[i] = o.hist.numpy()
        return out

    def predict_count_map(self, X):
        self._require_fitted()
        X = check_images(X)
        side = self.net_.config.map_side
        out = np.empty((X.shape[0], side, side))
        for i, image in enumerate(X):
            o = self.net_.forward(image, parts="count")
            out[i] = o.count_map.numpy()
        return out

    def predict_full(self, image):
        """Detached ModelOutput for one image (both branches)."""
        self._require_fitted()
        return self.net_.forward(np.asarray(image, dtype=float)).detach()

    def score(self, X, y):
        """Negative mean absolute count error (higher is better)."""
        counts = np.array([s.count for s in y], dtype=float)
        return -mae(self.predict(X), counts)

    def bin_weights_(self):
        self._require_fitted()
        return bin_weights(bin_edges(self.s_max_, self.net_.config.bins))


class AverageBaseline(BaseEstimator):
    """Predicts the training set's mean count and mean histogram for
    every test image."""

    def __init__(self, bins=8, s_max=None):
        self.bins = bins
        self.s_max = s_max

    def fit(self, X, y):
        X, y = check_images_scenes(X, y)
        self.s_max_ = _resolve_s_max(self.s_max)
        counts, hists = targets_from_scenes(y, self.s_max_, self.bins)
        self.model_ = fit_average_model(counts, hists)
        return self

    def predict(self, X):
        X = check_images(X)
        return np.full(X.shape[0], self.model_.mean_count)

    def predict_histogram(self, X):
        X = check_images(X)
        return np.tile(self.model_.mean_hist, (X.shape[0], 1))

    def score(self, X, y):
        counts = np.array([s.count for s in y], dtype=float)
        return -mae(self.predict(X), counts)


def evaluate_estimator(est, X, scenes):
    """MetricReport of an estimator on labeled images."""
    X = check_images(X)
    bins = est.net_.config.bins if hasattr(est, "net_") else est.bins
    s_max = est.s_max_
    true_counts, true_hists = targets_from_scenes(scenes, s_max, bins)
    pred_counts = est.predict(X)
    pred_hists = est.predict_histogram(X)
    weights = bin_weights(bin_edges(s_max, bins))
    return evaluate(pred_counts, pred_hists, true_counts, true_hists, weights)
