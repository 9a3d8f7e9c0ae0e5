"""Evaluation measures for counts and size histograms, plus the
mean-predicting baseline. All functions take plain numpy arrays."""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .losses import KL_EPS

CSV_COLUMNS = ["method", "MAE", "kld", "wt_L1", "isec", "chi2", "corr", "bhatt"]


def _pair(p, t, require_nonneg=False):
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shapes differ: {p.shape} vs {t.shape}")
    if require_nonneg and ((p < 0).any() or (t < 0).any()):
        raise ValueError("histograms must be nonnegative")
    return p, t


def mae(pred_counts, true_counts):
    p, t = _pair(pred_counts, true_counts)
    if p.size == 0:
        raise ValueError("mae needs at least one image")
    return float(np.abs(p - t).mean())


def isec(pred_hist, true_hist):
    """Histogram intersection: shared mass over the larger total mass."""
    p, t = _pair(pred_hist, true_hist, require_nonneg=True)
    denom = max(p.sum(), t.sum())
    if denom == 0:
        return 1.0  # two empty histograms agree perfectly
    return float(np.minimum(p, t).sum() / denom)


def corr(pred_hist, true_hist):
    """Pearson correlation of the bin vectors; 0 if either is constant."""
    p, t = _pair(pred_hist, true_hist)
    if p.size < 2:
        raise ValueError("correlation needs at least two bins")
    pc = p - p.mean()
    tc = t - t.mean()
    denom = np.sqrt((pc**2).sum() * (tc**2).sum())
    if denom == 0:
        return 0.0
    return float((pc * tc).sum() / denom)


def chi2(pred_hist, true_hist):
    """Symmetric chi-square distance; empty-in-both bins contribute 0."""
    p, t = _pair(pred_hist, true_hist, require_nonneg=True)
    s = p + t
    mask = s > 0
    d = p - t
    return float(((d[mask] ** 2) / s[mask]).sum())


def bhatt(pred_hist, true_hist):
    """Bounded Bhattacharyya distance between the normalized histograms.

    Computed as sqrt(0.5 * sum((sqrt(p) - sqrt(q))^2)), which equals
    sqrt(1 - BC) for probability vectors but stays exact at p == q."""
    p, t = _pair(pred_hist, true_hist, require_nonneg=True)
    n = p.size
    pn = p / p.sum() if p.sum() > 0 else np.full(n, 1.0 / n)
    tn = t / t.sum() if t.sum() > 0 else np.full(n, 1.0 / n)
    h2 = 0.5 * ((np.sqrt(pn) - np.sqrt(tn)) ** 2).sum()
    return float(np.sqrt(min(1.0, h2)))


def kld_metric(pred_hist, true_hist, eps=KL_EPS):
    """KL divergence of bin distributions, target relative to prediction."""
    p, t = _pair(pred_hist, true_hist, require_nonneg=True)
    n = p.size
    pn = p / p.sum() if p.sum() > 0 else np.full(n, 1.0 / n)
    tn = t / t.sum() if t.sum() > 0 else np.full(n, 1.0 / n)
    qp = (pn + eps) / (1.0 + n * eps)
    qt = (tn + eps) / (1.0 + n * eps)
    return float((qt * np.log(qt / qp)).sum())


def wt_l1_metric(pred_hist, true_hist, weights):
    p, t = _pair(pred_hist, true_hist)
    w = np.asarray(weights.weights if hasattr(weights, "weights") else weights, dtype=float)
    if w.shape != p.shape:
        raise ValueError("weight length differs from histogram length")
    return float((w * np.abs(p - t)).sum())


@dataclass
class MetricReport:
    mae: float
    kld: float
    wt_l1: float
    isec: float
    chi2: float
    corr: float
    bhatt: float
    n_images: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self, method):
        vals = [self.mae, self.kld, self.wt_l1, self.isec, self.chi2, self.corr, self.bhatt]
        return ",".join([method] + [f"{v:.6f}" for v in vals])

    @staticmethod
    def csv_header():
        return ",".join(CSV_COLUMNS)


def evaluate(pred_counts, pred_hists, true_counts, true_hists, weights):
    """Average the per-image measures into one MetricReport."""
    pred_counts = np.asarray(pred_counts, dtype=float)
    true_counts = np.asarray(true_counts, dtype=float)
    n = len(pred_counts)
    if n == 0:
        raise ValueError("evaluate needs a nonempty dataset")
    klds, wls, isecs, chis, corrs, bhs = [], [], [], [], [], []
    for p, t in zip(pred_hists, true_hists):
        klds.append(kld_metric(p, t))
        wls.append(wt_l1_metric(p, t, weights))
        isecs.append(isec(p, t))
        chis.append(chi2(p, t))
        corrs.append(corr(p, t))
        bhs.append(bhatt(p, t))
    return MetricReport(
        mae=mae(pred_counts, true_counts),
        kld=float(np.mean(klds)),
        wt_l1=float(np.mean(wls)),
        isec=float(np.mean(isecs)),
        chi2=float(np.mean(chis)),
        corr=float(np.mean(corrs)),
        bhatt=float(np.mean(bhs)),
        n_images=n,
    )


@dataclass
class AverageModel:
    """Baseline that predicts the training set's mean count and histogram."""

    mean_count: float
    mean_hist: np.ndarray


def fit_average_model(train_counts, train_hists):
    counts = np.asarray(train_counts, dtype=float)
    hists = np.asarray(train_hists, dtype=float)
    if counts.size == 0:
        raise ValueError("cannot fit the average model on an empty training set")
    return AverageModel(mean_count=float(counts.mean()), mean_hist=hists.mean(axis=0))


def predict_average(model):
    return model.mean_count, model.mean_hist.copy()
