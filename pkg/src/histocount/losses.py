"""Differentiable training objectives.

The count loss is an (unreduced) L1 over the count-map cells. Histogram
quality is driven by two complementary terms: a KL divergence between
the bin distributions (shape) and a center-weighted L1 on raw bin
counts (scale). The deeply supervised variant adds the same histogram
pair at 2- and 4-bin resolution with fixed side weights.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .tensor import DimensionError, Tensor, tensor
from .targets import bin_edges, bin_weights

KL_EPS = 1e-7

# side-output weights of the deeply supervised objective
MAIN_HIST_WEIGHT = 0.5
SIDE2_WEIGHT = 0.2
SIDE4_WEIGHT = 0.3


@dataclass
class LossReport:
    l_count: float
    l_kl: float
    l_wl: float
    l_total: float
    l_kl2: float = None
    l_wl2: float = None
    l_kl4: float = None
    l_wl4: float = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def _as_tensor(x):
    return x if isinstance(x, Tensor) else tensor(np.asarray(x, dtype=float))


def loss_count(pred_map, target_map):
    """L1 norm of the count-map residual, summed over all cells."""
    pred_map = _as_tensor(pred_map)
    target_map = _as_tensor(target_map)
    if pred_map.shape != target_map.shape:
        raise DimensionError(
            f"count map shapes differ: {pred_map.shape} vs {target_map.shape}"
        )
    return (pred_map - target_map).abs().sum()


def _smoothed_probs(hist, eps):
    """Normalize to a probability vector (all-zero -> uniform), then mix
    in eps per bin and renormalize. Differentiable when given a Tensor."""
    n = hist.shape[-1]
    if isinstance(hist, Tensor):
        total = float(hist.data.sum())
        if total == 0.0:
            p = tensor(np.full(n, 1.0 / n))
        else:
            p = hist / hist.sum()
        return (p + eps) / (1.0 + n * eps)
    total = hist.sum()
    p = hist / total if total > 0 else np.full(n, 1.0 / n)
    return (p + eps) / (1.0 + n * eps)


def loss_kl(pred_hist, target_hist, eps=KL_EPS):
    """KL divergence from the target bin distribution to the predicted one.

    Both histograms are normalized to probabilities first; eps-smoothing
    keeps empty bins inside the logarithm's domain.
    """
    pred_hist = _as_tensor(pred_hist)
    target = np.asarray(
        target_hist.data if isinstance(target_hist, Tensor) else target_hist,
        dtype=float,
    )
    if pred_hist.shape != target.shape:
        raise DimensionError(
            f"histogram lengths differ: {pred_hist.shape} vs {target.shape}"
        )
    if (pred_hist.data < 0).any() or (target < 0).any():
        raise ValueError("histograms must be nonnegative")
    q_t = _smoothed_probs(target, eps)
    q_p = _smoothed_probs(pred_hist, eps)
    log_ratio = tensor(np.log(q_t)) - q_p.log()
    return (tensor(q_t) * log_ratio).sum()


def loss_weighted_l1(pred_hist, target_hist, weights):
    """Center-weighted L1 on raw bin counts (not normalized)."""
    pred_hist = _as_tensor(pred_hist)
    target_hist = _as_tensor(target_hist)
    w = np.asarray(weights.weights if hasattr(weights, "weights") else weights, dtype=float)
    if pred_hist.shape != target_hist.shape or pred_hist.shape[-1] != w.shape[-1]:
        raise DimensionError("histogram/weight lengths differ")
    return ((pred_hist - target_hist).abs() * tensor(w)).sum()


def _hist_weights(bins, s_max):
    return bin_weights(bin_edges(s_max, bins))


def loss_total(outputs, targets, s_max):
    """Joint objective: count L1 plus equally weighted KL and weighted L1.

    Returns (total, report); `total` stays on the autodiff graph.
    """
    w = _hist_weights(outputs.hist.shape[-1], s_max)
    l_count = loss_count(outputs.count_map, targets.count_map)
    l_kl = loss_kl(outputs.hist, targets.hist)
    l_wl = loss_weighted_l1(outputs.hist, targets.hist, w)
    total = l_count + 0.5 * l_kl + 0.5 * l_wl
    report = LossReport(
        l_count=l_count.item(),
        l_kl=l_kl.item(),
        l_wl=l_wl.item(),
        l_total=total.item(),
    )
    return total, report


def loss_total_dsn(outputs, targets, s_max):
    """Joint objective with 2- and 4-bin side supervision added."""
    if outputs.hist2 is None or outputs.hist4 is None:
        raise ValueError("side outputs missing; build the model with dsn enabled")
    w = _hist_weights(outputs.hist.shape[-1], s_max)
    w2 = _hist_weights(2, s_max)
    w4 = _hist_weights(4, s_max)
    l_count = loss_count(outputs.count_map, targets.count_map)
    l_kl = loss_kl(outputs.hist, targets.hist)
    l_wl = loss_weighted_l1(outputs.hist, targets.hist, w)
    l_kl2 = loss_kl(outputs.hist2, targets.hist2)
    l_wl2 = loss_weighted_l1(outputs.hist2, targets.hist2, w2)
    l_kl4 = loss_kl(outputs.hist4, targets.hist4)
    l_wl4 = loss_weighted_l1(outputs.hist4, targets.hist4, w4)
    total = (
        l_count
        + MAIN_HIST_WEIGHT * (l_kl + l_wl)
        + SIDE2_WEIGHT * (l_kl2 + l_wl2)
        + SIDE4_WEIGHT * (l_kl4 + l_wl4)
    )
    report = LossReport(
        l_count=l_count.item(),
        l_kl=l_kl.item(),
        l_wl=l_wl.item(),
        l_total=total.item(),
        l_kl2=l_kl2.item(),
        l_wl2=l_wl2.item(),
        l_kl4=l_kl4.item(),
        l_wl4=l_wl4.item(),
    )
    return total, report
