"""Training targets derived from scene annotations: the redundant count
map (full correlation of the instance-center indicator with an r x r
ones kernel) and the nested 16/8/4/2-bin size-histogram ladder."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class CountMap:
    grid: np.ndarray  # (H+r-1, W+r-1), nonnegative
    r: int


@dataclass
class BinLadder:
    s_max: float
    hist16: np.ndarray
    hist8: np.ndarray
    hist4: np.ndarray
    hist2: np.ndarray

    def level(self, bins):
        return {16: self.hist16, 8: self.hist8, 4: self.hist4, 2: self.hist2}[bins]


@dataclass
class BinWeights:
    weights: np.ndarray  # sums to 1, proportional to bin centers


def default_s_max(area_mean, area_std):
    """mean + 4 sigma, rounded up so all 16 bins have integer width."""
    return 16.0 * math.ceil((area_mean + 4.0 * area_std) / 16.0)


def bin_edges(s_max, bins):
    return np.linspace(0.0, s_max, bins + 1)


def bin_weights(edges):
    """Per-bin weights: bin centers normalized to sum to one."""
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        raise ValueError("need at least one bin")
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinWeights(weights=centers / centers.sum())


def merge_pairs(hist):
    hist = np.asarray(hist, dtype=float)
    if hist.size % 2:
        raise ValueError("pairwise merge needs an even bin count")
    return hist.reshape(-1, 2).sum(axis=1)


def rounded_center(inst):
    return int(math.floor(inst.cx + 0.5)), int(math.floor(inst.cy + 0.5))


def center_indicator(scene):
    """Integer grid with one increment per instance at its rounded center."""
    ind = np.zeros((scene.height, scene.width))
    for inst in scene.instances:
        x, y = rounded_center(inst)
        x = min(max(x, 0), scene.width - 1)
        y = min(max(y, 0), scene.height - 1)
        ind[y, x] += 1.0
    return ind


def build_count_map(scene, r):
    """Full cross-correlation of the center indicator with an r x r ones
    kernel; output side grows to H + r - 1, and the grid sums to
    r^2 times the instance count."""
    if r % 2 == 0:
        raise ValueError(f"receptive field must be odd, got {r}")
    if r >= min(scene.height, scene.width):
        raise ValueError("receptive field must be smaller than the image")
    ind = center_indicator(scene)
    padded = np.pad(ind, r - 1)
    # box sums via a summed-area table; exact for integer-valued inputs
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    np.cumsum(padded, axis=0, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    grid = (
        sat[r:, r:] - sat[:-r, r:] - sat[r:, :-r] + sat[:-r, :-r]
    )
    return CountMap(grid=grid, r=r)


def count_from_map(count_map):
    """Recover the scene count: grid sum divided by the kernel area."""
    return float(count_map.grid.sum()) / float(count_map.r**2)


def build_histograms(scene, s_max):
    """16-bin area histogram on [0, s_max) plus its pairwise merges.

    Areas at or above s_max clamp into the last bin, so every level sums
    to the instance count."""
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    hist16 = np.zeros(16)
    for inst in scene.instances:
        idx = int(inst.area_px * 16.0 / s_max)
        hist16[min(max(idx, 0), 15)] += 1.0
    hist8 = merge_pairs(hist16)
    hist4 = merge_pairs(hist8)
    hist2 = merge_pairs(hist4)
    return BinLadder(s_max=float(s_max), hist16=hist16, hist8=hist8, hist4=hist4, hist2=hist2)


@dataclass
class TrainingTargets:
    """Everything the losses need for one scene."""

    count_map: np.ndarray
    hist: np.ndarray
    hist2: np.ndarray
    hist4: np.ndarray
    count: float
    ladder: BinLadder


def make_training_targets(scene, r, s_max, bins):
    ladder = build_histograms(scene, s_max)
    cmap = build_count_map(scene, r)
    return TrainingTargets(
        count_map=cmap.grid,
        hist=ladder.level(bins),
        hist2=ladder.hist2,
        hist4=ladder.hist4,
        count=float(scene.count),
        ladder=ladder,
    )
