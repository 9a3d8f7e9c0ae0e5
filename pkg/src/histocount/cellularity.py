"""Staged training of a scalar scene-coverage score on top of the
count/histogram network.

The score proxy is the total instance area normalized by a reference
area and clamped to [0, 1]. Training runs in three stages: the count
branch alone, then the whole network on the joint objective, then a
small two-layer dense head on top of the (frozen) network's histogram
and count predictions.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .datasets import DataError, read_dataset
from .optim import Adam
from .rng import stream
from .tensor import Tensor
from .training import train_network


def synth_score(scene, a_ref=None):
    """Total instance area over a reference area, clamped to [0, 1].

    The reference defaults to half the image area.
    """
    if a_ref is None:
        a_ref = 0.5 * scene.width * scene.height
    if a_ref <= 0:
        raise ValueError("a_ref must be positive")
    return float(min(1.0, max(0.0, scene.total_area() / a_ref)))


class ScoreHead:
    """Two dense layers (default width 64) mapping [histogram ++ count]
    to a score in [0, 1] through a sigmoid output unit."""

    def __init__(self, in_dim, width=64, rng=None):
        rng = rng if rng is not None else stream(0)
        self.width = width
        self.in_dim = in_dim
        self.params = {
            "score.fc1.w": T.xavier_init((width, in_dim), in_dim, width, rng),
            "score.fc1.b": T.parameter(np.zeros(width)),
            "score.fc2.w": T.xavier_init((width, width), width, width, rng),
            "score.fc2.b": T.parameter(np.zeros(width)),
            "score.out.w": T.xavier_init((1, width), width, 1, rng),
            "score.out.b": T.parameter(np.zeros(1)),
        }

    def forward(self, features):
        x = features if isinstance(features, Tensor) else T.tensor(np.asarray(features, dtype=float))
        h = T.leaky_relu(T.dense(x, self.params["score.fc1.w"], self.params["score.fc1.b"]), 0.01)
        h = T.leaky_relu(T.dense(h, self.params["score.fc2.w"], self.params["score.fc2.b"]), 0.01)
        return T.sigmoid(T.dense(h, self.params["score.out.w"], self.params["score.out.b"]))

    def predict(self, features):
        return float(self.forward(features).data[0])

    def trainable(self):
        return list(self.params.values())

    def state_arrays(self):
        return {name: p.data for name, p in self.params.items()}


def head_features(net, image):
    """Histogram prediction concatenated with the map-derived count."""
    out = net.forward(image)
    count = net.predicted_count(out)
    return np.concatenate([out.hist.numpy(), [count]])


@dataclass
class StageSpec:
    stage: int
    epochs: int
    dataset_dir: str
    trainable: str  # "count_branch" | "all" | "head"

    def validate(self):
        if self.trainable not in ("count_branch", "all", "head"):
            raise ValueError(f"unknown trainable mask {self.trainable!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")


@dataclass
class StagePlan:
    stages: list

    def validate(self):
        if not self.stages:
            raise ValueError("a stage plan needs at least one stage")
        for spec in self.stages:
            spec.validate()

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read stage plan {path}: {e}") from e
        stages = [
            StageSpec(
                stage=int(d["stage"]),
                epochs=int(d["epochs"]),
                dataset_dir=str(d["dataset_dir"]),
                trainable=str(d["trainable"]),
            )
            for d in raw
        ]
        plan = cls(stages=stages)
        plan.validate()
        return plan


def train_score_head(net, head, images, scenes, *, epochs, lr=1e-3, seed=0,
                     batch_size=16, a_ref=None):
    """Fit the head with squared-error loss on cached trunk features.

    The trunk runs in inference mode and its parameters receive no
    gradients, so they stay bit-identical.
    """
    feats = np.array([head_features(net, img) for img in images])
    scores = np.array([synth_score(s, a_ref) for s in scenes])
    opt = Adam(head.trainable(), lr=lr)
    history = []
    n = len(images)
    for epoch in range(epochs):
        order = stream(seed, 21, epoch).permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            opt.zero_grad()
            inv = 1.0 / batch.size
            for idx in batch:
                pred = head.forward(feats[idx])
                diff = pred - float(scores[idx])
                loss = (diff * diff).sum()
                (loss * inv).backward()
                losses.append(loss.item())
            opt.step()
        history.append({"epoch": epoch, "score_l2": float(np.mean(losses))})
    return history


def run_stages(plan, net, *, s_max, seed=0, lr=1e-3, batch_size=4,
               augment_data=True, head_width=64, a_ref=None, on_epoch=None,
               on_stage=None):
    """Execute a stage plan on an existing network; returns (head, logs).

    Stage masks: "count_branch" optimizes the count loss on the lower
    branch only, "all" optimizes the joint objective on every network
    parameter, "head" freezes the network and fits the score head.
    """
    plan.validate()
    head = None
    logs = []
    for spec in plan.stages:
        scenes, images, _manifest = read_dataset(spec.dataset_dir)
        if not scenes:
            raise DataError(f"stage {spec.stage} dataset {spec.dataset_dir} is empty")
        if spec.trainable == "head":
            for p in net.params.values():
                p.requires_grad = False
            if head is None:
                head = ScoreHead(net.config.bins + 1, width=head_width,
                                 rng=stream(seed, 20))
            hist = train_score_head(
                net, head, images, scenes,
                epochs=spec.epochs, lr=lr, seed=seed, a_ref=a_ref,
            )
            for p in net.params.values():
                p.requires_grad = True
        else:
            loss_kind = "count" if spec.trainable == "count_branch" else "full"
            hist = train_network(
                net, images, scenes,
                epochs=spec.epochs, s_max=s_max, batch_size=batch_size,
                lr=lr, seed=stream(seed, spec.stage).integers(0, 2**63 - 1),
                augment_data=augment_data, loss_kind=loss_kind,
                trainable_mask=spec.trainable, on_epoch=on_epoch,
            )
        logs.append({"stage": spec.stage, "trainable": spec.trainable, "history": hist})
        if on_stage is not None:
            on_stage(spec.stage, net, head)
    return head, logs


def predict_scores(net, head, images):
    return np.array([head.predict(head_features(net, img)) for img in images])


def concordance(pred_scores, true_scores):
    """Probability that a random pair is ordered the same way by the
    predicted and true scores; tied pairs count one half."""
    p = np.asarray(pred_scores, dtype=float)
    t = np.asarray(true_scores, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("score vectors must be 1-D and equally long")
    n = p.size
    if n < 2:
        raise ValueError("concordance needs at least two scores")
    good = 0.0
    total = 0
    for i in range(n):
        dp = p[i] - p[i + 1 :]
        dt = t[i] - t[i + 1 :]
        s = dp * dt
        good += (s > 0).sum() + 0.5 * (s == 0).sum()
        total += s.size
    return float(good / total)
