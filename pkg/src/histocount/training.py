"""Seeded minibatch training.

Every source of randomness (shuffles, augmentation draws, dropout
masks) derives from the master seed, so a run is a pure function of
(data, config, seed) and repeats bit-identically.
"""

import numpy as np

from .losses import LossReport, loss_count, loss_total, loss_total_dsn
from .optim import Adam
from .rng import stream
from .scenes import GEOMETRIC_KINDS, augment
from .targets import make_training_targets


def _augment_sample(image, scene, rng):
    kind_idx = rng.integers(0, len(GEOMETRIC_KINDS) + 1)
    if kind_idx > 0:
        image, scene = augment(image, scene, GEOMETRIC_KINDS[kind_idx - 1], rng)
    if rng.random() < 0.5:
        image, scene = augment(image, scene, "noise", rng)
    if rng.random() < 0.5:
        image, scene = augment(image, scene, "contrast", rng)
    return image, scene


def _mean_report(reports):
    if not reports:
        return None
    keys = reports[0].to_dict().keys()
    out = {}
    for k in keys:
        out[k] = float(np.mean([r.to_dict()[k] for r in reports]))
    return out


def _sample_loss(net, image, scene, s_max, loss_kind, training, drop_rng):
    cfg = net.config
    if loss_kind == "count":
        out = net.forward(image, training=training, rng=drop_rng, parts="count")
        tgt = make_training_targets(scene, cfg.receptive_field, s_max, cfg.bins)
        total = loss_count(out.count_map, tgt.count_map)
        report = LossReport(
            l_count=total.item(), l_kl=0.0, l_wl=0.0, l_total=total.item()
        )
        return total, report
    out = net.forward(image, training=training, rng=drop_rng)
    tgt = make_training_targets(scene, cfg.receptive_field, s_max, cfg.bins)
    if cfg.dsn:
        return loss_total_dsn(out, tgt, s_max)
    return loss_total(out, tgt, s_max)


def evaluate_loss(net, images, scenes, s_max, loss_kind="full"):
    """Mean LossReport over a dataset with dropout disabled."""
    reports = []
    for image, scene in zip(images, scenes):
        _, rep = _sample_loss(net, image, scene, s_max, loss_kind, False, None)
        reports.append(rep)
    return _mean_report(reports)


def train_network(
    net,
    images,
    scenes,
    *,
    epochs,
    s_max,
    batch_size=4,
    lr=1e-3,
    lr_decay=1.0,
    seed=0,
    augment_data=True,
    val_frac=0.0,
    loss_kind="full",
    trainable_mask="all",
    on_epoch=None,
):
    """Adam training; returns the per-epoch history of loss reports.

    `loss_kind` is "full" (joint objective, deep supervision when the
    model was built with it) or "count" (count branch alone);
    `trainable_mask` limits the updated parameters so staged schedules
    can freeze branches. `lr_decay` multiplies the learning rate once
    per epoch (1.0 keeps it constant); an L1 objective under Adam
    jitters at the lr scale, so decaying it settles the late epochs.
    """
    n = len(images)
    if n == 0:
        raise ValueError("training needs a nonempty dataset")
    if len(scenes) != n:
        raise ValueError("images and scenes must align")

    perm = stream(seed, 10).permutation(n)
    n_val = int(round(val_frac * n))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("validation split leaves no training data")

    opt = Adam(net.trainable(trainable_mask), lr=lr)
    history = []
    for epoch in range(epochs):
        opt.state.lr = lr * lr_decay**epoch
        order = stream(seed, 11, epoch).permutation(train_idx)
        aug_rng = stream(seed, 12, epoch)
        drop_rng = stream(seed, 13, epoch)
        reports = []
        for start in range(0, order.size, batch_size):
            batch = order[start : start + batch_size]
            opt.zero_grad()
            inv = 1.0 / batch.size
            for idx in batch:
                image, scene = images[idx], scenes[idx]
                if augment_data:
                    image, scene = _augment_sample(image, scene, aug_rng)
                total, report = _sample_loss(
                    net, image, scene, s_max, loss_kind, True, drop_rng
                )
                (total * inv).backward()
                reports.append(report)
            opt.step()
        entry = {"epoch": epoch, "train": _mean_report(reports)}
        if val_idx.size:
            entry["val"] = evaluate_loss(
                net, [images[i] for i in val_idx], [scenes[i] for i in val_idx],
                s_max, loss_kind,
            )
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
    return history


def nested_fraction_indices(n, fractions, seed):
    """Deterministic nested training subsets, one per fraction."""
    perm = stream(seed, 77).permutation(n)
    subsets = {}
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"fraction {f} outside (0, 1]")
        k = max(1, int(round(f * n)))
        subsets[f] = np.sort(perm[:k])
    return subsets
