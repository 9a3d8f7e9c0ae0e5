"""The dual-branch count/histogram network.

The counting branch zero-pads the input so its stride-1 dual-kernel
blocks (a 3x3 and a 1x1 convolution applied to the same input, channel
concatenated) emit a redundant count map of side H + r - 1, where the
analytic receptive field of each output cell is exactly r x r. The
histogram branch forks after the first shared block into pooled
residual stages, a pair of head convolutions, and two fully connected
layers with dropout in between; optional side heads after the first and
second stages emit coarse 2- and 4-bin histograms for deep supervision.
All outputs pass through softplus, so maps and histograms stay
nonnegative and smooth for gradient checking.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .rng import stream

LEAKY_SLOPE = 0.01


@dataclass
class ModelConfig:
    image_size: int = 64
    receptive_field: int = 9
    bins: int = 8
    dsn: bool = False
    dropout: float = 0.3
    shared: tuple = (6, 4)  # (c3, c1) channels of the shared dual block
    count_blocks: tuple = ((8, 2), (8, 2), (8, 2))
    hist_stages: tuple = ((12, 2), (12, 2), (12, 2))  # (channels, pool)
    head_conv3: int = 24
    head_conv1: int = 12
    fc_hidden: int = 48
    dsn_channels: int = 6
    dsn_hidden: int = 12

    def __post_init__(self):
        self.shared = tuple(self.shared)
        self.count_blocks = tuple(tuple(b) for b in self.count_blocks)
        self.hist_stages = tuple(tuple(s) for s in self.hist_stages)
        self.validate()

    def validate(self):
        r = self.receptive_field
        if r % 2 == 0 or r < 3:
            raise ValueError(f"receptive field must be odd and >= 3, got {r}")
        if self.bins not in (8, 16):
            raise ValueError(f"bins must be 8 or 16, got {self.bins}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        n_threes = 1 + len(self.count_blocks)
        if n_threes != (r - 1) // 2:
            raise ValueError(
                f"count branch needs {(r - 1) // 2} 3x3 convolutions for receptive "
                f"field {r}, config has {n_threes}"
            )
        side = self.map_side
        for ch, pool in self.hist_stages:
            if side % pool:
                raise ValueError(
                    f"pooling chain does not divide evenly: {side} % {pool} != 0"
                )
            side //= pool

    @property
    def map_side(self):
        return self.image_size + self.receptive_field - 1

    @classmethod
    def desk(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def tiny(cls, **overrides):
        kwargs = dict(
            image_size=16,
            receptive_field=5,
            bins=8,
            shared=(4, 4),
            count_blocks=((6, 2),),
            hist_stages=((8, 2), (8, 2), (8, 1)),
            head_conv3=8,
            head_conv1=8,
            fc_hidden=16,
            dsn_channels=4,
            dsn_hidden=8,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    @classmethod
    def paper_scale(cls, **overrides):
        # 256 -> 288 arithmetic: sixteen 3x3 convolutions along the count branch
        kwargs = dict(
            image_size=256,
            receptive_field=33,
            bins=16,
            shared=(16, 16),
            count_blocks=tuple([(24, 8)] * 15),
            hist_stages=((32, 2), (64, 2), (64, 2)),
            head_conv3=256,
            head_conv1=16,
            fc_hidden=64,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ModelOutput:
    count_map: object  # Tensor (map_side, map_side)
    hist: object  # Tensor (bins,)
    hist2: object = None
    hist4: object = None

    def detach(self):
        return ModelOutput(
            count_map=self.count_map.numpy().copy(),
            hist=self.hist.numpy().copy(),
            hist2=None if self.hist2 is None else self.hist2.numpy().copy(),
            hist4=None if self.hist4 is None else self.hist4.numpy().copy(),
        )


def _conv_param(rng, c_out, c_in, k):
    fan_in = c_in * k * k
    fan_out = c_out * k * k
    return T.xavier_init((c_out, c_in, k, k), fan_in, fan_out, rng)


def _dense_param(rng, n_out, n_in):
    return T.xavier_init((n_out, n_in), n_in, n_out, rng)


class CountHistogramNet:
    """Parameter container plus the forward pass."""

    def __init__(self, config, rng=None, init=True):
        self.config = config
        self.params = {}
        if init:
            rng = rng if rng is not None else stream(0)
            self._build(rng)

    # -- parameter construction -------------------------------------------
    def _add_conv(self, rng, name, c_out, c_in, k):
        self.params[name + ".k"] = _conv_param(rng, c_out, c_in, k)
        self.params[name + ".b"] = T.parameter(np.zeros(c_out))

    def _add_dense(self, rng, name, n_out, n_in):
        self.params[name + ".w"] = _dense_param(rng, n_out, n_in)
        self.params[name + ".b"] = T.parameter(np.zeros(n_out))

    def _build(self, rng):
        cfg = self.config
        c3, c1 = cfg.shared
        self._add_conv(rng, "shared.c3", c3, 1, 3)
        self._add_conv(rng, "shared.c1", c1, 1, 1)
        ch = c3 + c1

        cch = ch
        for i, (b3, b1) in enumerate(cfg.count_blocks):
            self._add_conv(rng, f"count{i}.c3", b3, cch, 3)
            self._add_conv(rng, f"count{i}.c1", b1, cch, 1)
            cch = b3 + b1
        self._add_conv(rng, "count_out", 1, cch, 1)

        hch = ch
        for i, (sch, _pool) in enumerate(cfg.hist_stages):
            if sch != hch:
                self._add_conv(rng, f"stage{i}.proj", sch, hch, 1)
            self._add_conv(rng, f"stage{i}.conv1", sch, hch, 3)
            self._add_conv(rng, f"stage{i}.conv2", sch, sch, 3)
            hch = sch

        side = cfg.map_side
        for _, pool in cfg.hist_stages:
            side //= pool
        self._add_conv(rng, "head.c3", cfg.head_conv3, hch, 3)
        self._add_conv(rng, "head.c1", cfg.head_conv1, cfg.head_conv3, 1)
        flat = side * side * cfg.head_conv1
        self._add_dense(rng, "head.fc1", cfg.fc_hidden, flat)
        self._add_dense(rng, "head.fc2", cfg.bins, cfg.fc_hidden)

        if cfg.dsn:
            sides = []
            s = cfg.map_side
            for _, pool in cfg.hist_stages:
                s //= pool
                sides.append(s)
            for label, out_bins, stage_idx in (("dsn2", 2, 0), ("dsn4", 4, 1)):
                sch = cfg.hist_stages[stage_idx][0]
                self._add_conv(rng, f"{label}.conv1", cfg.dsn_channels, sch, 3)
                self._add_conv(rng, f"{label}.conv2", cfg.dsn_channels, cfg.dsn_channels, 3)
                flat = sides[stage_idx] ** 2 * cfg.dsn_channels
                self._add_dense(rng, f"{label}.fc1", cfg.dsn_hidden, flat)
                self._add_dense(rng, f"{label}.fc2", out_bins, cfg.dsn_hidden)

    # -- forward ------------------------------------------------------------
    def _conv(self, name, x, pad):
        return T.conv2d(x, self.params[name + ".k"], self.params[name + ".b"], pad=pad)

    def _dense(self, name, x):
        return T.dense(x, self.params[name + ".w"], self.params[name + ".b"])

    def _dual_block(self, name, x, pad3, pad1):
        a = self._conv(name + ".c3", x, pad3)
        b = self._conv(name + ".c1", x, pad1)
        return T.leaky_relu(T.concat_channels(a, b), LEAKY_SLOPE)

    def _residual(self, idx, x):
        y = T.leaky_relu(self._conv(f"stage{idx}.conv1", x, 1), LEAKY_SLOPE)
        y = self._conv(f"stage{idx}.conv2", y, 1)
        skip = x
        if f"stage{idx}.proj.k" in self.params:
            skip = self._conv(f"stage{idx}.proj", x, 0)
        return T.leaky_relu(skip + y, LEAKY_SLOPE)

    def _side_head(self, label, x):
        u = T.leaky_relu(self._conv(f"{label}.conv1", x, 1), LEAKY_SLOPE)
        u = T.leaky_relu(self._conv(f"{label}.conv2", u, 1), LEAKY_SLOPE)
        u = T.leaky_relu(self._dense(f"{label}.fc1", u.flatten()), LEAKY_SLOPE)
        return T.softplus(self._dense(f"{label}.fc2", u))

    def forward(self, image, training=False, rng=None, parts="both"):
        """Run one grayscale image (H, W) through the network.

        `parts` selects which branch(es) to evaluate: "both", "count" or
        "hist"; skipped outputs come back as None.
        """
        cfg = self.config
        img = np.asarray(image.data if isinstance(image, T.Tensor) else image, dtype=float)
        if img.shape != (cfg.image_size, cfg.image_size):
            raise ValueError(
                f"expected a {cfg.image_size}x{cfg.image_size} image, got {img.shape}"
            )
        if training and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        if parts not in ("both", "count", "hist"):
            raise ValueError(f"unknown parts selector {parts!r}")
        x = image if isinstance(image, T.Tensor) else T.tensor(img)
        x = x.reshape(1, cfg.image_size, cfg.image_size)

        p = (cfg.receptive_field - 1) // 2
        shared = self._dual_block("shared", x, pad3=p + 1, pad1=p)

        count_map = None
        if parts in ("both", "count"):
            h = shared
            for i in range(len(cfg.count_blocks)):
                h = self._dual_block(f"count{i}", h, pad3=1, pad1=0)
            # leaky-linear map head: a softplus head saturates under the
            # L1 objective (empty cells dominate 20:1 and drag every
            # weight down until gradients vanish)
            count_map = T.leaky_relu(self._conv("count_out", h, 0), LEAKY_SLOPE)
            count_map = count_map.reshape(cfg.map_side, cfg.map_side)

        hist = hist2 = hist4 = None
        if parts in ("both", "hist"):
            g = shared
            side_feats = []
            for i, (_, pool) in enumerate(cfg.hist_stages):
                if pool > 1:
                    g = T.max_pool2d(g, pool)
                g = self._residual(i, g)
                side_feats.append(g)
            t = T.leaky_relu(self._conv("head.c3", g, 1), LEAKY_SLOPE)
            t = T.leaky_relu(self._conv("head.c1", t, 0), LEAKY_SLOPE)
            t = T.leaky_relu(self._dense("head.fc1", t.flatten()), LEAKY_SLOPE)
            t = T.dropout(t, cfg.dropout, training, rng)
            hist = T.softplus(self._dense("head.fc2", t))
            if cfg.dsn:
                hist2 = self._side_head("dsn2", side_feats[0])
                hist4 = self._side_head("dsn4", side_feats[1])
        return ModelOutput(count_map=count_map, hist=hist, hist2=hist2, hist4=hist4)

    # -- bookkeeping ----------------------------------------------------------
    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def param_names(self):
        return list(self.params.keys())

    def trainable(self, mask="all"):
        """Parameter tensors selected by a stage mask."""
        if mask == "all":
            names = self.param_names()
        elif mask == "count_branch":
            names = [
                n
                for n in self.param_names()
                if n.startswith(("shared.", "count"))
            ]
        else:
            raise ValueError(f"unknown trainable mask {mask!r}")
        return [self.params[n] for n in names]

    def state_arrays(self):
        return {name: p.data for name, p in self.params.items()}

    def predicted_count(self, output):
        r = self.config.receptive_field
        return float(output.count_map.numpy().sum()) / float(r * r)


def save_model(path, net):
    """Checkpoint plus a JSON sidecar holding the architecture config."""
    save_checkpoint(path, net.state_arrays())
    with open(str(path) + ".json", "w") as f:
        json.dump(net.config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path):
    with open(str(path) + ".json") as f:
        config = ModelConfig.from_dict(json.load(f))
    arrays = load_checkpoint(path)
    net = CountHistogramNet(config, init=True, rng=stream(0))
    expected = set(net.params.keys())
    if set(arrays.keys()) != expected:
        raise ValueError(f"{path}: checkpoint tensors do not match the config")
    for name, arr in arrays.items():
        if net.params[name].data.shape != arr.shape:
            raise ValueError(f"{path}: shape mismatch for tensor {name!r}")
        net.params[name].data = arr
    return net
