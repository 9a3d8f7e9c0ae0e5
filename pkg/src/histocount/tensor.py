"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough machinery for a small convolutional network: elementwise
arithmetic, dense and conv layers, max pooling, channel concatenation,
dropout, and a finite-difference gradient checker. Everything runs on
numpy arrays in double precision; any op producing a non-finite value
raises instead of propagating NaN/Inf.
"""

import numpy as np

__all__ = [
    "Tensor",
    "NumericError",
    "GraphError",
    "DimensionError",
    "tensor",
    "parameter",
    "concat_channels",
    "conv2d",
    "dense",
    "dropout",
    "leaky_relu",
    "max_pool2d",
    "softplus",
    "sigmoid",
    "xavier_init",
    "gradcheck",
]


class NumericError(ArithmeticError):
    """A forward op produced NaN/Inf, or a gradient was non-finite."""


class GraphError(RuntimeError):
    """Misuse of the autodiff graph (e.g. backward called twice)."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy float64 array plus the bookkeeping for backprop.

    Each tensor produced by an op remembers its input tensors and a
    backward rule; ``backward()`` on a scalar result replays the
    recorded rules in reverse topological order, accumulating into the
    ``grad`` arrays of every tensor that requires gradients.
    """

    def __init__(self, data, requires_grad=False, _children=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._children = _children
        self._backward = None
        self._op = _op
        self._backward_done = False

    # ------------------------------------------------------------------
    # basic introspection
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    # ------------------------------------------------------------------
    # graph construction
    @staticmethod
    def _lift(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise GraphError("backward() requires a scalar output")
        if self._backward_done:
            raise GraphError(
                "backward() already ran on this output; re-run the forward pass first"
            )
        self._backward_done = True

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._children:
                if id(child) not in visited:
                    stack.append((child, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # arithmetic
    def __add__(self, other):
        other = Tensor._lift(other)
        out = _result(self.data + other.data, (self, other), "add")

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _result(-self.data, (self,), "neg")

        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        out._backward = backward
        return out

    def __sub__(self, other):
        other = Tensor._lift(other)
        out = _result(self.data - other.data, (self, other), "sub")

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.shape))

        out._backward = backward
        return out

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = _result(self.data * other.data, (self, other), "mul")

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out = _result(self.data / other.data, (self, other), "div")

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data**2, other.shape)
                )

        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def abs(self):
        out = _result(np.abs(self.data), (self,), "abs")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * np.sign(self.data))

        out._backward = backward
        return out

    def log(self):
        out = _result(np.log(self.data), (self,), "log")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g / self.data)

        out._backward = backward
        return out

    def sum(self):
        out = _result(self.data.sum(), (self,), "sum")

        def backward(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, float(g)))

        out._backward = backward
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = _result(self.data.reshape(shape), (self,), "reshape")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(old))

        out._backward = backward
        return out

    def flatten(self):
        return self.reshape(self.size)


def _result(data, children, op):
    data = np.asarray(data, dtype=np.float64)
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite values produced by op '{op}'")
    requires = any(c.requires_grad for c in children)
    return Tensor(data, requires_grad=requires, _children=children, _op=op)


def tensor(data):
    """Wrap data in a constant (non-trainable) tensor."""
    return Tensor(data)


def parameter(data):
    """Wrap data in a trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


# ----------------------------------------------------------------------
# activations


def leaky_relu(x, slope=0.01):
    """Elementwise max(x, slope*x); the kink at 0 takes the negative branch."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must be in [0, 1), got {slope}")
    out = _result(np.where(x.data > 0, x.data, slope * x.data), (x,), "leaky_relu")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.where(x.data > 0, 1.0, slope))

    out._backward = backward
    return out


def softplus(x):
    """log(1 + exp(x)), computed stably; smooth nonnegativity activation."""
    out = _result(np.logaddexp(0.0, x.data), (x,), "softplus")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / (1.0 + np.exp(-x.data)))

    out._backward = backward
    return out


def sigmoid(x):
    s = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.clip(x.data, 0, None))),
        np.exp(np.clip(x.data, None, 0)) / (1.0 + np.exp(np.clip(x.data, None, 0))),
    )
    out = _result(s, (x,), "sigmoid")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    out._backward = backward
    return out


# ----------------------------------------------------------------------
# layers


def dense(x, weight, bias):
    """Affine map: weight @ x + bias for a vector x, batched over rows.

    x may be shape (n,) or (N, n); weight is (m, n), bias (m,).
    """
    if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
        raise DimensionError(
            f"dense weight/bias shapes do not conform: {weight.shape} vs {bias.shape}"
        )
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"dense input width {x.shape[-1]} != weight width {weight.shape[1]}"
        )
    batched = x.ndim == 2
    y = x.data @ weight.data.T + bias.data
    out = _result(y, (x, weight, bias), "dense")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            if batched:
                weight._accumulate(g.T @ x.data)
            else:
                weight._accumulate(np.outer(g, x.data))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0) if batched else g)

    out._backward = backward
    return out


def _pad_hw(a, pad):
    if pad == 0:
        return np.ascontiguousarray(a)
    width = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(a, width)


def _correlate(xp, k):
    """Stride-1 valid cross-correlation of (N, C, Hp, Wp) with (O, C, kh, kw).

    3x3 kernels take the compiled direct path, 1x1 a plain GEMM, and
    everything else the window-view einsum."""
    kh, kw = k.shape[-2:]
    if (kh, kw) == (3, 3):
        from ._conv_kernels import conv3x3_forward

        return conv3x3_forward(xp, np.ascontiguousarray(k))
    if (kh, kw) == (1, 1):
        y = np.tensordot(k[:, :, 0, 0], xp, axes=(1, 1))  # (O, N, H, W)
        return np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(-2, -1))
    return np.einsum("nchwij,ocij->nohw", win, k, optimize=True)


def _correlate_kernel_grad(g, xp, kh, kw):
    """d(out)/d(kernel): correlate the input windows with the output grad."""
    if (kh, kw) == (3, 3):
        from ._conv_kernels import conv3x3_kernel_grad

        return conv3x3_kernel_grad(
            np.ascontiguousarray(g), np.ascontiguousarray(xp)
        )
    if (kh, kw) == (1, 1):
        return np.tensordot(g, xp, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
    n, c = xp.shape[0], xp.shape[1]
    co = g.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(-2, -1))
    gm = g.transpose(1, 0, 2, 3).reshape(co, -1)
    wm = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, c * kh * kw)
    return (gm @ wm).reshape(co, c, kh, kw)


def conv2d(x, kernel, bias, pad=0):
    """2-D cross-correlation, stride 1.

    x: (C, H, W) or (N, C, H, W); kernel: (C_out, C_in, kH, kW);
    bias: (C_out,). Zero-pads the spatial dims by `pad` on every side,
    so the output side is H + 2*pad - kH + 1.
    """
    if kernel.ndim != 4:
        raise DimensionError(f"kernel must be 4-D, got shape {kernel.shape}")
    if bias.ndim != 1 or bias.shape[0] != kernel.shape[0]:
        raise DimensionError(
            f"bias shape {bias.shape} does not match kernel out-channels {kernel.shape[0]}"
        )
    single = x.ndim == 3
    if single:
        xd = x.data[None]
    elif x.ndim == 4:
        xd = x.data
    else:
        raise DimensionError(f"conv2d input must be 3-D or 4-D, got shape {x.shape}")
    n, c, h, w = xd.shape
    co, ci, kh, kw = kernel.shape
    if ci != c:
        raise DimensionError(f"input channels {c} != kernel in-channels {ci}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )

    xp = _pad_hw(xd, pad)
    y = _correlate(xp, kernel.data) + bias.data[None, :, None, None]
    if single:
        y = y[0]
    out = _result(y, (x, kernel, bias), "conv2d")

    def backward(g):
        gb = g[None] if single else g
        if bias.requires_grad:
            bias._accumulate(gb.sum(axis=(0, 2, 3)))
        if kernel.requires_grad:
            kernel._accumulate(_correlate_kernel_grad(gb, xp, kh, kw))
        if x.requires_grad:
            # dX = full cross-correlation of the output grad with the
            # 180-degree-rotated kernel, transposed over channels.
            kt = np.ascontiguousarray(
                kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            )
            gp = np.pad(gb, [(0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)])
            gx = _correlate(gp, kt)
            if pad:
                gx = gx[:, :, pad:-pad, pad:-pad]
            x._accumulate(gx[0] if single else gx)

    out._backward = backward
    return out


def max_pool2d(x, k):
    """Non-overlapping k x k max pooling over the last two dims.

    Gradient flows to the first maximal cell of each window in row-major
    scan order.
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise DimensionError(f"max_pool2d input must be 3-D or 4-D, got {x.shape}")
    n, c, h, w = xd.shape
    if h % k or w % k:
        raise DimensionError(f"spatial extents {h}x{w} not divisible by pool size {k}")
    win = xd.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // k, w // k, k * k)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    out = _result(y[0] if single else y, (x,), "max_pool2d")

    def backward(g):
        gb = g[None] if single else g
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], gb[..., None], axis=-1)
        gx = (
            gflat.reshape(n, c, h // k, w // k, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        x._accumulate(gx[0] if single else gx)

    out._backward = backward
    return out


def concat_channels(a, b):
    """Concatenate two feature maps along the channel axis."""
    if a.ndim != b.ndim or a.ndim not in (3, 4):
        raise DimensionError(f"cannot concat shapes {a.shape} and {b.shape}")
    axis = a.ndim - 3
    if a.shape[-2:] != b.shape[-2:] or a.shape[:axis] != b.shape[:axis]:
        raise DimensionError(
            f"spatial/batch extents differ: {a.shape} vs {b.shape}"
        )
    ca = a.shape[axis]
    out = _result(np.concatenate([a.data, b.data], axis=axis), (a, b), "concat")

    def backward(g):
        ga, gb = np.split(g, [ca], axis=axis)
        if a.requires_grad:
            a._accumulate(ga)
        if b.requires_grad:
            b._accumulate(gb)

    out._backward = backward
    return out


def dropout(x, p, training, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        out = _result(x.data.copy(), (x,), "dropout")

        def backward_id(g):
            if x.requires_grad:
                x._accumulate(g)

        out._backward = backward_id
        return out

    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = _result(x.data * mask, (x,), "dropout")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    out._backward = backward
    return out


# ----------------------------------------------------------------------
# initialization and verification


def xavier_init(shape, fan_in, fan_out, rng):
    """Glorot-uniform samples on [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fans must be positive")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-a, a, size=shape))


def gradcheck(fn, point, h=1e-5, max_coords=None, rng=None):
    """Compare autodiff and central-difference gradients of a scalar fn.

    Returns the maximum per-coordinate relative error
    |a - n| / max(1e-12, |a| + |n|). `point` is a Tensor; a fresh leaf is
    used so the caller's graph is untouched. If max_coords is given,
    only that many coordinates (sampled with `rng`) are probed.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = parameter(point.data.copy())
    out = fn(x)
    if out.size != 1:
        raise GraphError("gradcheck needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise NumericError("function returned non-finite value at the check point")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    n_coords = flat.size
    coords = np.arange(n_coords)
    if max_coords is not None and max_coords < n_coords:
        gen = rng if rng is not None else np.random.default_rng(0)
        coords = gen.choice(n_coords, size=max_coords, replace=False)

    def eval_at(values):
        probe = Tensor(values.reshape(x.shape))
        return float(fn(probe).data)

    max_err = 0.0
    for i in coords:
        bumped = flat.copy()
        bumped[i] += h
        fp = eval_at(bumped)
        bumped[i] -= 2 * h
        fm = eval_at(bumped)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError("function returned NaN during finite differencing")
        numeric = (fp - fm) / (2 * h)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
        if err > max_err:
            max_err = err
    return max_err
