"""Dense n-d arrays with reverse-mode automatic differentiation.

Every differentiable computation in this package is built from the ops in
this module.  A ``Tensor`` wraps a float64 numpy array; ops record their
inputs and a backward closure, and ``Tensor.backward()`` replays the graph
in reverse topological order, accumulating gradients into every tensor
reachable through a ``requires_grad`` chain.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64

_finite_checks = False

# When not None, forward passes append the activation-region masks of every
# kinked op (relu / leaky_relu / clamp) here.  The gradient audit compares
# traces of two perturbed evaluations: if a pre-activation changed sign
# inside the finite-difference window, the FD oracle is invalid there and
# the sample must be discarded.
_kink_trace = None


def set_finite_checks(enabled: bool) -> None:
    """Enable per-op finiteness assertions (used by the test suite)."""
    global _finite_checks
    _finite_checks = bool(enabled)


def start_kink_trace() -> None:
    global _kink_trace
    _kink_trace = []


def stop_kink_trace() -> list:
    global _kink_trace
    trace, _kink_trace = _kink_trace, None
    return trace


def _record_kink(mask: np.ndarray) -> None:
    if _kink_trace is not None:
        _kink_trace.append(mask)


class Tensor:
    """A node in the computation graph.

    Leaves are built directly (``Tensor(data, requires_grad=...)``); interior
    nodes are produced by the op functions below.  ``grad`` is materialized
    as a same-shape zero array for leaves that require gradients and lazily
    for interior nodes.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._parents: tuple = ()
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            _reject(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        """Populate gradients of every reachable tensor that requires them.

        Only defined for scalar (single-element) roots; a second call on the
        same root without a fresh forward pass is an error.
        """
        if self.size != 1:
            _reject(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._done:
            raise RuntimeError("backward() already ran for this graph; build a new forward pass first")
        if not self.requires_grad:
            self._done = True
            return
        order = _toposort(self)
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        self._done = True

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]

        def bwd(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            _accumulate(self, full)

        return _result(np.array(out_data), (self,), bwd)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _reject(msg: str):
    raise ValueError(msg)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _result(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out.name = None
    out._done = False
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _toposort(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g)  # always copy: g may be a view or shared with a sibling
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        _reject(f"{opname}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")

    def bwd(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), bwd)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        _accumulate(x, g * y * (1.0 - y))

    return _result(y, (x,), bwd)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)

    def bwd(g):
        _accumulate(x, g * (1.0 - y * y))

    return _result(y, (x,), bwd)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    y = np.exp(x.data)

    def bwd(g):
        _accumulate(x, g * y)

    return _result(y, (x,), bwd)


def log(x) -> Tensor:
    x = _as_tensor(x)

    def bwd(g):
        _accumulate(x, g / x.data)

    return _result(np.log(x.data), (x,), bwd)


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    y = np.sqrt(x.data)

    def bwd(g):
        _accumulate(x, g * 0.5 / y)

    return _result(y, (x,), bwd)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    _record_kink(mask)

    def bwd(g):
        _accumulate(x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), bwd)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    _record_kink(mask)

    def bwd(g):
        _accumulate(x, g * np.where(mask, 1.0, slope))

    return _result(np.where(mask, x.data, slope * x.data), (x,), bwd)


def clamp(x, lo: float, hi: float) -> Tensor:
    x = _as_tensor(x)
    inside = (x.data > lo) & (x.data < hi)
    _record_kink(inside)

    def bwd(g):
        _accumulate(x, g * inside)

    return _result(np.clip(x.data, lo, hi), (x,), bwd)


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        _reject(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        _reject(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bwd)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.shape))
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, [a % x.ndim for a in axes])
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _result(np.asarray(y), (x,), bwd)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for a in axes:
            count *= x.shape[a % x.ndim]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)

    def bwd(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(x.data.reshape(shape), (x,), bwd)


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        _accumulate(x, g.transpose(inv))

    return _result(x.data.transpose(axes), (x,), bwd)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def broadcast_to(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)

    def bwd(g):
        _accumulate(x, _unbroadcast(g, x.shape))

    return _result(np.broadcast_to(x.data, shape).copy(), (x,), bwd)


def softmax_over_axis(x, axis: int) -> Tensor:
    """Softmax along one axis, stabilized by max subtraction."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        _accumulate(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (x,), bwd)


# ---------------------------------------------------------------------------
# convolution and resampling


def _resolve_pad(padding, kh: int, kw: int):
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            _reject("same-padding requires odd kernel sizes")
        return kh // 2, kw // 2
    if padding in ("none", "valid"):
        return 0, 0
    if isinstance(padding, int):
        return padding, padding
    _reject(f"unknown padding spec {padding!r}")


def conv2d(x, kernels, stride: int = 1, padding="same") -> Tensor:
    """2-d convolution over an (H,W,Cin) map or a batch (B,H,W,Cin) of maps.

    Kernels are (kh,kw,Cin,Cout).  Stride-1 same-padding preserves H and W;
    padding may also be "none" or an explicit integer border.
    """
    x, kernels = _as_tensor(x), _as_tensor(kernels)
    if x.ndim not in (3, 4):
        _reject(f"conv2d input must be (H,W,C) or (B,H,W,C), got {x.shape}")
    if kernels.ndim != 4:
        _reject(f"conv2d kernels must be (kh,kw,Cin,Cout), got {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    if x.shape[-1] != cin:
        _reject(f"conv2d channel mismatch: input has {x.shape[-1]} channels, kernels expect {cin}")
    ph, pw = _resolve_pad(padding, kh, kw)

    batched = x.ndim == 4
    xa = x.data if batched else x.data[None]
    b, h, w, _ = xa.shape
    if h + 2 * ph < kh or w + 2 * pw < kw:
        _reject(f"conv2d kernel {kh}x{kw} does not fit {h}x{w} input with padding {ph},{pw}")
    xp = np.pad(xa, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else xa
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1

    def _cols(arr):
        win = np.lib.stride_tricks.sliding_window_view(arr, (kh, kw), axis=(1, 2))
        win = win[:, ::stride, ::stride]
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * cin)

    kmat = kernels.data.reshape(kh * kw * cin, cout)
    out = (_cols(xp) @ kmat).reshape(b, ho, wo, cout)

    def bwd(g):
        gm = g.reshape(b * ho * wo, cout) if batched else g.reshape(ho * wo, cout)
        if kernels.requires_grad:
            _accumulate(kernels, (_cols(xp).T @ gm).reshape(kernels.shape))
        if x.requires_grad:
            dcols = (gm @ kmat.T).reshape(b, ho, wo, kh, kw, cin)
            dxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    dxp[:, di:di + ho * stride:stride, dj:dj + wo * stride:stride] += dcols[:, :, :, di, dj]
            dx = dxp[:, ph:ph + h, pw:pw + w] if (ph or pw) else dxp
            _accumulate(x, dx if batched else dx[0])

    return _result(out if batched else out[0], (x, kernels), bwd)


def conv1d(seq, kernels, stride: int = 1, padding="none") -> Tensor:
    """1-d convolution over an (L,Cin) sequence; output length is L-ks+1."""
    seq, kernels = _as_tensor(seq), _as_tensor(kernels)
    if seq.ndim != 2 or kernels.ndim != 3:
        _reject(f"conv1d expects (L,Cin) and (ks,Cin,Cout), got {seq.shape} and {kernels.shape}")
    ks, cin, cout = kernels.shape
    if seq.shape[1] != cin:
        _reject(f"conv1d channel mismatch: sequence has {seq.shape[1]} channels, kernels expect {cin}")
    if padding not in ("none", "valid"):
        _reject("conv1d supports no-padding only")
    if stride != 1:
        _reject("conv1d supports stride 1 only")
    length = seq.shape[0]
    if length < ks:
        _reject(f"conv1d sequence length {length} is shorter than kernel size {ks}")
    t = length - ks + 1

    def _cols(arr):
        win = np.lib.stride_tricks.sliding_window_view(arr, ks, axis=0)
        return win.transpose(0, 2, 1).reshape(t, ks * cin)

    kmat = kernels.data.reshape(ks * cin, cout)
    out = _cols(seq.data) @ kmat

    def bwd(g):
        if kernels.requires_grad:
            _accumulate(kernels, (_cols(seq.data).T @ g).reshape(kernels.shape))
        if seq.requires_grad:
            dcols = (g @ kmat.T).reshape(t, ks, cin)
            ds = np.zeros_like(seq.data)
            for di in range(ks):
                ds[di:di + t] += dcols[:, di]
            _accumulate(seq, ds)

    return _result(out, (seq, kernels), bwd)


def upsample_nearest(x) -> Tensor:
    """Replicate every pixel of an (H,W,C) map into a 2x2 block."""
    x = _as_tensor(x)
    if x.ndim != 3:
        _reject(f"upsample_nearest expects (H,W,C), got {x.shape}")
    h, w, c = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=0), 2, axis=1)

    def bwd(g):
        _accumulate(x, g.reshape(h, 2, w, 2, c).sum(axis=(1, 3)))

    return _result(y, (x,), bwd)
