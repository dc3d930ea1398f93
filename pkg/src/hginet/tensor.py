"""Reverse-mode autodiff over float64 numpy arrays.

Every value is a :class:`Tensor` wrapping an ``np.float64`` array.  Ops
build an implicit graph: each result remembers its parents and a closure
that pushes the output gradient into them.  ``backward(loss)`` traces the
reachable subgraph into a :class:`Tape` (the ordered record of executed
operations) and replays it in reverse, accumulating gradients additively
across fan-out.  Creation order gives a valid topological order, so the
replay is deterministic for a fixed op sequence.

Gradients are held in ``Tensor.grad`` and must be zeroed explicitly
between optimization steps.  Recording can be suspended with
:class:`no_grad` for inference.

The module also owns the binary tensor format: magic ``HGT1``, a u32
rank, one u32 per extent, then the float64 payload, all little-endian.
"""

from __future__ import annotations

import itertools
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError, TensorFormatError

__all__ = [
    "Tensor",
    "Tape",
    "no_grad",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "relu",
    "sigmoid",
    "clip",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "getitem",
    "repeat_leading",
    "sum_",
    "mean_",
    "softmax_rows",
    "conv2d",
    "bilinear_resize",
    "pixel_shuffle",
    "pixel_unshuffle",
    "batch_norm",
    "save_array",
    "load_array",
    "MAGIC",
]

_grad_enabled = True


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A float64 array plus the bookkeeping needed for backprop.

    Args:
        data: array-like, converted to a contiguous float64 array.
        requires_grad: mark this tensor as a differentiable leaf.

    Attributes:
        data: the wrapped ``np.ndarray``.
        grad: accumulated gradient of the same shape, or ``None``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_seq")

    _counter = itertools.count()
    # keep ndarray <op> Tensor dispatching to the reflected methods below
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._seq = next(Tensor._counter)

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _bad_item(self)

    def detach(self) -> "Tensor":
        """A view of the same data with no graph attached."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operator sugar ------------------------------------------------

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)


def _bad_item(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


class Tape:
    """Ordered record of the executed differentiable operations.

    ``trace`` collects every recorded (non-leaf) tensor reachable from a
    root through parent links, ordered by creation sequence.  Creation
    order is a topological order, so replaying it reversed propagates
    gradients parents-after-children.
    """

    def __init__(self, nodes: list[Tensor], root: Tensor):
        self.nodes = nodes
        self.root = root

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        seen: set[int] = set()
        nodes: list[Tensor] = []
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._backward is not None:
                nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq)
        return cls(nodes, root)

    def backward(self) -> None:
        """Seed the root with a unit gradient and replay in reverse."""
        root = self.root
        if root.grad is None:
            root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            node._backward(node.grad)


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss.

    Raises:
        ContractError: if the loss is not a single element or carries no
            recorded graph (nothing requires a gradient).
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss was not produced from any gradient-tracked tensor")
    Tape.trace(loss).backward()


# -- op plumbing -------------------------------------------------------


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], make_backward) -> Tensor:
    """Wrap an op result, attaching the backward closure when recording."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = make_backward(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise -------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def make(out):
        def back(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        return back

    return _record(data, (a, b), make)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def make(out):
        def back(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(-g, b.data.shape))

        return back

    return _record(data, (a, b), make)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def make(out):
        def back(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        return back

    return _record(data, (a, b), make)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def make(out):
        def back(g):
            _accum(a, _unbroadcast(g / b.data, a.data.shape))
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return back

    return _record(data, (a, b), make)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def make(out):
        def back(g):
            _accum(a, -g)

        return back

    return _record(-a.data, (a,), make)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def make(out):
        def back(g):
            _accum(a, g * data)

        return back

    return _record(data, (a,), make)


def log(a) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def make(out):
        def back(g):
            _accum(a, g / a.data)

        return back

    return _record(data, (a,), make)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    data = np.sqrt(a.data)

    def make(out):
        def back(g):
            _accum(a, g / (2.0 * data))

        return back

    return _record(data, (a,), make)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def make(out):
        def back(g):
            _accum(a, g * (a.data > 0.0))

        return back

    return _record(data, (a,), make)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # Split by sign so exp never overflows.
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def make(out):
        def back(g):
            _accum(a, g * data * (1.0 - data))

        return back

    return _record(data, (a,), make)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through the interior."""
    a = _as_tensor(a)
    data = np.clip(a.data, lo, hi)

    def make(out):
        mask = (a.data > lo) & (a.data < hi)

        def back(g):
            _accum(a, g * mask)

        return back

    return _record(data, (a,), make)


# -- shape ops ---------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def make(out):
        def back(g):
            _accum(a, g.reshape(a.data.shape))

        return back

    return _record(data, (a,), make)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    data = np.transpose(a.data, axes)

    def make(out):
        inv = None if axes is None else np.argsort(axes)

        def back(g):
            _accum(a, np.transpose(g, inv))

        return back

    return _record(np.ascontiguousarray(data), (a,), make)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def make(out):
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def back(g):
            for p, piece in zip(parts, np.split(g, splits, axis=axis)):
                _accum(p, piece)

        return back

    return _record(data, tuple(parts), make)


def getitem(a, idx) -> Tensor:
    """Basic or single-array fancy indexing with scatter-add backward."""
    a = _as_tensor(a)
    if isinstance(idx, (list, np.ndarray)):
        idx = np.asarray(idx)
    data = a.data[idx]

    def make(out):
        def back(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accum(a, full)

        return back

    return _record(np.ascontiguousarray(data), (a,), make)


def repeat_leading(a, reps: int) -> Tensor:
    """Stack ``reps`` copies of ``a`` along a new leading axis."""
    a = _as_tensor(a)
    data = np.broadcast_to(a.data, (reps,) + a.data.shape).copy()

    def make(out):
        def back(g):
            _accum(a, g.sum(axis=0))

        return back

    return _record(data, (a,), make)


# -- reductions --------------------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def make(out):
        def back(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

        return back

    return _record(data, (a,), make)


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(data.size, 1)

    def make(out):
        def back(g):
            gg = np.asarray(g) / count
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

        return back

    return _record(data, (a,), make)


# -- matmul ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes.

    Supports equal leading batch shapes, or a batched left operand
    against a plain matrix (the gradient then sums over the batch).
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    if a.ndim != b.ndim and b.ndim != 2:
        raise ShapeError(f"unsupported batch shapes: {a.shape} @ {b.shape}")
    if a.ndim == b.ndim and a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeError(f"batch extents differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def make(out):
        def back(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accum(a, ga)
            if b.ndim == 2 and a.ndim > 2:
                k = a.data.shape[-1]
                n = g.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            _accum(b, gb)

        return back

    return _record(data, (a, b), make)


# -- softmax -----------------------------------------------------------

_row_sum_sink: list | None = None


class collect_row_sums:
    """Context manager capturing (min, max) row sums of every softmax."""

    def __enter__(self):
        global _row_sum_sink
        self._prev = _row_sum_sink
        _row_sum_sink = []
        self.records = _row_sum_sink
        return self.records

    def __exit__(self, *exc):
        global _row_sum_sink
        _row_sum_sink = self._prev
        return False


def softmax_rows(a) -> Tensor:
    """Softmax along the last axis (max-shifted for stability)."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)
    if _row_sum_sink is not None:
        sums = data.sum(axis=-1)
        _row_sum_sink.append((float(sums.min()), float(sums.max())))

    def make(out):
        def back(g):
            dot = (g * data).sum(axis=-1, keepdims=True)
            _accum(a, data * (g - dot))

        return back

    return _record(data, (a,), make)


# -- convolution -------------------------------------------------------


def _conv_cols(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[0], xp.shape[1]
    cols = np.empty((b, c, k, k, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(b, c * k * k, ho * wo)


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of [B,C,H,W] with [C',C,k,k] kernels.

    Zero padding; output extents floor((H + 2p - k)/stride) + 1.

    Raises:
        ShapeError: channel mismatch or kernel larger than padded input.
        ContractError: even kernel extent.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects [B,C,H,W] and [C',C,k,k], got {x.shape}, {w.shape}")
    b_, cin, h, wd = x.data.shape
    cout, cin_w, k, k2 = w.data.shape
    if k != k2 or k % 2 == 0:
        raise ContractError(f"conv2d kernels must be square with odd extent, got {k}x{k2}")
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {cin} vs kernel {cin_w}")
    if h + 2 * padding < k or wd + 2 * padding < k:
        raise ShapeError(f"kernel {k} exceeds padded input {(h + 2 * padding, wd + 2 * padding)}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _conv_cols(xp, k, stride, ho, wo)
    wmat = w.data.reshape(cout, cin * k * k)
    data = (wmat @ cols).reshape(b_, cout, ho, wo)
    parents: tuple[Tensor, ...] = (x, w)
    bt = None
    if bias is not None:
        bt = _as_tensor(bias)
        if bt.data.shape != (cout,):
            raise ShapeError(f"conv2d bias must have shape ({cout},), got {bt.shape}")
        data = data + bt.data[None, :, None, None]
        parents = (x, w, bt)

    def make(out):
        def back(g):
            gmat = g.reshape(b_, cout, ho * wo)
            if w.requires_grad:
                gw = np.einsum("bol,bcl->oc", gmat, cols, optimize=True)
                _accum(w, gw.reshape(w.data.shape))
            if bt is not None:
                _accum(bt, g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                gcols = (wmat.T @ gmat).reshape(b_, cin, k, k, ho, wo)
                gxp = np.zeros_like(xp)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, i, j]
                if padding:
                    gxp = gxp[:, :, padding:-padding, padding:-padding]
                _accum(x, gxp)

        return back

    return _record(data, parents, make)


# -- resize ------------------------------------------------------------


def _resize_axis_coords(n_src: int, n_dst: int):
    scale = n_src / n_dst
    s = (np.arange(n_dst, dtype=np.float64) + 0.5) * scale - 0.5
    s = np.clip(s, 0.0, n_src - 1.0)
    i0 = np.floor(s).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_src - 1)
    t = s - i0
    return i0, i1, t


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    """Separable bilinear resize of the trailing two axes.

    Sample centers follow the half-pixel convention
    ``src = (dst + 0.5) * scale - 0.5`` clamped to the valid range, so a
    same-size resize is exact identity.
    """
    x = _as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"bilinear_resize needs at least 2 axes, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ContractError(f"target extents must be positive, got {(out_h, out_w)}")
    h, wd = x.data.shape[-2], x.data.shape[-1]
    r0, r1, ty = _resize_axis_coords(h, out_h)
    c0, c1, tx = _resize_axis_coords(wd, out_w)
    ty_b = ty.reshape((1,) * (x.ndim - 2) + (out_h, 1))
    tx_b = tx.reshape((1,) * (x.ndim - 2) + (1, out_w))
    rows = x.data[..., r0, :] * (1.0 - ty_b) + x.data[..., r1, :] * ty_b
    data = rows[..., :, c0] * (1.0 - tx_b) + rows[..., :, c1] * tx_b

    def make(out):
        def back(g):
            # Undo the column stage: scatter-add into [..., out_h, W].
            acc_w = np.zeros((wd,) + g.shape[:-1], dtype=np.float64)
            np.add.at(acc_w, c0, np.moveaxis(g * (1.0 - tx_b), -1, 0))
            np.add.at(acc_w, c1, np.moveaxis(g * tx_b, -1, 0))
            grows = np.moveaxis(acc_w, 0, -1)
            # Undo the row stage: scatter-add into [..., H, W].
            acc_h = np.zeros((h,) + grows.shape[:-2] + (wd,), dtype=np.float64)
            np.add.at(acc_h, r0, np.moveaxis(grows * (1.0 - ty_b), -2, 0))
            np.add.at(acc_h, r1, np.moveaxis(grows * ty_b, -2, 0))
            _accum(x, np.moveaxis(acc_h, 0, -2))

        return back

    return _record(data, (x,), make)


def pixel_shuffle(x, r: int) -> Tensor:
    """Rearrange [B, C*r^2, H, W] into [B, C, H*r, W*r]."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pixel_shuffle expects [B,C,H,W], got {x.shape}")
    b, c, h, w = x.data.shape
    if c % (r * r) != 0:
        raise ShapeError(f"channels {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    t = reshape(x, (b, co, r, r, h, w))
    t = transpose(t, (0, 1, 4, 2, 5, 3))
    return reshape(t, (b, co, h * r, w * r))


def pixel_unshuffle(x, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"pixel_unshuffle expects [B,C,H,W], got {x.shape}")
    b, c, h, w = x.data.shape
    if h % r or w % r:
        raise ShapeError(f"extents {(h, w)} not divisible by r = {r}")
    t = reshape(x, (b, c, h // r, r, w // r, r))
    t = transpose(t, (0, 1, 3, 5, 2, 4))
    return reshape(t, (b, c * r * r, h // r, w // r))


# -- batch normalization ----------------------------------------------


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of [B,C,H,W].

    Training mode normalizes with batch statistics over (B, H, W) and
    updates the running buffers in place with the given momentum.
    Inference mode reproduces ``(x - m) / sqrt(v + eps) * gamma + beta``
    from the stored buffers.

    Raises:
        ContractError: training-mode statistics over fewer than 2 values.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects [B,C,H,W], got {x.shape}")
    b, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"affine parameters must have shape ({c},)")
    if training:
        m = b * h * w
        if m < 2:
            raise ContractError(f"batch statistics need at least 2 values per channel, got {m}")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv[None, :, None, None]
    data = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def make(out):
        def back(g):
            _accum(beta, g.sum(axis=(0, 2, 3)))
            _accum(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            if not x.requires_grad:
                return
            gi = gamma.data[None, :, None, None] * inv[None, :, None, None]
            if training:
                m = b * h * w
                gmean = g.mean(axis=(0, 2, 3), keepdims=True)
                gdot = (g * xhat).mean(axis=(0, 2, 3), keepdims=True)
                _accum(x, gi * (g - gmean - xhat * gdot))
            else:
                _accum(x, gi * g)

        return back

    return _record(data, (x, gamma, beta), make)


# -- serialization -----------------------------------------------------

MAGIC = b"HGT1"


def save_array(f, array: np.ndarray) -> None:
    """Write one float64 array in the binary tensor format.

    Args:
        f: a binary file object or a path.
    """
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        with open(f, "wb") as fh:
            save_array(fh, array)
        return
    a = np.asarray(array, dtype=np.float64)
    if a.ndim:
        a = np.ascontiguousarray(a)  # ascontiguousarray would promote 0-d to 1-d
    f.write(MAGIC)
    f.write(struct.pack("<I", a.ndim))
    f.write(struct.pack(f"<{a.ndim}I", *a.shape))
    f.write(a.astype("<f8", copy=False).tobytes())


def load_array(f) -> np.ndarray:
    """Read one array written by :func:`save_array`.

    Raises:
        TensorFormatError: bad magic, header, or truncated payload.
    """
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        with open(f, "rb") as fh:
            return load_array(fh)
    magic = f.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    head = f.read(4)
    if len(head) != 4:
        raise TensorFormatError("truncated rank field")
    (rank,) = struct.unpack("<I", head)
    if rank > 32:
        raise TensorFormatError(f"implausible rank {rank}")
    raw = f.read(4 * rank)
    if len(raw) != 4 * rank:
        raise TensorFormatError("truncated extents")
    shape = struct.unpack(f"<{rank}I", raw) if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = f.read(8 * count)
    if len(payload) != 8 * count:
        raise TensorFormatError(f"truncated payload: expected {8 * count} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
