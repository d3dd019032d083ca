"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` plus an optional gradient slot.  Every
differentiable operation records its parents and a backward closure; calling
:func:`backward` on a scalar loss replays those closures in reverse execution
order.  The op set is deliberately small: just enough for ResNet-style
generators, PatchGAN-style discriminators and the relational / perceptual /
adversarial losses built on top of them.

Conventions:
  * float64 for gradient checks and metrics, float32 for training throughput
  * no general broadcasting -- binary ops take equal shapes, a python scalar,
    or a 0-d tensor
  * tensors are immutable after creation except for ``grad`` (and leaf
    parameter updates between steps)
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor", "set_finite_checks",
    "add", "sub", "mul", "div", "neg",
    "matmul", "reshape", "permute", "index_select",
    "relu", "leaky_relu", "tanh", "exp", "log", "softplus", "absolute",
    "clamp_min", "reciprocal", "mul_rows", "sqrt_guarded",
    "tsum", "tmean", "l2_norm", "huber",
    "pad2d", "upsample2x", "conv2d", "instance_norm",
    "detach", "backward", "finite_diff_grad", "max_rel_error", "gradcheck",
]

_FLOAT_DTYPES = (np.float32, np.float64)
_seq_counter = itertools.count()
_finite_checks = False


def set_finite_checks(enabled: bool) -> None:
    """Verify every op result is NaN/Inf-free (debug aid; costs a pass per op)."""
    global _finite_checks
    _finite_checks = bool(enabled)


class Tensor:
    """Dense real tensor with an optional gradient slot.

    ``data`` is always a C-contiguous float32/float64 ndarray.  ``grad`` is
    ``None`` until :func:`backward` populates it, and then has the same shape
    and dtype as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward_fn", "_seq")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward_fn: Optional[Callable[[np.ndarray], None]] = None
        self._seq = next(_seq_counter)

    # -- inspection ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self.op!r})"

    # -- graph plumbing ---------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def detach(self) -> "Tensor":
        return detach(self)

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axes=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axes, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)


def _result(data: np.ndarray, op: str, parents: Sequence[Tensor],
            backward_fn: Optional[Callable[[np.ndarray], None]]) -> Tensor:
    out = Tensor(data)
    out.op = op
    if _finite_checks and not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite values in result of {op}")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    # exact match or a 0-d scalar on either side; nothing fancier
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _collapse(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce an op-output gradient back to an operand's (possibly 0-d) shape."""
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes("add", a, b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_collapse(g, a.shape))
        if b.requires_grad:
            b._accumulate(_collapse(g, b.shape))

    return _result(a.data + b.data, "add", (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes("sub", a, b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_collapse(g, a.shape))
        if b.requires_grad:
            b._accumulate(_collapse(-g, b.shape))

    return _result(a.data - b.data, "sub", (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes("mul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_collapse(g * bd, a.shape))
        if b.requires_grad:
            b._accumulate(_collapse(g * ad, b.shape))

    return _result(ad * bd, "mul", (a, b), back)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes("div", a, b)
    ad, bd = a.data, b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_collapse(g / bd, a.shape))
        if b.requires_grad:
            b._accumulate(_collapse(-g * ad / (bd * bd), b.shape))

    return _result(ad / bd, "div", (a, b), back)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def back(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _result(-a.data, "neg", (a,), back)


# -- unary nonlinearities ----------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _result(np.maximum(a.data, 0), "relu", (a,), back)


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = a.data > 0
    slope = np.where(mask, 1.0, alpha).astype(a.data.dtype)

    def back(g):
        if a.requires_grad:
            a._accumulate(g * slope)

    return _result(np.where(mask, a.data, alpha * a.data), "leaky_relu", (a,), back)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - y * y))

    return _result(y, "tanh", (a,), back)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(g * y)

    return _result(y, "exp", (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _result(np.log(a.data), "log", (a,), back)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), the stable building block for the vanilla GAN losses."""
    y = np.logaddexp(0.0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # sigmoid without overflow

    def back(g):
        if a.requires_grad:
            a._accumulate(g * sig)

    return _result(y, "softplus", (a,), back)


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(g * s)

    return _result(np.abs(a.data), "abs", (a,), back)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data >= floor

    def back(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _result(np.maximum(a.data, floor), "clamp_min", (a,), back)


def reciprocal(a: Tensor) -> Tensor:
    y = 1.0 / a.data

    def back(g):
        if a.requires_grad:
            a._accumulate(-g * y * y)

    return _result(y, "reciprocal", (a,), back)


def sqrt_guarded(a: Tensor, eps: float = 1e-12) -> Tensor:
    """sqrt clamped below at zero, with the gradient guarded near the origin.

    Backward uses g / (2 * max(sqrt(x), eps)) so exactly-zero inputs yield a
    zero gradient instead of an infinity.
    """
    y = np.sqrt(np.maximum(a.data, 0.0))
    denom = 2.0 * np.maximum(y, eps)

    def back(g):
        if a.requires_grad:
            a._accumulate(g / denom)

    return _result(y, "sqrt_guarded", (a,), back)


# -- reductions --------------------------------------------------------------

def _normalize_axes(axes, ndim: int):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(int(ax) % ndim if -ndim <= int(ax) < ndim else int(ax) for ax in axes)
    if len(axes) == 0:
        raise ValueError("reduction over an empty axis list")
    for ax in axes:
        if ax < 0 or ax >= ndim:
            raise ValueError(f"reduction axis {ax} invalid for rank-{ndim} tensor")
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate reduction axes {axes}")
    return axes


def _expand_reduced(g: np.ndarray, in_shape: tuple, axes, keepdims: bool) -> np.ndarray:
    if not keepdims:
        shape = list(in_shape)
        for ax in axes:
            shape[ax] = 1
        g = g.reshape(shape)
    return np.broadcast_to(g, in_shape)


def tsum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    if a.size == 0:
        raise ValueError("sum over an empty tensor")
    axes = _normalize_axes(axes, a.ndim)

    def back(g):
        if a.requires_grad:
            a._accumulate(_expand_reduced(g, a.shape, axes, keepdims).astype(a.data.dtype))

    return _result(a.data.sum(axis=axes, keepdims=keepdims), "sum", (a,), back)


def tmean(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    if a.size == 0:
        raise ValueError("mean over an empty tensor")
    axes = _normalize_axes(axes, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]

    def back(g):
        if a.requires_grad:
            a._accumulate(_expand_reduced(g, a.shape, axes, keepdims).astype(a.data.dtype) / count)

    return _result(a.data.mean(axis=axes, keepdims=keepdims), "mean", (a,), back)


def l2_norm(a: Tensor, axis: Optional[int] = None, eps: float = 1e-12) -> Tensor:
    """Euclidean norm of the whole tensor (axis=None) or along one axis.

    The gradient is x / max(||x||, eps), so a zero vector gets a zero
    gradient rather than NaN.
    """
    if a.size == 0:
        raise ValueError("l2_norm of an empty tensor")
    if axis is None:
        n = np.sqrt((a.data ** 2).sum())
        denom = max(float(n), eps)

        def back(g):
            if a.requires_grad:
                a._accumulate(np.asarray(g, dtype=a.data.dtype) * (a.data / denom))

        return _result(np.asarray(n, dtype=a.data.dtype), "l2_norm", (a,), back)

    ax = int(axis) % a.ndim
    n = np.sqrt((a.data ** 2).sum(axis=ax))
    denom = np.maximum(n, eps)

    def back(g):
        if a.requires_grad:
            ge = np.expand_dims(g / denom, ax)
            a._accumulate(ge * a.data)

    return _result(n, "l2_norm", (a,), back)


# -- shape manipulation ------------------------------------------------------

def reshape(a: Tensor, shape: tuple) -> Tensor:
    def back(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), "reshape", (a,), back)


def permute(a: Tensor, axes: tuple) -> Tensor:
    inv = np.argsort(axes)

    def back(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(g.transpose(inv)))

    return _result(np.ascontiguousarray(a.data.transpose(axes)), "permute", (a,), back)


def index_select(a: Tensor, idx, axis: int = 0) -> Tensor:
    """Gather rows along axis 0 (the only case the losses need)."""
    if axis != 0:
        raise ValueError("index_select supports axis 0 only")
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("index_select expects a flat index array")

    def back(g):
        if not a.requires_grad:
            return
        # segment-sum scatter: stable argsort + reduceat beats np.add.at here
        out = np.zeros(a.shape, dtype=a.data.dtype)
        order = np.argsort(idx, kind="stable")
        sidx = idx[order]
        sg = g[order]
        starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]])
        sums = np.add.reduceat(sg, starts, axis=0)
        out[sidx[starts]] = sums
        a._accumulate(out)

    return _result(a.data[idx], "index_select", (a,), back)


def mul_rows(a: Tensor, s: Tensor) -> Tensor:
    """Scale each row of a rank-2 tensor: out[i, :] = a[i, :] * s[i]."""
    if a.ndim != 2 or s.ndim != 1 or a.shape[0] != s.shape[0]:
        raise ValueError(f"mul_rows: incompatible shapes {a.shape} and {s.shape}")
    ad, sd = a.data, s.data

    def back(g):
        if a.requires_grad:
            a._accumulate(g * sd[:, None])
        if s.requires_grad:
            s._accumulate((g * ad).sum(axis=1))

    return _result(ad * sd[:, None], "mul_rows", (a, s), back)


# -- losses ------------------------------------------------------------------

def huber(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise Huber penalty with unit transition point.

    0.5*(a-b)^2 where |a-b| <= 1, otherwise |a-b| - 0.5.  Continuous at the
    branch point (both sides give 0.5) with gradient magnitude capped at 1.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes("huber", a, b)
    d = a.data - b.data
    quad = np.abs(d) <= 1.0
    y = np.where(quad, 0.5 * d * d, np.abs(d) - 0.5)
    dd = np.where(quad, d, np.sign(d))

    def back(g):
        if a.requires_grad:
            a._accumulate(_collapse(g * dd, a.shape))
        if b.requires_grad:
            b._accumulate(_collapse(-g * dd, b.shape))

    return _result(y, "huber", (a, b), back)


# -- structured ops for conv nets ---------------------------------------------

def pad2d(a: Tensor, padding: int) -> Tensor:
    if padding == 0:
        return a
    p = int(padding)
    padded_shape = a.shape[:-2] + (a.shape[-2] + 2 * p, a.shape[-1] + 2 * p)
    padded = np.zeros(padded_shape, dtype=a.data.dtype)
    inner = tuple([slice(None)] * (a.ndim - 2) + [slice(p, -p), slice(p, -p)])
    padded[inner] = a.data

    def back(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(g[inner]))

    return _result(padded, "pad2d", (a,), back)


def upsample2x(a: Tensor) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling of a [B,C,H,W] tensor."""
    if a.ndim != 4:
        raise ValueError(f"upsample2x expects rank-4, got {a.shape}")
    y = a.data.repeat(2, axis=2).repeat(2, axis=3)
    b_, c_, h_, w_ = a.shape

    def back(g):
        if a.requires_grad:
            a._accumulate(g.reshape(b_, c_, h_, 2, w_, 2).sum(axis=(3, 5)))

    return _result(y, "upsample2x", (a,), back)


def _conv_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """View of all kernel windows, shape [B, C, kh, kw, Hout, Wout]."""
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]          # [B, C, Hout, Wout, kh, kw]
    return win.transpose(0, 1, 4, 5, 2, 3)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of [B,Cin,H,W] with kernels [Cout,Cin,kh,kw].

    Output spatial size is floor((H + 2*padding - kh)/stride) + 1 (same for
    width).  Gradients are defined for the input, the kernel and the bias.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects rank-4 input and kernel, got {x.shape} and {w.shape}")
    if stride <= 0:
        raise ValueError(f"conv2d: stride must be positive, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d: padding must be non-negative, got {padding}")
    bsz, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input channels {cin} do not match kernel channels {cin_w}")
    hp, wp = h + 2 * padding, wd + 2 * padding
    if kh > hp or kw > wp:
        raise ValueError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    hout = (hp - kh) // stride + 1
    wout = (wp - kw) // stride + 1

    if padding:
        xp = np.zeros((bsz, cin, hp, wp), dtype=x.data.dtype)
        xp[:, :, padding:-padding, padding:-padding] = x.data
    else:
        xp = x.data
    cols = _conv_windows(xp, kh, kw, stride)                      # [B,Cin,kh,kw,Ho,Wo]
    cols_mat = np.ascontiguousarray(cols).reshape(bsz, cin * kh * kw, hout * wout)
    w_mat = w.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w_mat, cols_mat).reshape(bsz, cout, hout, wout)
    if b is not None:
        if b.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {b.shape} does not match Cout={cout}")
        out = out + b.data[None, :, None, None]

    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        g_mat = g.reshape(bsz, cout, hout * wout)
        if w.requires_grad:
            g2 = g_mat.transpose(1, 0, 2).reshape(cout, bsz * hout * wout)
            c2 = cols_mat.transpose(1, 0, 2).reshape(cin * kh * kw, bsz * hout * wout)
            w._accumulate((g2 @ c2.T).reshape(w.shape))
        if x.requires_grad:
            gcols = np.matmul(w_mat.T, g_mat)                     # [B, Cin*kh*kw, Ho*Wo]
            gcols = gcols.reshape(bsz, cin, kh, kw, hout, wout)
            gx = np.zeros((bsz, cin, hp, wp), dtype=x.data.dtype)
            for ki in range(kh):
                hi = ki + stride * hout
                for kj in range(kw):
                    wj = kj + stride * wout
                    gx[:, :, ki:hi:stride, kj:wj:stride] += gcols[:, :, ki, kj]
            if padding:
                gx = gx[:, :, padding:-padding, padding:-padding]
            x._accumulate(np.ascontiguousarray(gx))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return _result(out, "conv2d", parents, back)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the spatial axes (no affine)."""
    if x.ndim != 4:
        raise ValueError(f"instance_norm expects rank-4, got {x.shape}")
    m = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - m) * inv

    def back(g):
        if x.requires_grad:
            gm = g.mean(axis=(2, 3), keepdims=True)
            gym = (g * y).mean(axis=(2, 3), keepdims=True)
            x._accumulate(inv * (g - gm - y * gym))

    return _result(y, "instance_norm", (x,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(g @ bd.T)
        if b.requires_grad:
            b._accumulate(ad.T @ g)

    return _result(ad @ bd, "matmul", (a, b), back)


# -- graph traversal ----------------------------------------------------------

def detach(t: Tensor) -> Tensor:
    """A tensor sharing t's values through which no gradient flows."""
    out = Tensor(t.data)
    out.op = "detach"
    return out


def backward(loss: Tensor) -> None:
    """Populate grad slots of every differentiable tensor reachable from loss.

    The loss must be scalar (rank 0) and must depend on at least one tensor
    with requires_grad set.  Each recorded operation's adjoint runs exactly
    once, in reverse execution order.
    """
    if loss.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any requires_grad tensor")

    nodes: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append(p)

    nodes.sort(key=lambda t: t._seq, reverse=True)
    loss.grad = np.ones_like(loss.data)
    for node in nodes:
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# -- verification oracle -------------------------------------------------------

def finite_diff_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> Tensor:
    """Central-difference gradient estimate of a scalar-valued f at x."""
    if eps <= 0:
        raise ValueError(f"finite_diff_grad: eps must be positive, got {eps}")
    base = x.data.astype(np.float64)
    out = np.zeros_like(base)
    flat = out.reshape(-1)
    for i in range(base.size):
        xp = base.copy().reshape(-1)
        xm = base.copy().reshape(-1)
        xp[i] += eps
        xm[i] -= eps
        fp = f(Tensor(xp.reshape(base.shape))).item()
        fm = f(Tensor(xm.reshape(base.shape))).item()
        flat[i] = (fp - fm) / (2.0 * eps)
    return Tensor(out)


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst per-coordinate relative error, floored at the gradient's scale.

    The denominator never drops below 1e-3 * (1 + max|numeric|) so that
    coordinates with near-zero gradients are judged against the vector's
    overall magnitude instead of finite-difference noise.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    floor = 1e-3 * (1.0 + float(np.abs(n).max(initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max(initial=0.0))


def gradcheck(f: Callable[[Tensor], Tensor], x: Tensor,
              eps: float = 1e-6, tol: float = 1e-5) -> float:
    """Check backward() against finite differences; returns the worst error.

    Raises AssertionError naming the worst coordinate when the tolerance is
    exceeded.  Run in float64: finite differences are unreliable in float32.
    """
    xt = Tensor(x.data.astype(np.float64), requires_grad=True)
    loss = f(xt)
    backward(loss)
    if xt.grad is None:
        raise AssertionError("gradcheck: no gradient reached the input")
    numeric = finite_diff_grad(f, xt, eps).data
    analytic = xt.grad
    err = max_rel_error(analytic, numeric)
    if err > tol:
        diff = np.abs(analytic - numeric).reshape(-1)
        worst = int(diff.argmax())
        raise AssertionError(
            f"gradcheck: relative error {err:.3e} > {tol:.1e} at flat index {worst} "
            f"(analytic {analytic.reshape(-1)[worst]:.6e}, numeric {numeric.reshape(-1)[worst]:.6e})")
    return err
