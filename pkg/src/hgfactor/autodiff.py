"""Reverse-mode automatic differentiation over dense float64 arrays.

Every numeric module in this package does its arithmetic on :class:`Tensor`
so that any scalar loss can be differentiated with :meth:`Tape.backward` and
cross-checked against central finite differences (:func:`finite_diff_check`).

Design constraints:

* float64 everywhere, arrays up to rank 3;
* one :class:`Tape` per forward/backward cycle, entered as a context manager;
* any non-finite op output aborts immediately with the op name (silent
  NaN propagation is the worst failure mode for low signal-to-noise training).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class TapeError(RuntimeError):
    """Tape misuse: backward on a non-scalar, repeated backward, etc."""


_ACTIVE_TAPE: "Tape | None" = None


def active_tape() -> "Tape | None":
    return _ACTIVE_TAPE


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Values are treated as immutable once created; only ``grad`` is mutated
    (by :meth:`Tape.backward` and the optimizer's ``zero_grad``).
    """

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False, _check: bool = True):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim > 3:
            raise ShapeError(f"rank {arr.ndim} tensor not supported (max 3)")
        if _check and not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor created with non-finite values")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; non-Tensor operands are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed ops; replaying it in reverse yields gradients."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []
        self._spent = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _record(self, out: Tensor, backward_fn):
        self._nodes.append((out, backward_fn))

    def reset(self):
        self._nodes.clear()
        self._spent = False

    def backward(self, loss: Tensor):
        """Populate ``grad`` on every requires_grad tensor reachable from loss."""
        if self._spent:
            raise TapeError("backward already called on this tape; reset() first")
        if loss.values.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise TapeError("loss is detached from the tape (no requires_grad input)")
        self._spent = True
        loss.grad = np.ones_like(loss.values)
        for out, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue
            backward_fn(out.grad)


def _accumulate(t: Tensor, g: np.ndarray, op: str):
    if not t.requires_grad:
        return
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite gradient produced in backward of '{op}'")
    if g.shape != t.values.shape:
        raise ShapeError(f"gradient shape {g.shape} != value shape {t.values.shape}")
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _make(op: str, values: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    rg = _ACTIVE_TAPE is not None and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.requires_grad = rg
    out.grad = None
    if rg:
        _ACTIVE_TAPE._record(out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast on the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape), "add")
        _accumulate(b, _unbroadcast(g, b.shape), "add")

    return _make("add", a.values + b.values, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape), "sub")
        _accumulate(b, _unbroadcast(-g, b.shape), "sub")

    return _make("sub", a.values - b.values, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g * b.values, a.shape), "mul")
        _accumulate(b, _unbroadcast(g * a.values, b.shape), "mul")

    return _make("mul", a.values * b.values, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, _unbroadcast(g / b.values, a.shape), "div")
        _accumulate(b, _unbroadcast(-g * a.values / (b.values * b.values), b.shape), "div")

    return _make("div", a.values / b.values, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g, "neg")

    return _make("neg", -a.values, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product. dL/da = dL/dc @ b.T, dL/db = a.T @ dL/dc."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.values.T, "matmul")
        _accumulate(b, a.values.T @ g, "matmul")

    return _make("matmul", a.values @ b.values, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a rank-2 tensor, got {a.shape}")

    def backward(g):
        _accumulate(a, g.T, "transpose")

    return _make("transpose", a.values.T.copy(), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape), "reshape")

    return _make("reshape", a.values.reshape(shape), (a,), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy(), "sum")

    return _make("sum", a.values.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.values.size

    def backward(g):
        _accumulate(a, np.full(a.shape, float(g) / n), "mean")

    return _make("mean", np.asarray(a.values.mean()), (a,), backward)


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p with constant exponent."""
    out_v = a.values ** p

    def backward(g):
        _accumulate(a, g * p * a.values ** (p - 1.0), "power")

    return _make("power", out_v, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    return power(a, 0.5)


def clip_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient is zero on the floored entries."""
    mask = a.values > floor

    def backward(g):
        _accumulate(a, g * mask, "clip_min")

    return _make("clip_min", np.maximum(a.values, floor), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_v = np.exp(a.values)

    def backward(g):
        _accumulate(a, g * out_v, "exp")

    return _make("exp", out_v, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g / a.values, "log")

    return _make("log", np.log(a.values), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    """Numerically stable logistic; branches on sign so exp never overflows."""
    v = a.values
    out_v = np.empty_like(v)
    pos = v >= 0
    out_v[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out_v[~pos] = ev / (1.0 + ev)

    def backward(g):
        _accumulate(a, g * out_v * (1.0 - out_v), "sigmoid")

    return _make("sigmoid", out_v, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_v = np.tanh(a.values)

    def backward(g):
        _accumulate(a, g * (1.0 - out_v * out_v), "tanh")

    return _make("tanh", out_v, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    """x if x >= 0 else slope*x. Requires slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0,1), got {slope}")
    factor = np.where(a.values >= 0.0, 1.0, slope)

    def backward(g):
        _accumulate(a, g * factor, "leaky_relu")

    return _make("leaky_relu", a.values * factor, (a,), backward)


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class RunningStats:
    """Exponential-moving-average batch statistics for one normalized axis."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def create(cls, dim: int, momentum: float = 0.1) -> "RunningStats":
        return cls(np.zeros(dim), np.ones(dim), momentum)

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy(), self.momentum)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
               training: bool, eps: float = 1e-5) -> Tensor:
    """Normalize an (n, d) batch per column.

    Train mode normalizes by batch mean/population variance and updates the
    running stats in place; eval mode uses the running stats. The n=1
    zero-variance case is kept finite by the eps clamp (output = beta).
    """
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects (n, d), got {x.shape}")
    if eps <= 0:
        raise ValueError("batch_norm eps must be > 0")
    n = x.shape[0]
    if training:
        mu = x.values.mean(axis=0)
        var = x.values.var(axis=0)
        stats.mean = (1.0 - stats.momentum) * stats.mean + stats.momentum * mu
        stats.var = (1.0 - stats.momentum) * stats.var + stats.momentum * var
    else:
        mu = stats.mean
        var = stats.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv_std
    out_v = gamma.values * xhat + beta.values

    def backward(g):
        _accumulate(gamma, (g * xhat).sum(axis=0), "batch_norm")
        _accumulate(beta, g.sum(axis=0), "batch_norm")
        if training:
            gxhat_mean = (g * xhat).mean(axis=0)
            g_mean = g.mean(axis=0)
            dx = gamma.values * inv_std * (g - g_mean - xhat * gxhat_mean)
        else:
            dx = gamma.values * inv_std * g
        _accumulate(x, dx, "batch_norm")

    return _make("batch_norm", out_v, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# gradient verification oracle


def finite_diff_check(f, params, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-finite-difference grads.

    ``f`` is a deterministic zero-argument callable returning a scalar Tensor
    computed from ``params`` (a list of requires_grad Tensors). Relative error
    per entry is |analytic - numeric| / (|analytic| + |numeric| + 1e-12).

    Independent of the tape's backward path on the numeric side: numeric
    evaluations run without any tape.
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be > 0")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().values)
            flat[i] = orig - h
            f_minus = float(f().values)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(gflat[i] - numeric) / (abs(gflat[i]) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
