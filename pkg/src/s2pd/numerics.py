"""Dense tensors with reverse-mode gradients, plus an AdamW optimizer.

Every op records a closure that pushes the output gradient back to its
inputs. ``backward`` walks the graph in reverse topological order. Arrays
keep whatever float dtype they were built with: models run in float32,
gradient checks cast to float64.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

DTYPE = np.float32

_GRAD_ENABLED = True


class DimensionError(ValueError):
    pass


class TrainingError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block; used for inference and frozen teachers."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # operator sugar
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
        if isinstance(other, Tensor):
            raise TypeError("division only supported by scalars")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DTYPE))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = g.astype(t.data.dtype, copy=False)
    if t.grad is None:
        # interior grads may alias each other, so they are never updated in place
        t.grad = g.copy() if t._backward is None else g
    elif t._backward is None:
        t.grad += g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _operand(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


# elementwise -----------------------------------------------------------------


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _operand(b, a)
    out_data = a.data + b.data

    def _bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), _bw)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _operand(a, b)
    b = _operand(b, a)
    out_data = a.data - b.data

    def _bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), _bw)


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        # scalar scale keeps dtype and avoids building a constant node
        s = b

        def _bw_scalar(g):
            _accum(a, g * s)

        return _make((a.data * s).astype(a.dtype, copy=False), (a,), _bw_scalar)
    out_data = a.data * b.data

    def _bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), _bw)


def square(x: Tensor) -> Tensor:
    def _bw(g):
        _accum(x, 2.0 * x.data * g)

    return _make(x.data * x.data, (x,), _bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def _bw(g):
        _accum(x, g * mask)

    return _make(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), _bw)


# tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    x2 = xd * xd
    t = np.tanh(GELU_C * xd * (1.0 + GELU_A * x2))
    out = 0.5 * xd * (1.0 + t)

    def _bw(g):
        dinner = GELU_C * (1.0 + 3.0 * GELU_A * x2)
        d = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner
        _accum(x, g * d)

    return _make(out.astype(xd.dtype, copy=False), (x,), _bw)


# reductions and shape ops ----------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def _bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(out, dtype=x.dtype), (x,), _bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    def _bw(g):
        _accum(x, g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), _bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))

    def _bw(g):
        _accum(x, g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), _bw)


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def index(x: Tensor, idx) -> Tensor:
    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accum(x, full)

    return _make(x.data[idx], (x,), _bw)


# linear algebra --------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching rules; 1-D right operand is a vector."""
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError("matmul needs at least 1-D operands")
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def _bw(g):
        if b.ndim == 1:
            # (..., k) @ (k,) -> (...)
            if a.requires_grad:
                _accum(a, g[..., None] * b.data)
            if b.requires_grad:
                _accum(b, np.tensordot(g, a.data, axes=(range(g.ndim), range(g.ndim))))
            return
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            elif b.ndim == 2:
                # shared weight: fold batch axes into one GEMM
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.shape))

    return _make(out, (a, b), _bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def _bw(g):
        dot = np.sum(g * y, axis=axis, keepdims=True)
        _accum(x, y * (g - dot))

    return _make(y, (x,), _bw)


LN_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm affine shape {gain.shape}/{bias.shape} vs last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def _bw(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            _accum(x, gx)

    return _make(out.astype(x.dtype, copy=False), (x, gain, bias), _bw)


# graph traversal -------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers; callers zero them
    between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss._backward is None:
        _accum(loss, np.ones_like(loss.data))
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# parameters, rng, optimizer ---------------------------------------------------


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=DTYPE), requires_grad=True, name=name)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the same seed replays the same draws."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


@dataclass
class AdamWConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


class AdamW:
    """AdamW with decoupled weight decay and bias-corrected moments.

    p <- p - lr * wd * p
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params: list[Tensor], config: AdamWConfig | None = None):
        self.params = list(params)
        self.config = config or AdamWConfig()
        self.lr = self.config.lr  # current rate; schedules overwrite it between steps
        self.state = OptimizerState(
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        cfg = self.config
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in parameter {p.name or '?'} at step {self.state.step + 1}")
            grads.append(g)
        self.state.step += 1
        t = self.state.step
        lr = self.lr
        if lr == 0.0:
            return
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        for p, g, m, v in zip(self.params, grads, self.state.m, self.state.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            if cfg.weight_decay:
                p.data -= (lr * cfg.weight_decay) * p.data
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def adamw_step(params: list[Tensor], grads: list[np.ndarray], opt: AdamW) -> None:
    """Functional form: install ``grads`` and take one optimizer step."""
    if len(grads) != len(params):
        raise DimensionError("one gradient per parameter")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} vs parameter {p.shape}")
        p.grad = np.asarray(g, dtype=p.dtype)
    opt.step()


# finite differences ------------------------------------------------------------


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (perturbs ``x`` in place, restores it)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative difference, 0 when both are zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


class Module:
    """Named parameter container shared by the teacher and student."""

    params: dict[str, Tensor]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def count_params(self, exclude_prefix: str | None = None) -> int:
        return sum(p.data.size for n, p in self.params.items()
                   if exclude_prefix is None or not n.startswith(exclude_prefix))

    def fp32_bytes(self) -> int:
        return 4 * self.count_params()

    def astype(self, dtype) -> None:
        for p in self.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for n, p in self.params.items():
            if n not in state:
                if strict:
                    raise KeyError(f"missing parameter {n}")
                continue
            arr = np.asarray(state[n])
            if arr.shape != p.shape:
                raise DimensionError(f"parameter {n}: shape {arr.shape} vs expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)
