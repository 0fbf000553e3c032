"""A small reverse-mode automatic differentiation engine on top of numpy.

Each differentiable operation records its parents and a backward rule on the
output Tensor; ``backward`` walks that dynamic tape once in reverse
topological order and accumulates gradients on leaves that require them.
The tape is released after use, so a second backward through the same graph
raises ``StaleTapeError``.

Precision is a single global switch: float64 (default, used by gradient
checks) or float32 (training and evaluation throughput).
"""
from __future__ import annotations

import contextlib
import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

_DTYPE = np.float64
_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


class StaleTapeError(RuntimeError):
    pass


def set_precision(name: str) -> None:
    global _DTYPE
    _DTYPE = {"float64": np.float64, "float32": np.float32}[name]


def get_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(name: str):
    old = _DTYPE
    set_precision(name)
    try:
        yield
    finally:
        globals()["_DTYPE"] = old


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != _DTYPE:
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._released = False
        self.name = name

    # -- basic properties
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
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- operators
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return sum_(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=_DTYPE), requires_grad=True, name=name)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0).astype(a.data.dtype), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    r = np.sqrt(a.data)
    return _make(r, (a,), lambda g: (g * 0.5 / r,))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def atanh(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.arctanh(a.data), (a,), lambda g: (g / (1.0 - a.data * a.data),))


def softplus(a) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    return _make(out, (a,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * x)),))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient passes inside the interval and is zero outside."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------- linear algebra / shapes


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), bw)


def take(a, indices: np.ndarray, axis: int = -1) -> Tensor:
    """Gather along one axis with an integer index array of any shape."""
    a = as_tensor(a)
    indices = np.asarray(indices)
    ax = axis % a.ndim
    out = np.take(a.data, indices, axis=ax)

    def bw(g):
        moved = np.moveaxis(np.zeros_like(a.data), ax, 0)
        gm = np.moveaxis(g.reshape(a.shape[:ax] + (indices.size,) + a.shape[ax + 1:]), ax, 0)
        np.add.at(moved, indices.ravel(), gm)
        return (np.moveaxis(moved, 0, ax),)

    return _make(out, (a,), bw)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def prod_except(a, axis: int = -1) -> Tensor:
    """out[..., j] = prod_{i != j} a[..., i] along ``axis``, without division."""
    a = as_tensor(a)
    x = np.moveaxis(a.data, axis, -1)
    d = x.shape[-1]
    ones = np.ones(x.shape[:-1] + (1,), dtype=x.dtype)
    prefix = np.concatenate([ones, np.cumprod(x[..., :-1], axis=-1)], axis=-1)
    suffix = np.concatenate([np.cumprod(x[..., ::-1][..., :-1], axis=-1)[..., ::-1], ones], axis=-1)
    out = prefix * suffix

    def bw(g):
        gm = np.moveaxis(g, axis, -1)
        gx = np.zeros_like(x)
        for i in range(d):
            # d out_j / d x_i = prod_{k != i, j} x_k for j != i
            others = np.delete(x, i, axis=-1)
            g_others = np.delete(gm, i, axis=-1)
            gx[..., i] = np.sum(g_others * _prod_except_np(others), axis=-1)
        return (np.moveaxis(gx, -1, axis),)

    return _make(np.moveaxis(out, -1, axis), (a,), bw)


def _prod_except_np(x: np.ndarray) -> np.ndarray:
    ones = np.ones(x.shape[:-1] + (1,), dtype=x.dtype)
    if x.shape[-1] == 0:
        return x
    prefix = np.concatenate([ones, np.cumprod(x[..., :-1], axis=-1)], axis=-1)
    suffix = np.concatenate([np.cumprod(x[..., ::-1][..., :-1], axis=-1)[..., ::-1], ones], axis=-1)
    return prefix * suffix


# ---------------------------------------------------------------- normalisations


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(s, (a,), lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),))


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return _make(out, (a,), lambda g: (g - sm * np.sum(g, axis=axis, keepdims=True),))


def layernorm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    d = x.shape[-1]

    def bw(g):
        gg = g * gain.data
        gx = inv / d * (d * gg - gg.sum(axis=-1, keepdims=True)
                        - xhat * np.sum(gg * xhat, axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bw)


# ---------------------------------------------------------------- backward


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen = set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into ``leaf.grad`` for every leaf requiring gradients."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._released:
        raise StaleTapeError("backward already ran through this graph")
    if not loss.requires_grad:
        return
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._released:
            raise StaleTapeError("graph node was released by an earlier backward")
        if node._backward is None:
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node._released = True


def gradcheck(fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5,
              max_entries: int | None = None, rng: np.random.Generator | None = None):
    """Compare reverse-mode gradients of a scalar ``fn()`` with central differences.

    Returns a list of (analytic, numeric) array pairs, one per parameter,
    restricted to ``max_entries`` randomly chosen coordinates when given.
    """
    params = list(params)
    for p in params:
        p.grad = None
    backward(fn())
    results = []
    rng = rng or np.random.default_rng(0)
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        numeric = np.empty(idx.size)
        with no_grad():
            for t, i in enumerate(idx):
                old = flat[i]
                flat[i] = old + eps
                up = fn().item()
                flat[i] = old - eps
                down = fn().item()
                flat[i] = old
                numeric[t] = (up - down) / (2 * eps)
        results.append((analytic.reshape(-1)[idx], numeric))
    return results


# ---------------------------------------------------------------- optimisation


class AdamState:
    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(state.m):
        raise ShapeError("parameter count does not match optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState(self.params, betas[0], betas[1], eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)


def lr_schedule(epoch: int, total: int, base_lr: float) -> float:
    """Linear decay from base_lr at epoch 0 to zero at ``total``."""
    return base_lr * max(0.0, 1.0 - epoch / total)


# ---------------------------------------------------------------- checkpoints


class CheckpointError(ValueError):
    pass


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write ``manifest.json`` plus ``params.bin`` (little-endian float32) into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name in arrays:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"format": "transcoder-checkpoint-1", "meta": meta or {}, "tensors": entries}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (path / "params.bin").write_bytes(b"".join(blobs))


def load_arrays(path: str | Path, expected: dict[str, tuple] | None = None) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        raw = (path / "params.bin").read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"incomplete checkpoint at {path}: {e}") from None
    arrays = {}
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        count = int(np.prod(shape))
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=e["offset"]).reshape(shape).copy()
    if expected is not None:
        missing = set(expected) - set(arrays)
        extra = set(arrays) - set(expected)
        if missing or extra:
            raise CheckpointError(f"checkpoint tensors differ from model: missing {sorted(missing)}, "
                                  f"unexpected {sorted(extra)}")
        for name, shape in expected.items():
            if tuple(arrays[name].shape) != tuple(shape):
                raise CheckpointError(f"{name}: checkpoint shape {arrays[name].shape} != model shape {tuple(shape)}")
    return arrays, manifest["meta"]
