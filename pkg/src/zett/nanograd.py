"""Dense-tensor reverse-mode autodiff on numpy, plus the optimizers.

64-bit floats by default so gradient checks and training trajectories
are reproducible; pass dtype=np.float32 to tensor()/param() for speed.
The graph is recorded implicitly on the tensors; backward(loss) topo-
sorts it, seeds d(loss)=1 and runs each node's closure once. A second
backward over the same recording raises StaleTape.
"""

import math
from contextlib import contextmanager

import numpy as np

from .errors import NotScalar, ShapeMismatch, StaleTape

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=np.float64):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self):
        backward(self)


def tensor(data, requires_grad=False, dtype=np.float64) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def param(data, dtype=np.float64) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _as_tensor(x, like=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _record(out: Tensor, parents, backward_fn):
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum gradient over axes introduced or broadcast by numpy rules."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def build_tape(loss: Tensor) -> list:
    """Recorded nodes reachable from `loss`, in topological order."""
    tape = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            tape.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return tape


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise NotScalar(f"loss has shape {loss.data.shape}")
    if loss._consumed:
        raise StaleTape("backward() already ran on this recording; re-run forward")
    tape = build_tape(loss)
    for node in tape:
        node._consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# forward ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = Tensor(a.data + b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    _record(out, (a, b), bwd)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = Tensor(a.data - b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    _record(out, (a, b), bwd)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = Tensor(a.data * b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    _record(out, (a, b), bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                k = a.data.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
                gb = _unbroadcast(gb, b.data.shape)
            _accum(b, gb)

    _record(out, (a, b), bwd)
    return out


def gather(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of `table` at integer `ids` (any shape)."""
    ids = np.asarray(ids)
    out = Tensor(table.data[ids])

    def bwd(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
            _accum(table, gt)

    _record(out, (table,), bwd)
    return out


def take(x: Tensor, idx) -> Tensor:
    """Basic (slice / integer) indexing with gradient."""
    out = Tensor(x.data[idx])

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            _accum(x, gx)

    _record(out, (x,), bwd)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    _record(out, (x,), bwd)
    return out


def transpose(x: Tensor, axes) -> Tensor:
    out = Tensor(x.data.transpose(axes))
    inv = np.argsort(axes)

    def bwd(g):
        _accum(x, g.transpose(inv))

    _record(out, (x,), bwd)
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    _record(out, tuple(tensors), bwd)
    return out


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape).copy())

    _record(out, (x,), bwd)
    return out


def tmean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(x: Tensor, axis=-1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - dot))

    _record(out, (x,), bwd)
    return out


def gelu(x: Tensor) -> Tensor:
    c = math.sqrt(2.0 / math.pi)
    inner = c * (x.data + 0.044715 * x.data**3)
    t = np.tanh(inner)
    out = Tensor(0.5 * x.data * (1.0 + t))

    def bwd(g):
        dinner = c * (1.0 + 3 * 0.044715 * x.data**2)
        dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * dinner
        _accum(x, g * dx)

    _record(out, (x,), bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data)

    def bwd(g):
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))

    _record(out, (x, gain, bias), bwd)
    return out


def cross_entropy(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean next-token cross-entropy in nats over (optionally masked) rows.

    logits: (N, V); labels: (N,) int; mask: optional (N,) selecting the
    rows that count (e.g. real positions of a padded batch). Label
    shifting for causal LM is the caller's concern.
    """
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ShapeMismatch(f"cross_entropy {logits.data.shape} vs {labels.shape}")
    n, v = logits.data.shape
    w = np.ones(n) if mask is None else np.asarray(mask, dtype=logits.data.dtype)
    denom = w.sum()
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    sume = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(sume)).ravel()
    picked = logits.data[np.arange(n), labels]
    out = Tensor(((lse - picked) * w).sum() / denom)

    def bwd(g):
        if logits.requires_grad:
            p = e / sume
            p[np.arange(n), labels] -= 1.0
            _accum(logits, g * p * (w / denom)[:, None])

    _record(out, (logits,), bwd)
    return out


def l2_rows(a: Tensor, b: Tensor) -> Tensor:
    """Mean over rows of the Euclidean distance between matching rows."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"l2_rows {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    sq = (diff * diff).sum(axis=-1)
    d = np.sqrt(sq)
    out = Tensor(d.mean())

    def bwd(g):
        n = d.size
        scale = g / (n * np.maximum(d, 1e-12))
        grad = diff * scale.reshape(scale.shape + (1,))
        _accum(a, grad)
        _accum(b, -grad)

    _record(out, (a, b), bwd)
    return out


# ---------------------------------------------------------------------------
# optimizers


def clip_global_norm(params, max_norm: float) -> float:
    """Rescale all gradients in place iff their global norm exceeds max_norm."""
    total = 0.0
    grads = [p.grad for p in params if p.grad is not None]
    for g in grads:
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def lr_schedule(step: int, peak: float, total_steps: int, warmup_steps: int, floor: float = 0.0) -> float:
    """Linear warmup to `peak`, then cosine decay to `floor` at total_steps."""
    if step <= warmup_steps:
        return peak * step / max(warmup_steps, 1)
    if step >= total_steps:
        return floor
    frac = (step - warmup_steps) / (total_steps - warmup_steps)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * frac))


class AdamW:
    """Decoupled-weight-decay Adam over a name->Tensor parameter dict."""

    def __init__(self, params: dict, lr=6e-5, betas=(0.9, 0.95), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
