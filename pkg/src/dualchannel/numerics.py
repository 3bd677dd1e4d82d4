"""Dense numerics with hand-written reverse-mode rules.

Every primitive comes as a ``*_forward`` / ``*_backward`` pair working on
numpy arrays with a leading batch axis.  Parameters live in a
:class:`ParameterStore` whose gradient slots the backward functions fill;
:func:`adam_step` consumes and clears them.

Training runs in float32, gradient checks in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

EMBEDDING = "embedding"
OTHER = "other"
GROUPS = (EMBEDDING, OTHER)


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# parameters

@dataclass
class Parameter:
    value: np.ndarray
    group: str = OTHER
    grad: np.ndarray | None = None
    frozen_rows: tuple[int, ...] = ()

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def accumulate(self, g: np.ndarray):
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {self.value.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype, copy=True)
        else:
            self.grad += g


class ParameterStore:
    """Ordered name -> :class:`Parameter` map."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, group: str = OTHER,
            frozen_rows: tuple[int, ...] = ()) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        p = Parameter(np.ascontiguousarray(value, dtype=self.dtype), group,
                      frozen_rows=frozen_rows)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]):
        for n, v in values.items():
            p = self._params[n]
            if v.shape != p.value.shape:
                raise ShapeError(f"{n}: expected shape {p.value.shape}, got {v.shape}")
            p.value[...] = v


# ---------------------------------------------------------------------------
# primitives

def affine_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``y = x W^T + b`` over the last axis of ``x``."""
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W.T + b


def affine_backward(dy, x, W):
    """Return ``(dx, dW, db)``; leading axes of ``x`` are summed out."""
    d_out, d_in = W.shape
    dy2 = dy.reshape(-1, d_out)
    x2 = x.reshape(-1, d_in)
    return dy @ W, dy2.T @ x2, dy2.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(dy, x):
    # subgradient at exactly 0 is 0
    return dy * (x > 0)


def concat_forward(a, b):
    return np.concatenate([a, b], axis=-1)


def concat_backward(dy, split: int):
    return dy[..., :split], dy[..., split:]


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, gold):
    """Softmax probabilities and per-row cross-entropy ``-log p[gold]``.

    ``logits`` has shape (k,) or (B, k); ``gold`` is an int or (B,) ints.
    """
    logits = np.asarray(logits)
    k = logits.shape[-1]
    if k < 2:
        raise ShapeError("softmax_xent needs at least two classes")
    gold = np.asarray(gold)
    if np.any(gold < 0) or np.any(gold >= k):
        raise IndexError(f"gold class out of range for {k} classes: {gold}")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_probs = z - log_norm
    probs = np.exp(log_probs)
    loss = -np.take_along_axis(log_probs, gold[..., None], axis=-1)[..., 0]
    return probs, loss


def softmax_xent_backward(probs, gold, dloss=1.0):
    """Gradient w.r.t. the logits: ``dloss * (probs - onehot(gold))``."""
    g = probs.copy()
    gold = np.asarray(gold)
    if g.ndim == 1:
        g[gold] -= 1
    else:
        g[np.arange(g.shape[0]), gold] -= 1
    dl = np.asarray(dloss, dtype=g.dtype)
    return g * (dl[..., None] if dl.ndim else dl)


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1)


def lstm_cell_forward(x, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step. Gate rows of ``Wx``/``Wh``/``b`` are ordered i, f, g, o."""
    H = h_prev.shape[-1]
    if Wx.shape[0] != 4 * H or Wh.shape != (4 * H, H) or b.shape != (4 * H,) \
            or x.shape[-1] != Wx.shape[1] or c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm_cell: x{x.shape} h{h_prev.shape} Wx{Wx.shape} Wh{Wh.shape}")
    z = x @ Wx.T + h_prev @ Wh.T + b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc, Wx, Wh)


def lstm_cell_backward(dh, dc, cache):
    """Return ``(dx, dh_prev, dc_prev, dWx, dWh, db)``."""
    x, h_prev, c_prev, i, f, g, o, tc, Wx, Wh = cache
    dc = dc + dh * o * (1 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1 - i),
        dc * c_prev * f * (1 - f),
        dc * i * (1 - g * g),
        dh * tc * o * (1 - o),
    ], axis=-1)
    dz2 = dz.reshape(-1, dz.shape[-1])
    dWx = dz2.T @ x.reshape(-1, x.shape[-1])
    dWh = dz2.T @ h_prev.reshape(-1, h_prev.shape[-1])
    return dz @ Wx, dz @ Wh, dc * f, dWx, dWh, dz2.sum(axis=0)


def dropout_forward(x, rate: float, training: bool, rng: np.random.Generator | None):
    """Inverted dropout; returns ``(y, mask)`` where ``mask`` is None at inference."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


# ---------------------------------------------------------------------------
# optimisation

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState, lr_by_group: dict[str, float],
              clip_norm: float | None = None):
    """One bias-corrected Adam update; clears gradients afterwards.

    Rows listed in a parameter's ``frozen_rows`` receive no update.
    """
    missing = [n for n, p in store.items() if p.grad is None]
    if missing:
        raise ValueError(f"missing gradient for parameter(s): {', '.join(missing)}")
    scale = 1.0
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for _, p in store.items()))
        if total > clip_norm:
            scale = clip_norm / total
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1 - b1 ** state.t
    corr2 = 1 - b2 ** state.t
    for name, p in store.items():
        g = p.grad * p.value.dtype.type(scale) if scale != 1.0 else p.grad
        for row in p.frozen_rows:
            g[row] = 0
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        lr = lr_by_group[p.group]
        step = (lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)).astype(p.value.dtype)
        p.value -= step
        p.grad = None


# ---------------------------------------------------------------------------
# verification

def grad_check(closure: Callable[[], float], store: ParameterStore, eps: float = 1e-5,
               samples: int = 10, seed: int = 0, names: list[str] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``closure`` must zero the store's gradients, compute the loss, run the
    backward pass and return the loss.  ``samples`` coordinates per
    parameter are drawn with a generator seeded by ``seed``.
    """
    rng = np.random.default_rng(seed)
    closure()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
                for n, p in store.items()}
    worst = 0.0
    for name in names if names is not None else list(store):
        p = store[name]
        flat = p.value.reshape(-1)
        count = min(samples, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            up = closure()
            flat[k] = orig - eps
            down = closure()
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {name}[{k}]")
            numeric = (up - down) / (2 * eps)
            ana = float(analytic[name].reshape(-1)[k])
            if not np.isfinite(ana):
                raise NumericError(f"non-finite analytic gradient at {name}[{k}]")
            rel = abs(ana - numeric) / max(1e-8, abs(ana) + abs(numeric))
            worst = max(worst, rel)
    closure()
    return worst
