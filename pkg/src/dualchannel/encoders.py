"""Sequence encoders.

:class:`BiLSTMEncoder` is the only concrete encoder.  Anything exposing the
same ``forward(X, lengths, store) -> (out, cache)`` / ``backward(dout, cache,
store) -> dX`` pair and an ``output_dim`` can stand in for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import ParameterStore, ShapeError

POOLINGS = ("final", "mean")


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 300
    hidden_dim: int = 150
    pooling: str = "final"

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("encoder dimensions must be >= 1")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """Per-row permutation reversing the first ``len`` steps, padding left alone."""
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


class BiLSTMEncoder:
    """Single-layer bidirectional LSTM.

    Parameters are registered in the store under ``<prefix>.fw.*`` and
    ``<prefix>.bw.*``.  The output is ``[h_fw; h_bw]`` of width ``2H``:
    the final hidden state of each direction, or the mean of hidden states
    over valid steps with ``pooling="mean"``.  Empty sequences encode to
    zeros.
    """

    def __init__(self, config: EncoderConfig, prefix: str, store: ParameterStore,
                 rng: np.random.Generator, init_scale: float = 0.1):
        self.config = config
        self.prefix = prefix
        H, E = config.hidden_dim, config.input_dim
        for d in ("fw", "bw"):
            store.add(f"{prefix}.{d}.Wx", rng.uniform(-init_scale, init_scale, (4 * H, E)))
            store.add(f"{prefix}.{d}.Wh", rng.uniform(-init_scale, init_scale, (4 * H, H)))
            store.add(f"{prefix}.{d}.b", np.zeros(4 * H))

    @property
    def output_dim(self) -> int:
        return 2 * self.config.hidden_dim

    def _run(self, xs, mask, store, d):
        Wx = store[f"{self.prefix}.{d}.Wx"].value
        Wh = store[f"{self.prefix}.{d}.Wh"].value
        b = store[f"{self.prefix}.{d}.b"].value
        xproj = np.ascontiguousarray(xs @ Wx.T + b)
        return kernels.lstm_forward(xproj, mask, Wh)

    def forward(self, X: np.ndarray, lengths: np.ndarray, store: ParameterStore):
        """Encode a padded batch ``X`` of shape (B, T, input_dim)."""
        B, T, E = X.shape
        if E != self.config.input_dim:
            raise ShapeError(f"{self.prefix}: expected input width {self.config.input_dim}, got {E}")
        H = self.config.hidden_dim
        lengths = np.asarray(lengths, dtype=np.int64)
        if T == 0:
            return np.zeros((B, 2 * H), dtype=X.dtype), (B, T, lengths, None)
        mask = (np.arange(T)[:, None] < lengths[None, :]).astype(X.dtype)  # (T, B)
        rev = _reverse_index(lengths, T)
        xs_fw = np.ascontiguousarray(X.transpose(1, 0, 2))
        xs_bw = np.ascontiguousarray(np.take_along_axis(X, rev[:, :, None], axis=1).transpose(1, 0, 2))
        fw = self._run(xs_fw, mask, store, "fw")
        bw = self._run(xs_bw, mask, store, "bw")
        if self.config.pooling == "final":
            out = np.concatenate([fw[0][T], bw[0][T]], axis=-1)
        else:
            denom = np.maximum(lengths, 1).astype(X.dtype)[:, None]
            m3 = mask[:, :, None]
            out = np.concatenate([(m3 * fw[0][1:]).sum(0), (m3 * bw[0][1:]).sum(0)], axis=-1) / denom
        return out, (B, T, lengths, (mask, rev, xs_fw, xs_bw, fw, bw))

    def backward(self, dout: np.ndarray, cache, store: ParameterStore) -> np.ndarray:
        """Accumulate parameter gradients; return dL/dX of shape (B, T, input_dim)."""
        B, T, lengths, inner = cache
        E, H = self.config.input_dim, self.config.hidden_dim
        if inner is None:
            for d in ("fw", "bw"):
                for k in ("Wx", "Wh", "b"):
                    p = store[f"{self.prefix}.{d}.{k}"]
                    p.accumulate(np.zeros_like(p.value))
            return np.zeros((B, T, E), dtype=dout.dtype)
        mask, rev, xs_fw, xs_bw, fw, bw = inner
        dX = np.zeros((B, T, E), dtype=dout.dtype)
        for d, xs, (hs, cs, gates), half in (("fw", xs_fw, fw, dout[:, :H]),
                                              ("bw", xs_bw, bw, dout[:, H:])):
            dhs = np.zeros((T, B, H), dtype=dout.dtype)
            if self.config.pooling == "final":
                # masked steps copy state forward, so the last slot reaches every row's true end
                dhs[T - 1] = half
            else:
                denom = np.maximum(lengths, 1).astype(dout.dtype)[:, None]
                dhs[:] = mask[:, :, None] * (half / denom)[None]
            Wx = store[f"{self.prefix}.{d}.Wx"]
            Wh = store[f"{self.prefix}.{d}.Wh"]
            b = store[f"{self.prefix}.{d}.b"]
            dz = kernels.lstm_backward(dhs, mask, Wh.value, hs, cs, gates)
            dz2 = dz.reshape(-1, 4 * H)
            Wx.accumulate(dz2.T @ xs.reshape(-1, E))
            Wh.accumulate(dz2.T @ hs[:-1].reshape(-1, H))
            b.accumulate(dz2.sum(axis=0))
            dxs = (dz @ Wx.value).transpose(1, 0, 2)  # (B, T, E)
            if d == "fw":
                dX += dxs
            else:
                np.put_along_axis(dX, rev[:, :, None], np.take_along_axis(dX, rev[:, :, None], axis=1) + dxs, axis=1)
        return dX
