"""The dual-channel sarcasm classifier.

Data flow for one batch::

    W_L --Encoder_L--> v_L --W_r--> P_l
    W_D --Encoder_D--> v_D --W_z--> P_d
    W_T --Encoder_T--> v_T
    v_L' = relu(W_l [v_L; v_T] + b_l)
    v_D' = relu(W_d [v_D; v_T] + b_d)
    P_s  = softmax(W_p analyzer(v_L', v_D') + b_p)

Sentiment heads use class 0 = negative, 1 = positive; the sarcasm head
uses 0 = not sarcastic, 1 = sarcastic.
"""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .encoders import BiLSTMEncoder, EncoderConfig

ANALYZERS = ("concat", "subtract", "cosine")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 2
    input_dim: int = 300
    hidden_dim: int = 150
    pooling: str = "final"
    proj_dim: int | None = None
    analyzer: str = "concat"
    dropout_embedding: float = 0.0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.analyzer not in ANALYZERS:
            raise ValueError(f"analyzer must be one of {ANALYZERS}, got {self.analyzer!r}")
        if self.analyzer == "cosine":
            raise NotImplementedError("cosine analyzer is reserved but not implemented")
        if not 0 <= self.dropout_embedding < 1:
            raise ValueError("dropout_embedding must be in [0, 1)")

    @property
    def d_proj(self) -> int:
        return self.proj_dim if self.proj_dim is not None else 2 * self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError(f"invalid loss weights {self}")


@dataclass
class ForwardOutput:
    v_L: np.ndarray
    v_D: np.ndarray
    v_T: np.ndarray
    v_L2: np.ndarray
    v_D2: np.ndarray
    P_l: np.ndarray
    P_d: np.ndarray
    P_s: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


class DCNet:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32,
                 embeddings: np.ndarray | None = None):
        self.config = config
        self.store = nx.ParameterStore(dtype)
        rng = np.random.default_rng(seed)
        V, E, H = config.vocab_size, config.input_dim, config.hidden_dim
        dp, s = config.d_proj, config.init_scale
        if embeddings is None:
            emb = rng.uniform(-0.05, 0.05, (V, E))
            emb[0] = 0
        else:
            if embeddings.shape != (V, E):
                raise nx.ShapeError(f"embedding matrix {embeddings.shape} != {(V, E)}")
            emb = embeddings
        # row 0 is PAD: zero and never updated
        self.store.add("embedding", emb, nx.EMBEDDING, frozen_rows=(0,))
        enc_cfg = EncoderConfig(E, H, config.pooling)
        self.enc_l = BiLSTMEncoder(enc_cfg, "enc_l", self.store, rng, s)
        self.enc_d = BiLSTMEncoder(enc_cfg, "enc_d", self.store, rng, s)
        self.enc_t = BiLSTMEncoder(enc_cfg, "enc_t", self.store, rng, s)
        add = self.store.add
        add("W_r", rng.uniform(-s, s, (2, 2 * H)))
        add("b_r", np.zeros(2))
        add("W_z", rng.uniform(-s, s, (2, 2 * H)))
        add("b_z", np.zeros(2))
        add("W_l", rng.uniform(-s, s, (dp, 4 * H)))
        add("b_l", np.zeros(dp))
        add("W_d", rng.uniform(-s, s, (dp, 4 * H)))
        add("b_d", np.zeros(dp))
        # analyzer weights come last so both analyzer modes share every other tensor
        add("W_p", rng.uniform(-s, s, (2, self.analyzer_width)))
        add("b_p", np.zeros(2))

    @property
    def dtype(self):
        return self.store.dtype

    @property
    def analyzer_width(self) -> int:
        return 2 * self.config.d_proj if self.config.analyzer == "concat" else self.config.d_proj

    def _p(self, name):
        return self.store[name].value

    def _embed(self, idx, training, rng):
        V = self.config.vocab_size
        if idx.size and (idx.min() < 0 or idx.max() >= V):
            raise IndexError("token index outside the vocabulary; indexing pipeline is inconsistent")
        X = self._p("embedding")[idx]
        return nx.dropout_forward(X, self.config.dropout_embedding, training, rng)

    def forward(self, batch, training: bool = False, rng: np.random.Generator | None = None) -> ForwardOutput:
        if training and self.config.dropout_embedding > 0 and rng is None:
            raise ValueError("training with dropout needs an rng")
        X_l, m_l = self._embed(batch.l_idx, training, rng)
        X_d, m_d = self._embed(batch.d_idx, training, rng)
        X_t, m_t = self._embed(batch.t_idx, training, rng)
        v_L, c_l = self.enc_l.forward(X_l, batch.l_len, self.store)
        v_D, c_d = self.enc_d.forward(X_d, batch.d_len, self.store)
        v_T, c_t = self.enc_t.forward(X_t, batch.t_len, self.store)

        z_l = nx.affine_forward(v_L, self._p("W_r"), self._p("b_r"))
        z_d = nx.affine_forward(v_D, self._p("W_z"), self._p("b_z"))
        lt = nx.concat_forward(v_L, v_T)
        dt = nx.concat_forward(v_D, v_T)
        a_l = nx.affine_forward(lt, self._p("W_l"), self._p("b_l"))
        a_d = nx.affine_forward(dt, self._p("W_d"), self._p("b_d"))
        v_L2 = nx.relu_forward(a_l)
        v_D2 = nx.relu_forward(a_d)
        if self.config.analyzer == "concat":
            u = nx.concat_forward(v_L2, v_D2)
        else:
            u = v_L2 - v_D2
        z_s = nx.affine_forward(u, self._p("W_p"), self._p("b_p"))
        cache = dict(m_l=m_l, m_d=m_d, m_t=m_t, c_l=c_l, c_d=c_d, c_t=c_t,
                     lt=lt, dt=dt, a_l=a_l, a_d=a_d, u=u, z_l=z_l, z_d=z_d, z_s=z_s)
        return ForwardOutput(v_L, v_D, v_T, v_L2, v_D2,
                             nx.softmax(z_l), nx.softmax(z_d), nx.softmax(z_s), cache)

    def loss(self, out: ForwardOutput, batch, weights: LossWeights) -> dict[str, float]:
        """Batch-mean objective and its three components.

        ``J_l`` and ``J_d`` are means over the batch of masked per-example
        terms, so ``total = lambda1*J_s + lambda2*J_l + lambda3*J_d``.
        """
        c = out.cache
        _, xs = nx.softmax_xent(c["z_s"], batch.y_s)
        _, xl = nx.softmax_xent(c["z_l"], batch.y_l)
        _, xd = nx.softmax_xent(c["z_d"], batch.y_d)
        aux = batch.aux.astype(xs.dtype)
        J_s = float(np.mean(xs))
        J_l = float(np.mean(aux * xl))
        J_d = float(np.mean(aux * xd))
        total = float(np.mean(weights.lambda1 * xs + aux * (weights.lambda2 * xl + weights.lambda3 * xd)))
        return {"loss": total, "J_s": J_s, "J_l": J_l, "J_d": J_d}

    def backward(self, out: ForwardOutput, batch, weights: LossWeights):
        """Accumulate dL/dtheta for the batch-mean loss into the store."""
        c = out.cache
        st = self.store
        B = batch.y_s.shape[0]
        dt_ = self.dtype.type
        aux = batch.aux.astype(self.dtype)
        dz_s = nx.softmax_xent_backward(out.P_s, batch.y_s, dt_(weights.lambda1 / B))
        dz_l = nx.softmax_xent_backward(out.P_l, batch.y_l, aux * dt_(weights.lambda2 / B))
        dz_d = nx.softmax_xent_backward(out.P_d, batch.y_d, aux * dt_(weights.lambda3 / B))

        du, dW, db = nx.affine_backward(dz_s, c["u"], self._p("W_p"))
        st["W_p"].accumulate(dW)
        st["b_p"].accumulate(db)
        if self.config.analyzer == "concat":
            dv_L2, dv_D2 = nx.concat_backward(du, self.config.d_proj)
        else:
            dv_L2, dv_D2 = du, -du
        da_l = nx.relu_backward(dv_L2, c["a_l"])
        da_d = nx.relu_backward(dv_D2, c["a_d"])
        dlt, dW, db = nx.affine_backward(da_l, c["lt"], self._p("W_l"))
        st["W_l"].accumulate(dW)
        st["b_l"].accumulate(db)
        ddt, dW, db = nx.affine_backward(da_d, c["dt"], self._p("W_d"))
        st["W_d"].accumulate(dW)
        st["b_d"].accumulate(db)
        w = 2 * self.config.hidden_dim
        dv_L, dv_T1 = nx.concat_backward(dlt, w)
        dv_D, dv_T2 = nx.concat_backward(ddt, w)
        dv_T = dv_T1 + dv_T2

        dv_Lh, dW, db = nx.affine_backward(dz_l, out.v_L, self._p("W_r"))
        st["W_r"].accumulate(dW)
        st["b_r"].accumulate(db)
        dv_Dh, dW, db = nx.affine_backward(dz_d, out.v_D, self._p("W_z"))
        st["W_z"].accumulate(dW)
        st["b_z"].accumulate(db)
        dv_L = dv_L + dv_Lh
        dv_D = dv_D + dv_Dh

        dE = np.zeros_like(self._p("embedding"))
        for enc, dv, key, idx in ((self.enc_l, dv_L, "l", batch.l_idx),
                                  (self.enc_d, dv_D, "d", batch.d_idx),
                                  (self.enc_t, dv_T, "t", batch.t_idx)):
            dX = enc.backward(np.ascontiguousarray(dv), c["c_" + key], st)
            dX = nx.dropout_backward(dX, c["m_" + key])
            np.add.at(dE, idx.reshape(-1), dX.reshape(-1, dX.shape[-1]))
        dE[0] = 0
        st["embedding"].accumulate(dE)

    def step_loss(self, batch, weights: LossWeights, training: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[ForwardOutput, dict]:
        """Forward, loss and backward in one call (gradients are reset first)."""
        self.store.zero_grad()
        out = self.forward(batch, training, rng)
        parts = self.loss(out, batch, weights)
        self.backward(out, batch, weights)
        return out, parts


def predict(out_or_probs) -> np.ndarray:
    """Argmax of the sarcasm distribution; an exact tie goes to class 0."""
    P = out_or_probs.P_s if isinstance(out_or_probs, ForwardOutput) else np.asarray(out_or_probs)
    P = np.atleast_2d(P)
    return (P[:, 1] > P[:, 0]).astype(np.int64)


def export_representations(model: DCNet, batches, path: str | os.PathLike) -> int:
    """Write ``v_L'`` and ``v_D'`` for every example as TSV rows.

    Columns: example id, sarcasm label, channel (``literal``/``implied``),
    then the ``d'`` vector components.  No header; two rows per example.
    Returns the number of rows written.
    """
    tmp = f"{path}.tmp"
    rows = 0
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for batch in batches:
            out = model.forward(batch, training=False)
            for k, ex_id in enumerate(batch.ids):
                y = int(batch.y_s[k])
                writer.writerow([ex_id, y, "literal", *(repr(float(v)) for v in out.v_L2[k])])
                writer.writerow([ex_id, y, "implied", *(repr(float(v)) for v in out.v_D2[k])])
                rows += 2
    os.replace(tmp, path)
    return rows
