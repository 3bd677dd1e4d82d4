"""Training loop, evaluation and checkpoint files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import data as D
from . import numerics as nx
from .dcnet import DCNet, LossWeights, ModelConfig, predict
from .lexicon import SentimentLexicon
from .metrics import Metrics, compute

logger = logging.getLogger(__name__)

PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    checkpoint_every: int = 16
    max_epochs: int = 30
    patience: int = 10
    lr_other: float = 1e-3
    lr_embedding: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = None
    dropout_embedding: float = 0.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    seed: int = 0
    precision: str = "float32"
    input_dim: int = 300
    hidden_dim: int = 150
    proj_dim: int | None = None
    pooling: str = "final"
    analyzer: str = "concat"
    valid_frac: float = 0.05
    test_frac: float = 0.2

    def __post_init__(self):
        if self.lr_other <= 0 or self.lr_embedding <= 0:
            raise ValueError("learning rates must be > 0")
        if self.patience < 1 or self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("patience, batch_size and checkpoint_every must be >= 1")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
        LossWeights(self.lambda1, self.lambda2, self.lambda3)

    @classmethod
    def tweets(cls, **kw) -> "TrainConfig":
        """Settings used for the SemEval tweets data."""
        return cls(**{"dropout_embedding": 0.0, "lambda1": 1.0, "lambda2": 1e-4, "lambda3": 3e-1, **kw})

    @classmethod
    def iac(cls, **kw) -> "TrainConfig":
        """Settings used for the IAC debate-forum data."""
        return cls(**{"dropout_embedding": 0.5, "lambda1": 1.0, "lambda2": 1.0, "lambda3": 1.0, **kw})

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size, self.input_dim, self.hidden_dim, self.pooling,
                           self.proj_dim, self.analyzer, self.dropout_embedding)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """JSON, or TOML when the file name ends in ``.toml``."""
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ImportError:  # python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        else:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        preset = raw.pop("preset", None)
        base = {"tweets": cls.tweets, "iac": cls.iac}.get(preset, cls)() if preset else cls()
        return cls.from_dict({**base.to_dict(), **raw})


class NonFiniteLossError(nx.NumericError):
    def __init__(self, message, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainResult:
    model: DCNet
    history: list[dict]
    best_checkpoint: int
    best_valid: Metrics | None
    initial_loss: float = math.nan
    final_loss: float = math.nan


def _rngs(seed: int):
    shuffle, drop = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(shuffle), np.random.default_rng(drop)


def train(config: TrainConfig, train_set: Sequence[D.Prepared], valid_set: Sequence[D.Prepared],
          vocab: D.Vocabulary, embeddings: np.ndarray | None = None,
          model: DCNet | None = None) -> TrainResult:
    """Adam training with validation every ``checkpoint_every`` mini-batches.

    The returned model holds the parameters of the checkpoint with the best
    validation macro-F1 (earliest wins ties).  Training stops after
    ``max_epochs`` or ``patience`` checkpoints without improvement.
    """
    if not train_set:
        raise D.DataError("empty training set")
    if model is None:
        model = DCNet(config.model_config(len(vocab)), config.seed,
                      PRECISIONS[config.precision], embeddings)
    weights = config.weights
    shuffle_rng, drop_rng = _rngs(config.seed)
    adam = nx.AdamState(config.beta1, config.beta2, config.adam_eps)
    lrs = {nx.EMBEDDING: config.lr_embedding, nx.OTHER: config.lr_other}

    history: list[dict] = []
    best_f1, best_ckpt, best_params, best_valid = -1.0, 0, model.store.snapshot(), None
    stale = 0
    step = 0
    window = {"loss": 0.0, "J_s": 0.0, "J_l": 0.0, "J_d": 0.0, "n": 0}
    initial_loss = final_loss = math.nan
    stop = False

    def checkpoint(epoch):
        nonlocal best_f1, best_ckpt, best_params, best_valid, stale
        valid_metrics = evaluate(model, valid_set, config.batch_size)[0] if valid_set else None
        f1 = valid_metrics.macro_f1 if valid_metrics else -window["loss"] / max(window["n"], 1)
        ckpt = len(history) + 1
        improved = f1 > best_f1
        if improved:
            best_f1, best_ckpt, best_valid, stale = f1, ckpt, valid_metrics, 0
            best_params = model.store.snapshot()
        else:
            stale += 1
        n = max(window["n"], 1)
        rec = {"checkpoint": ckpt, "step": step, "epoch": epoch,
               **{k: window[k] / n for k in ("loss", "J_s", "J_l", "J_d")},
               "valid": valid_metrics.to_dict() if valid_metrics else None, "best": improved}
        history.append(rec)
        logger.info("ckpt %d step %d loss %.4f valid-F1 %s%s", ckpt, step, rec["loss"],
                    f"{valid_metrics.macro_f1:.4f}" if valid_metrics else "-", " *" if improved else "")
        for k in window:
            window[k] = 0 if k == "n" else 0.0
        return stale >= config.patience

    for epoch in range(1, config.max_epochs + 1):
        epoch_loss, epoch_n = 0.0, 0
        for batch in D.make_batches(train_set, config.batch_size, shuffle_rng):
            _, parts = model.step_loss(batch, weights, training=True, rng=drop_rng)
            if not all(math.isfinite(v) for v in parts.values()):
                raise NonFiniteLossError(
                    f"non-finite loss at step {step + 1}",
                    {"step": step + 1, "epoch": epoch, "batch_ids": batch.ids, "loss": parts,
                     "param_norms": {n: float(np.linalg.norm(p.value)) for n, p in model.store.items()}})
            if step == 0:
                initial_loss = parts["loss"]
            nx.adam_step(model.store, adam, lrs, config.clip_norm)
            step += 1
            for k in ("loss", "J_s", "J_l", "J_d"):
                window[k] += parts[k]
            window["n"] += 1
            epoch_loss += parts["loss"] * len(batch)
            epoch_n += len(batch)
            if step % config.checkpoint_every == 0 and checkpoint(epoch):
                stop = True
                break
        final_loss = epoch_loss / max(epoch_n, 1)
        if stop:
            break
    if window["n"]:
        checkpoint(epoch)
    model.store.restore(best_params)
    return TrainResult(model, history, best_ckpt, best_valid, initial_loss, final_loss)


def evaluate(model: DCNet, examples: Sequence[D.Prepared], batch_size: int = 64) -> tuple[Metrics, np.ndarray]:
    """Metrics of ``model`` on ``examples`` with dropout off."""
    if not examples:
        raise D.DataError("no examples to evaluate")
    V = model.config.vocab_size
    for e in examples:
        for arr in (e.t, e.l, e.d):
            if arr is None:
                raise D.DataError(f"example {e.id} has not been indexed")
            if arr.size and arr.max() >= V:
                raise D.DataError(f"example {e.id} uses index {int(arr.max())} beyond vocabulary size {V}")
    preds, golds = [], []
    for batch in D.make_batches(examples, batch_size):
        preds.append(predict(model.forward(batch, training=False)))
        golds.append(batch.y_s)
    preds = np.concatenate(preds)
    return compute(preds, np.concatenate(golds)), preds


# ---------------------------------------------------------------------------
# checkpoint files
#
#   magic "DCNETCKP" | u32 version | u64 len + meta JSON | u64 len + vocab JSON
#   | u32 n_params | n x (u16 len + name, u8 dtype code, u8 ndim, ndim x u32,
#   little-endian data) | sha256 of everything before it

MAGIC = b"DCNETCKP"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: DCNet
    vocab: D.Vocabulary
    config: TrainConfig
    lexicon: SentimentLexicon | None = None
    extra: dict = field(default_factory=dict)


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(model: DCNet, vocab: D.Vocabulary, config: TrainConfig, path,
                    lexicon: SentimentLexicon | None = None, extra: dict | None = None):
    meta = {"train_config": config.to_dict(), "model_config": model.config.to_dict(),
            "lexicon": lexicon.to_dict() if lexicon is not None else None, "extra": extra or {}}
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for blob in (_json_bytes(meta), _json_bytes(vocab.to_list())):
        parts += [struct.pack("<Q", len(blob)), blob]
    parts.append(struct.pack("<I", len(model.store)))
    for name, p in model.store.items():
        nb = name.encode("utf-8")
        arr = p.value
        parts += [struct.pack("<H", len(nb)), nb,
                  struct.pack("<BB", _CODES[arr.dtype], arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape),
                  arr.astype(_DTYPES[_CODES[arr.dtype]]).tobytes()]
    body = b"".join(parts)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_params(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 36 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<Q")
    meta = json.loads(r.take(n))
    (n,) = r.unpack("<Q")
    vocab = json.loads(r.take(n))
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        code, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I")
        dt = _DTYPES[code]
        size = int(np.prod(shape)) * dt.itemsize
        params[name] = np.frombuffer(r.take(size), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return meta, vocab, params


def load_parameters(model: DCNet, params: dict[str, np.ndarray]):
    if set(params) != set(model.store):
        raise nx.ShapeError("checkpoint parameter names do not match the model")
    for name, v in params.items():
        if v.shape != model.store[name].value.shape:
            raise nx.ShapeError(f"shape mismatch for {name}: checkpoint {v.shape}, "
                                f"model {model.store[name].value.shape}")
    model.store.restore(params)


def load_checkpoint(path, model: DCNet | None = None) -> Checkpoint:
    """Read a checkpoint; if ``model`` is given, load into it (shapes must match)."""
    meta, vocab_list, params = _read_params(path)
    config = TrainConfig.from_dict(meta["train_config"])
    mcfg = ModelConfig(**meta["model_config"])
    if model is None:
        dtype = params["embedding"].dtype
        model = DCNet(mcfg, config.seed, dtype)
    load_parameters(model, params)
    lex = SentimentLexicon.from_dict(meta["lexicon"]) if meta.get("lexicon") is not None else None
    return Checkpoint(model, D.Vocabulary(vocab_list), config, lex, meta.get("extra", {}))


# ---------------------------------------------------------------------------
# whole-corpus driver

@dataclass
class RunResult:
    result: TrainResult
    vocab: D.Vocabulary
    lexicon: SentimentLexicon
    splits: dict[str, D.Corpus]
    test_metrics: Metrics | None
    valid_metrics: Metrics | None
    embedding_coverage: float


def fit_corpus(corpus: D.Corpus, lexicon: SentimentLexicon, config: TrainConfig,
               test_corpus: D.Corpus | None = None, embeddings_path=None,
               splits: dict[str, D.Corpus] | None = None) -> RunResult:
    """Split, preprocess, train and score the best checkpoint on the test split."""
    if splits is None:
        if test_corpus is None:
            pool, test = D.split_train_valid(corpus, config.test_frac, config.seed)
        else:
            pool, test = corpus, test_corpus
        train_c, valid_c = D.split_train_valid(pool, config.valid_frac, config.seed)
        splits = {"train": train_c, "valid": valid_c, "test": test}
    train_p = D.prepare(splits["train"], lexicon)
    vocab = D.Vocabulary.build(p.decomposed.w_t for p in train_p)
    if embeddings_path:
        emb = D.load_embeddings(embeddings_path, vocab, config.input_dim, config.seed)
    else:
        emb = D.random_embeddings(vocab, config.input_dim, config.seed)
    D.index_examples(train_p, vocab)
    valid_p = D.index_examples(D.prepare(splits["valid"], lexicon), vocab)
    test_p = D.index_examples(D.prepare(splits["test"], lexicon), vocab) if len(splits.get("test", ())) else []
    res = train(config, train_p, valid_p, vocab, emb.matrix)
    test_m = evaluate(res.model, test_p, config.batch_size)[0] if test_p else None
    return RunResult(res, vocab, lexicon, splits, test_m, res.best_valid, emb.coverage)
