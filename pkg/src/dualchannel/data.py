"""Corpora, vocabulary, embeddings, splits and batching."""

from __future__ import annotations

import collections
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .decomposer import DecomposedExample, decompose, tokenize
from .lexicon import Polarity, SentimentLexicon
from .weak_labeler import WeakLabels, count_polarities, weak_labels

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    text: str
    y_s: int


@dataclass
class Corpus:
    examples: list[Example]
    name: str = "custom"

    def __post_init__(self):
        ids = [e.id for e in self.examples]
        if len(set(ids)) != len(ids):
            raise DataError("example ids must be unique")
        for e in self.examples:
            if e.y_s not in (0, 1):
                raise DataError(f"example {e.id}: label must be 0 or 1, got {e.y_s!r}")

    def __len__(self):
        return len(self.examples)

    def label_counts(self) -> dict[int, int]:
        c = collections.Counter(e.y_s for e in self.examples)
        return {0: c[0], 1: c[1]}

    def subset(self, ids: Sequence[str], name: str | None = None) -> "Corpus":
        by_id = {e.id: e for e in self.examples}
        return Corpus([by_id[i] for i in ids], name or self.name)


# ---------------------------------------------------------------------------
# corpus files

def _parse_label(raw: str, path, lineno: int) -> int:
    raw = raw.strip()
    if raw not in ("0", "1"):
        raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {raw!r}")
    return int(raw)


def load_corpus(path: str | os.PathLike, format: str = "tsv", name: str | None = None) -> Corpus:
    """Read ``label<TAB>text`` rows, or the SemEval-2018 Task 3 layout.

    SemEval files are ``index<TAB>label<TAB>text`` with a header line
    starting ``Tweet index``.  Any malformed row aborts with its line number.
    """
    if format not in ("tsv", "semeval"):
        raise DataError(f"unknown corpus format {format!r}")
    if not os.path.isfile(path):
        raise DataError(f"corpus file not found: {path}")
    examples = []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if format == "tsv":
                if len(cols) < 2:
                    raise DataError(f"{path}:{lineno}: expected 'label<TAB>text'")
                y = _parse_label(cols[0], path, lineno)
                examples.append(Example(str(lineno), "\t".join(cols[1:]), y))
            else:
                if lineno == 1 and cols[0].strip().lower().startswith("tweet index"):
                    continue
                if len(cols) < 3:
                    raise DataError(f"{path}:{lineno}: expected 'index<TAB>label<TAB>text'")
                y = _parse_label(cols[1], path, lineno)
                examples.append(Example(cols[0].strip(), "\t".join(cols[2:]), y))
    if not examples:
        raise DataError(f"{path}: no examples")
    corpus = Corpus(examples, name or ("tweets" if format == "semeval" else "custom"))
    logger.info("loaded %d examples from %s (labels %s)", len(corpus), path, corpus.label_counts())
    return corpus


def split_train_valid(corpus: Corpus, valid_frac: float = 0.05, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Stratified, seeded split.

    The held-out size is ``round(valid_frac * N)`` (at least one); it is
    shared between the classes in proportion to their sizes with
    largest-remainder rounding.
    """
    if not 0 < valid_frac < 1:
        raise ValueError("valid_frac must be in (0, 1)")
    n = len(corpus)
    n_valid = max(1, int(round(valid_frac * n)))
    if n_valid >= n:
        raise DataError(f"corpus of {n} examples too small for a {valid_frac:.0%} split")
    rng = np.random.default_rng(seed)
    by_label = {y: [e.id for e in corpus.examples if e.y_s == y] for y in (0, 1)}
    quota = {y: n_valid * len(ids) / n for y, ids in by_label.items()}
    take = {y: int(np.floor(q)) for y, q in quota.items()}
    rest = n_valid - sum(take.values())
    for y in sorted(quota, key=lambda y: (-(quota[y] - take[y]), y))[:rest]:
        take[y] += 1
    valid_ids = set()
    for y in (0, 1):
        ids = by_label[y]
        perm = rng.permutation(len(ids))
        valid_ids.update(ids[i] for i in perm[:take[y]])
    train = [e.id for e in corpus.examples if e.id not in valid_ids]
    valid = [e.id for e in corpus.examples if e.id in valid_ids]
    return corpus.subset(train), corpus.subset(valid)


def write_manifest(path, seed: int, splits: dict[str, Corpus]):
    manifest = {"seed": seed, **{k: [e.id for e in c.examples] for k, c in splits.items()}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# vocabulary / embeddings

class Vocabulary:
    def __init__(self, tokens: Sequence[str] = ()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @classmethod
    def build(cls, token_lists, min_count: int = 1) -> "Vocabulary":
        counts = collections.Counter(t for toks in token_lists for t in toks)
        ordered = sorted((t for t, c in counts.items() if c >= min_count),
                         key=lambda t: (-counts[t], t))
        return cls(ordered)

    def __len__(self):
        return len(self.itos)

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, index: int) -> str:
        return self.itos[index]

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)

    def to_list(self) -> list[str]:
        return list(self.itos[2:])


@dataclass
class EmbeddingMatrix:
    matrix: np.ndarray
    coverage: float


def random_embeddings(vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingMatrix:
    rng = np.random.default_rng(seed)
    m = rng.uniform(-0.05, 0.05, (len(vocab), dim))
    m[PAD] = 0
    return EmbeddingMatrix(m, 0.0)


def load_embeddings(path, vocab: Vocabulary, dim: int = 300, seed: int = 0) -> EmbeddingMatrix:
    """Initialise from a ``word v1 ... vd`` text file (GloVe / word2vec text).

    Rows not found in the file are drawn uniformly from [-0.05, 0.05].
    """
    if not os.path.isfile(path):
        raise DataError(f"embedding file not found: {path}")
    emb = random_embeddings(vocab, dim, seed).matrix
    found = set()
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue  # word2vec header
            if len(parts) < 2:
                continue
            word = parts[0]
            if len(parts) - 1 != dim:
                raise DataError(f"{path}:{lineno}: vector has {len(parts) - 1} dims, expected {dim}")
            idx = vocab.stoi.get(word)
            if idx is None or idx < 2 or idx in found:
                continue
            emb[idx] = np.array(parts[1:], dtype=np.float64)
            found.add(idx)
    emb[PAD] = 0
    n = max(len(vocab) - 2, 1)
    cov = len(found) / n
    logger.info("embeddings: %d/%d vocabulary entries found (%.1f%%)", len(found), len(vocab) - 2, 100 * cov)
    return EmbeddingMatrix(emb, cov)


# ---------------------------------------------------------------------------
# preprocessing and batching

@dataclass
class Prepared:
    id: str
    decomposed: DecomposedExample
    labels: WeakLabels
    t: np.ndarray = field(default=None, repr=False)
    l: np.ndarray = field(default=None, repr=False)
    d: np.ndarray = field(default=None, repr=False)


def prepare(corpus: Corpus, lex: SentimentLexicon) -> list[Prepared]:
    out = []
    for e in corpus.examples:
        toks = tokenize(e.text)
        dec = decompose(toks, lex)
        labels = weak_labels(count_polarities(toks, lex), e.y_s)
        out.append(Prepared(e.id, dec, labels))
    return out


def index_examples(prepared: list[Prepared], vocab: Vocabulary) -> list[Prepared]:
    for p in prepared:
        p.t = vocab.encode(p.decomposed.w_t)
        p.l = vocab.encode(p.decomposed.w_l)
        p.d = vocab.encode(p.decomposed.w_d)
    return prepared


@dataclass
class Batch:
    ids: list[str]
    t_idx: np.ndarray
    t_len: np.ndarray
    l_idx: np.ndarray
    l_len: np.ndarray
    d_idx: np.ndarray
    d_len: np.ndarray
    y_s: np.ndarray
    y_l: np.ndarray
    y_d: np.ndarray
    aux: np.ndarray

    def __len__(self):
        return len(self.ids)


def _pad(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    T = int(lens.max()) if len(lens) else 0
    out = np.full((len(seqs), T), PAD, dtype=np.int64)
    for k, s in enumerate(seqs):
        out[k, :len(s)] = s
    return out, lens


def collate(examples: Sequence[Prepared]) -> Batch:
    """Pad W_T, W_L and W_D independently, each to its own longest row."""
    t_idx, t_len = _pad([e.t for e in examples])
    l_idx, l_len = _pad([e.l for e in examples])
    d_idx, d_len = _pad([e.d for e in examples])
    y_l = np.array([e.labels.y_l.index if e.labels.aux_mask else 0 for e in examples], dtype=np.int64)
    y_d = np.array([e.labels.y_d.index if e.labels.aux_mask else 0 for e in examples], dtype=np.int64)
    return Batch([e.id for e in examples], t_idx, t_len, l_idx, l_len, d_idx, d_len,
                 np.array([e.labels.y_s for e in examples], dtype=np.int64), y_l, y_d,
                 np.array([e.labels.aux_mask for e in examples], dtype=bool))


def make_batches(examples: Sequence[Prepared], batch_size: int = 32,
                 rng: np.random.Generator | None = None) -> Iterator[Batch]:
    """One epoch of batches, shuffled with ``rng`` (kept in order when None)."""
    order = np.arange(len(examples)) if rng is None else rng.permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield collate([examples[i] for i in order[start:start + batch_size]])


# ---------------------------------------------------------------------------
# synthetic corpus

SYNTHETIC_POSITIVE = (
    "love", "great", "wonderful", "amazing", "fantastic", "awesome", "excellent",
    "perfect", "best", "happy", "glad", "delighted", "brilliant", "enjoy",
    "lovely", "superb", "thrilled", "fun", "nice", "good",
)
SYNTHETIC_NEGATIVE = (
    "hate", "terrible", "awful", "horrible", "worst", "sad", "miserable", "angry",
    "annoyed", "dreadful", "upset", "disgusting", "bad", "boring", "painful",
    "furious", "lousy", "depressing", "nasty", "gloomy",
)

# situation phrases carry their polarity through content words only; none is in the lexicon
_POS_SITUATIONS = (
    "getting a raise at work", "my team winning the final", "a free upgrade on my flight",
    "finishing the project early", "my friends throwing me a party", "sleeping in on sunday",
    "passing the driving test", "finding money in my coat", "a sunny day at the beach",
    "getting the job offer", "my sister visiting this weekend", "dinner with my family tonight",
    "the concert tickets arriving", "a long vacation in june", "my puppy learning new tricks",
)
_NEG_SITUATIONS = (
    "being stuck in traffic for hours", "my phone dying at noon", "working a double shift on my birthday",
    "the train being late again", "getting a flat tire on the highway", "losing my wallet downtown",
    "studying for finals all weekend", "the power going out during dinner", "waiting in line for three hours",
    "my flight getting cancelled", "the dentist drilling my tooth", "rain on my wedding day",
    "spilling coffee on my laptop", "getting a parking ticket", "my landlord raising the rent",
)
_TEMPLATES = (
    "i {s} {x}", "{x} , just {s}", "so {s} about {x}", "{s} , {x}",
    "nothing says {s} like {x}", "{x} feels {s}", "wow {s} , {x} !", "{x} . {s} .",
)


def gen_synthetic(n: int, seed: int = 0) -> tuple[Corpus, SentimentLexicon]:
    """Templated sentences whose sarcasm label is a polarity conflict.

    Each sentence joins one lexicon sentiment word with a situation phrase
    of known polarity; it is sarcastic exactly when the two disagree.  The
    corpus is balanced and shuffled.
    """
    if n < 4:
        raise ValueError("gen_synthetic needs n >= 4")
    rng = np.random.default_rng(seed)
    lex = SentimentLexicon({**{w: Polarity.POSITIVE for w in SYNTHETIC_POSITIVE},
                            **{w: Polarity.NEGATIVE for w in SYNTHETIC_NEGATIVE}}, "<synthetic>")
    n_sarc = n // 2
    labels = np.array([1] * n_sarc + [0] * (n - n_sarc))
    rng.shuffle(labels)
    examples = []
    for k, y in enumerate(labels):
        literal_pos = bool(rng.integers(2))
        implied_pos = literal_pos if y == 0 else not literal_pos
        words = SYNTHETIC_POSITIVE if literal_pos else SYNTHETIC_NEGATIVE
        sits = _POS_SITUATIONS if implied_pos else _NEG_SITUATIONS
        tpl = _TEMPLATES[rng.integers(len(_TEMPLATES))]
        text = tpl.format(s=words[rng.integers(len(words))], x=sits[rng.integers(len(sits))])
        examples.append(Example(f"syn-{k}", text, int(y)))
    return Corpus(examples, "synthetic"), lex
