"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import data as D
from . import numerics as nx
from . import trainer as T
from .dcnet import DCNet, LossWeights, ModelConfig, export_representations
from .decomposer import decompose, tokenize
from .lexicon import SentimentLexicon, load_lexicon
from .weak_labeler import count_polarities, weak_labels

logger = logging.getLogger("dualchannel")

CONFIG_ENV = "DUALCHANNEL_CONFIG"
GRADCHECK_TOL = 1e-4
ABLATION_ROWS = (
    ("J_s", (True, False, False)),
    ("J_s+J_d", (True, False, True)),
    ("J_s+J_l", (True, True, False)),
    ("J_s+J_l+J_d", (True, True, True)),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_jsonl(rows, path):
    fh = sys.stdout if path in (None, "-") else open(f"{path}.tmp", "w", encoding="utf-8")
    try:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
            os.replace(f"{path}.tmp", path)


# ---------------------------------------------------------------------------
# shared argument handling

def _add_corpus(p, required=True):
    p.add_argument("--corpus", required=required,
                   help="corpus file, or 'synthetic' for the generated corpus")
    p.add_argument("--format", choices=("tsv", "semeval"), default="tsv")
    p.add_argument("--lexicon", help="MPQA clue file or word<TAB>polarity table")
    p.add_argument("--n-synthetic", type=int, default=800)


def _add_training(p):
    p.add_argument("--config", help=f"JSON/TOML config (default from ${CONFIG_ENV})")
    p.add_argument("--preset", choices=("tweets", "iac"))
    p.add_argument("--embeddings", help="pretrained vectors, 'word v1 ... vd' per line")
    p.add_argument("--test-corpus", help="official test file; otherwise a test split is held out")
    p.add_argument("--seed", type=int)
    p.add_argument("--analyzer", choices=("concat", "subtract"))
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--input-dim", type=int)
    p.add_argument("--dropout", type=float, dest="dropout_embedding")
    p.add_argument("--patience", type=int)
    p.add_argument("--precision", choices=tuple(T.PRECISIONS))


def _config(args) -> T.TrainConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        cfg = T.TrainConfig.from_file(path)
    else:
        cfg = T.TrainConfig()
    if args.preset:
        preset = {"tweets": T.TrainConfig.tweets, "iac": T.TrainConfig.iac}[args.preset]()
        cfg = replace(cfg, **{k: getattr(preset, k) for k in
                              ("dropout_embedding", "lambda1", "lambda2", "lambda3")})
    overrides = {k: getattr(args, k) for k in
                 ("seed", "analyzer", "lambda1", "lambda2", "lambda3", "max_epochs", "hidden_dim",
                  "input_dim", "dropout_embedding", "patience", "precision")
                 if getattr(args, k, None) is not None}
    return replace(cfg, **overrides)


def _corpus_and_lexicon(args, seed: int, need_lexicon=True):
    if args.corpus == "synthetic":
        corpus, lex = D.gen_synthetic(args.n_synthetic, seed)
        if args.lexicon:
            lex = load_lexicon(args.lexicon)
        return corpus, lex
    corpus = D.load_corpus(args.corpus, args.format)
    lex = load_lexicon(args.lexicon) if args.lexicon else None
    if need_lexicon and lex is None:
        raise UsageError("--lexicon is required for this corpus")
    return corpus, lex


# ---------------------------------------------------------------------------
# subcommands

def cmd_decompose(args):
    corpus, lex = _corpus_and_lexicon(args, args.seed or 0)
    rows = []
    for e in corpus.examples:
        dec = decompose(tokenize(e.text), lex)
        rows.append({"id": e.id, "y_s": e.y_s, "text": e.text, **dec.to_json()})
    _write_jsonl(rows, args.out)
    return 0


def cmd_label(args):
    if not args.lexicon:
        raise UsageError("--lexicon is required")
    lex = load_lexicon(args.lexicon)
    rows = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens, y_s = rec["tokens"], int(rec["y_s"])
            except (ValueError, KeyError, TypeError) as exc:
                raise D.DataError(f"{args.input}:{lineno}: bad record ({exc})") from exc
            labels = weak_labels(count_polarities(tokens, lex), y_s)
            rows.append({"id": rec.get("id"), **labels.to_json()})
    _write_jsonl(rows, args.out)
    return 0


def _run_dir(out):
    if not out:
        raise UsageError("--out DIR is required")
    os.makedirs(out, exist_ok=True)
    return out


def _save_run(run: T.RunResult, cfg: T.TrainConfig, out: str):
    T.save_checkpoint(run.result.model, run.vocab, cfg, os.path.join(out, "model.ckpt"), run.lexicon)
    _write_jsonl(run.result.history, os.path.join(out, "history.jsonl"))
    D.write_manifest(os.path.join(out, "splits.json"), cfg.seed, run.splits)
    metrics = {
        "best_checkpoint": run.result.best_checkpoint,
        "valid": run.valid_metrics.to_dict() if run.valid_metrics else None,
        "test": run.test_metrics.to_dict() if run.test_metrics else None,
        "embedding_coverage": run.embedding_coverage,
    }
    _write_json(metrics, os.path.join(out, "metrics.json"))
    return metrics


def cmd_train(args):
    out = _run_dir(args.out)
    cfg = _config(args)
    corpus, lex = _corpus_and_lexicon(args, cfg.seed)
    test = D.load_corpus(args.test_corpus, args.format, "test") if args.test_corpus else None
    run = T.fit_corpus(corpus, lex, cfg, test, args.embeddings)
    metrics = _save_run(run, cfg, out)
    m = metrics["test"] or metrics["valid"]
    if m:
        print(f"macro-F1 {m['macro_f1']:.4f}  precision {m['precision']:.4f}  "
              f"recall {m['recall']:.4f}  accuracy {m['accuracy']:.4f}")
    return 0


def _prepare_with_checkpoint(args, ckpt: T.Checkpoint):
    lex = load_lexicon(args.lexicon) if args.lexicon else ckpt.lexicon
    if lex is None:
        raise UsageError("--lexicon is required (checkpoint carries no lexicon)")
    if args.corpus == "synthetic":
        corpus, _ = D.gen_synthetic(args.n_synthetic, args.seed if args.seed is not None else ckpt.config.seed)
    else:
        corpus = D.load_corpus(args.corpus, args.format)
    return corpus, D.index_examples(D.prepare(corpus, lex), ckpt.vocab)


def cmd_eval(args):
    ckpt = T.load_checkpoint(args.checkpoint)
    _, examples = _prepare_with_checkpoint(args, ckpt)
    metrics, _ = T.evaluate(ckpt.model, examples, ckpt.config.batch_size)
    _write_json(metrics.to_dict(), args.out)
    return 0


def cmd_export(args):
    if not args.out:
        raise UsageError("--out FILE is required")
    ckpt = T.load_checkpoint(args.checkpoint)
    _, examples = _prepare_with_checkpoint(args, ckpt)
    rows = export_representations(ckpt.model, D.make_batches(examples, ckpt.config.batch_size), args.out)
    print(f"wrote {rows} rows to {args.out}")
    return 0


def _ablation_run(corpus, lex, cfg, splits, embeddings):
    run = T.fit_corpus(corpus, lex, cfg, embeddings_path=embeddings, splits=splits)
    m = run.test_metrics or run.valid_metrics
    return m.to_dict(), run.result.best_checkpoint


def cmd_ablate(args):
    out = _run_dir(args.out)
    cfg = _config(args)
    corpus, lex = _corpus_and_lexicon(args, cfg.seed)
    if args.test_corpus:
        pool, test = corpus, D.load_corpus(args.test_corpus, args.format, "test")
    else:
        pool, test = D.split_train_valid(corpus, cfg.test_frac, cfg.seed)
    train_c, valid_c = D.split_train_valid(pool, cfg.valid_frac, cfg.seed)
    splits = {"train": train_c, "valid": valid_c, "test": test}
    D.write_manifest(os.path.join(out, "splits.json"), cfg.seed, splits)
    configs = []
    for name, (_, use_l, use_d) in ABLATION_ROWS:
        configs.append((name, replace(cfg, lambda2=cfg.lambda2 if use_l else 0.0,
                                      lambda3=cfg.lambda3 if use_d else 0.0)))
    jobs = [(corpus, lex, c, splits, args.embeddings) for _, c in configs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool_ex:
            results = list(pool_ex.map(_ablation_run, *zip(*jobs)))
    else:
        results = [_ablation_run(*j) for j in jobs]
    rows = []
    for (name, c), (m, best) in zip(configs, results):
        rows.append({"objective": name, "lambda1": c.lambda1, "lambda2": c.lambda2, "lambda3": c.lambda3,
                     "precision": m["precision"], "recall": m["recall"], "macro_f1": m["macro_f1"],
                     "accuracy": m["accuracy"], "best_checkpoint": best})
    _write_json({"seed": cfg.seed, "corpus": corpus.name, "rows": rows}, os.path.join(out, "ablation.json"))
    print(f"{'Objective':<14}{'Pre.':>8}{'Rec.':>8}{'F1':>8}{'Acc.':>8}")
    for r in rows:
        print(f"{r['objective']:<14}" + "".join(f"{100 * r[k]:8.1f}" for k in ("precision", "recall", "macro_f1", "accuracy")))
    return 0


def gradcheck_dcnet(seed: int = 7, hidden_dim: int = 8, n_tokens: int = 5, samples: int = 8,
                    analyzer: str = "concat", pooling: str = "final") -> float:
    """Finite-difference check of the full objective on one small example (float64)."""
    rng = np.random.default_rng(seed)
    vocab_size, dim = 12, 6
    cfg = ModelConfig(vocab_size, dim, hidden_dim, pooling, None, analyzer, 0.0, init_scale=0.5)
    # unit-scale embeddings keep encoder gradients well above the finite-difference noise floor
    model = DCNet(cfg, seed, np.float64, embeddings=rng.normal(0.0, 1.0, (vocab_size, dim)))
    tokens = rng.integers(2, vocab_size, n_tokens)
    lit = np.sort(rng.choice(n_tokens, size=2, replace=False))
    rest = np.setdiff1d(np.arange(n_tokens), lit)
    ex = D.Prepared("gc", None, None, tokens, tokens[lit], tokens[rest])
    batch = D.Batch(["gc"], ex.t[None], np.array([n_tokens]), ex.l[None], np.array([len(lit)]),
                    ex.d[None], np.array([len(rest)]), np.array([1]), np.array([1]), np.array([0]),
                    np.array([True]))
    weights = LossWeights(1.0, 1.0, 1.0)

    def closure():
        _, parts = model.step_loss(batch, weights)
        return parts["loss"]

    return nx.grad_check(closure, model.store, eps=1e-5, samples=samples, seed=seed)


def cmd_gradcheck(args):
    err = gradcheck_dcnet(args.seed if args.seed is not None else 7, args.hidden_dim, args.tokens,
                          args.samples, args.analyzer or "concat")
    ok = err < GRADCHECK_TOL
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAILED'}, tolerance {GRADCHECK_TOL:g})")
    return 0 if ok else 3


def cmd_gen_synthetic(args):
    corpus, lex = D.gen_synthetic(args.n, args.seed if args.seed is not None else 0)
    if not args.out:
        raise UsageError("--out FILE is required")
    with open(args.out, "w", encoding="utf-8") as fh:
        for e in corpus.examples:
            fh.write(f"{e.y_s}\t{e.text}\n")
    if args.lexicon_out:
        with open(args.lexicon_out, "w", encoding="utf-8") as fh:
            for w, p in lex.to_dict().items():
                fh.write(f"{w}\t{p}\n")
    print(f"wrote {len(corpus)} examples to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualchannel", description="Dual-channel sarcasm detection toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="split texts into literal/implied channels (JSON lines)")
    _add_corpus(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("label", help="weak sentiment labels for decomposed JSON lines")
    p.add_argument("--input", "--corpus", dest="input", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train and keep the best-validation checkpoint")
    _add_corpus(p)
    _add_training(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    _add_corpus(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the four objective combinations")
    _add_corpus(p)
    _add_training(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden-dim", type=int, default=8)
    p.add_argument("--tokens", type=int, default=5)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--analyzer", choices=("concat", "subtract"))
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-reps", help="write v_L'/v_D' vectors as TSV")
    _add_corpus(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gen-synthetic", help="write the synthetic corpus as TSV")
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--lexicon-out")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except T.NonFiniteLossError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, indent=2, default=str), file=sys.stderr)
        return 3
    except nx.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (D.DataError, T.CheckpointError, nx.ShapeError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
