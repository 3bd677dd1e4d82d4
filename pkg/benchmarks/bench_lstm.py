"""Time the LSTM sequence kernels: compiled extension vs numpy fallback.

    python3 benchmarks/bench_lstm.py [--T 30] [--B 32] [--H 150] [--dtype float32]

Also times one full training step of the model under each backend.
"""

import argparse
import importlib
import os
import timeit

import numpy as np


def kernel_times(impl, T, B, H, dtype, repeat):
    rng = np.random.default_rng(0)
    xproj = rng.normal(size=(T, B, 4 * H)).astype(dtype)
    Wh = (rng.normal(size=(4 * H, H)) * 0.1).astype(dtype)
    lengths = rng.integers(T // 2, T + 1, B)
    mask = (np.arange(T)[:, None] < lengths[None, :]).astype(dtype)
    dhs = rng.normal(size=(T, B, H)).astype(dtype)
    out = impl.lstm_forward(xproj, mask, Wh)
    fwd = min(timeit.repeat(lambda: impl.lstm_forward(xproj, mask, Wh), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: impl.lstm_backward(dhs, mask, Wh, *out), number=1, repeat=repeat))
    return fwd, bwd


def step_time(backend, B, H, dtype, repeat):
    os.environ["DUALCHANNEL_BACKEND"] = backend
    import dualchannel.kernels as kernels
    import dualchannel.encoders as encoders
    importlib.reload(kernels)
    importlib.reload(encoders)
    import dualchannel.dcnet as dcnet
    importlib.reload(dcnet)
    from dualchannel import data as D

    corpus, lex = D.gen_synthetic(B, 0)
    prepared = D.prepare(corpus, lex)
    vocab = D.Vocabulary.build(p.decomposed.w_t for p in prepared)
    batch = D.collate(D.index_examples(prepared, vocab))
    model = dcnet.DCNet(dcnet.ModelConfig(len(vocab), 300, H), 0, dtype)
    w = dcnet.LossWeights()
    assert kernels.BACKEND == backend
    return min(timeit.repeat(lambda: model.step_loss(batch, w), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=30)
    ap.add_argument("--B", type=int, default=32)
    ap.add_argument("--H", type=int, default=150)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    dtype = np.dtype(args.dtype)

    from dualchannel import kernels
    backends = sorted(kernels.BACKENDS)
    print(f"T={args.T} B={args.B} H={args.H} {args.dtype}; best of {args.repeat}")
    print(f"{'backend':<8}{'forward ms':>12}{'backward ms':>13}{'train step ms':>15}")
    rows = {}
    for name in backends:
        fwd, bwd = kernel_times(kernels.BACKENDS[name], args.T, args.B, args.H, dtype, args.repeat)
        step = step_time(name, args.B, args.H, dtype, max(3, args.repeat // 4))
        rows[name] = (fwd, bwd, step)
        print(f"{name:<8}{1e3 * fwd:12.2f}{1e3 * bwd:13.2f}{1e3 * step:15.2f}")
    if len(rows) == 2:
        sp = [p / c for p, c in zip(rows["python"], rows["cython"])]
        print(f"speed-up  {sp[0]:10.1f}x{sp[1]:12.1f}x{sp[2]:14.1f}x")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
