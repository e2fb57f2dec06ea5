"""Compare the compiled LSTM recurrence with the numpy fallback.

    python3 benchmarks/bench_lstm.py [--repeat 20] [--epoch]

Times forward+backward of the kernel pair at a few shapes, checks that both
kernels agree, and with ``--epoch`` times one training epoch of the d=64
cipher recipe under each kernel.
"""

import argparse
import time

import numpy as np

from xlingemb.numkit import _lstm_py, recurrent

SHAPES = [(11, 32, 64), (11, 16, 32), (25, 16, 128)]  # (T, B, H)


def kernel_pass(kernel, xw, wh, dhs):
    hs, cs, gates = kernel.lstm_forward(xw, wh)
    kernel.lstm_backward(dhs, hs, cs, gates, wh)
    return hs


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(repeat):
    try:
        from xlingemb.numkit import _lstm_ext
    except ImportError:
        print("compiled kernel not built; only the numpy fallback is available")
        _lstm_ext = None
    rng = np.random.default_rng(0)
    print(f"{'T':>4} {'B':>4} {'H':>5} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>9}")
    for T, B, H in SHAPES:
        xw = rng.normal(size=(T, B, 4 * H))
        wh = rng.uniform(-0.1, 0.1, size=(H, 4 * H))
        dhs = rng.normal(size=(T, B, H))
        py = best_of(lambda: kernel_pass(_lstm_py, xw, wh, dhs), repeat)
        if _lstm_ext is None:
            print(f"{T:>4} {B:>4} {H:>5} {1e3 * py:>10.2f}")
            continue
        cy = best_of(lambda: kernel_pass(_lstm_ext, xw, wh, dhs), repeat)
        diff = np.abs(kernel_pass(_lstm_py, xw, wh, dhs) - kernel_pass(_lstm_ext, xw, wh, dhs)).max()
        print(f"{T:>4} {B:>4} {H:>5} {1e3 * py:>10.2f} {1e3 * cy:>10.2f} {py / cy:>7.2f}x {diff:>9.1e}")


def bench_epoch():
    from xlingemb import corpus as C
    from xlingemb import synth
    from xlingemb import trainer as T
    from xlingemb.config import TrainConfig
    from xlingemb.model import CrossLingualModel

    cc = synth.generate(50, 500, "reverse", seed=0)
    corpus, vocabs = C.build_corpus(cc.src, cc.tgt, "src", "tgt")
    cfg = TrainConfig(dim=64, epochs=1, seed=0)
    saved = recurrent._kernel
    try:
        for name in ("python", "cython"):
            if name == "python":
                recurrent._kernel = _lstm_py
            else:
                try:
                    from xlingemb.numkit import _lstm_ext
                except ImportError:
                    continue
                recurrent._kernel = _lstm_ext
            model = CrossLingualModel.initialise(cfg, vocabs, rng=np.random.default_rng(0))
            t = time.perf_counter()
            T.train(model, [corpus], log_file=False)
            print(f"one cipher epoch (d=64, batch 16) with {name} kernel: "
                  f"{time.perf_counter() - t:.2f}s")
    finally:
        recurrent._kernel = saved


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--epoch", action="store_true", help="also time a full training epoch")
    args = p.parse_args()
    print(f"default backend: {recurrent.BACKEND}")
    bench_kernels(args.repeat)
    if args.epoch:
        bench_epoch()


if __name__ == "__main__":
    main()
