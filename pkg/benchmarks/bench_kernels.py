"""Compare the numba and numpy kernel paths.

Times each kernel on both paths at a benchmark-sized shape, checks that the two
paths agree, and times one training epoch with each path selected.

    python benchmarks/bench_kernels.py [--batch 512] [--repeat 20] [--epoch]
"""
import argparse
import time
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from svtime import kernels
from svtime.imaging import patch_layout


def _time(fn, repeat):
    fn()  # warm-up (triggers JIT compilation on the numba path)
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def kernel_table(batch, T, P, K, H, repeat):
    rng = np.random.default_rng(0)
    N, M = T // P, -(-H // P)
    bounds = np.asarray(patch_layout(P, K).boundaries, dtype=np.int64)
    img = rng.normal(size=(batch, P, N))
    W = rng.normal(size=(K, N, N + M))
    dout = rng.normal(size=(batch, P, N + M))
    alpha = rng.uniform(0.1, 3, size=batch)
    beta = rng.uniform(0.1, 3, size=batch)
    wt = kernels.annealing_np(alpha, beta, N, M)
    dw = rng.normal(size=wt.shape)

    cases = {
        "patch_forward": (kernels.patch_forward_np, kernels.patch_forward_nb, (img, W, bounds)),
        "patch_backward": (kernels.patch_backward_np, kernels.patch_backward_nb,
                           (img, W, bounds, dout)),
        "annealing": (kernels.annealing_np, kernels.annealing_nb, (alpha, beta, N, M)),
        "annealing_backward": (kernels.annealing_backward_np, kernels.annealing_backward_nb,
                               (wt, alpha, beta, dw)),
    }
    print(f"shape: batch={batch} T={T} P={P} K={K} H={H} (N={N}, M={M}); "
          f"numba available: {kernels.HAVE_NUMBA}")
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (f_np, f_nb, args) in cases.items():
        t_np = _time(lambda: f_np(*args), repeat)
        if kernels.HAVE_NUMBA:
            t_nb = _time(lambda: f_nb(*args), repeat)
            a, b = f_np(*args), f_nb(*args)
            a = a if isinstance(a, tuple) else (a,)
            b = b if isinstance(b, tuple) else (b,)
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
            print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>14.2e}")
        else:
            print(f"{name:<20}{t_np:>12.3f}{'-':>12}{'-':>10}{'-':>14}")


def epoch_table(variant):
    from svtime.data import SeriesMatrix, SplitSpec, split
    from svtime.model import ModelConfig
    from svtime.training import TrainConfig, fit

    rng = np.random.default_rng(0)
    t = np.arange(4000)
    values = np.stack([np.sin(2 * np.pi * t / 24 + ph) for ph in rng.uniform(0, 6, 7)])
    values += 0.1 * rng.normal(size=values.shape)
    series = SeriesMatrix(values, [f"v{i}" for i in range(7)], [str(i) for i in t])
    tr, va, _ = split(series, SplitSpec("ratio", (0.7, 0.1, 0.2)), 512, 96)
    cfg = ModelConfig(variant, T=512, H=96, P=24, K=4)
    tc = TrainConfig(max_epochs=2, patience=1)
    paths = [False, True] if kernels.HAVE_NUMBA else [False]
    print(f"\none {variant} training epoch, 7 variates, T=512, H=96:")
    for use in paths:
        kernels.USE_NUMBA = use
        fit(tr, va, cfg, TrainConfig(max_epochs=2, patience=1))  # warm-up
        t0 = time.perf_counter()
        res = fit(tr, va, cfg, tc)
        per_epoch = (time.perf_counter() - t0) / len(res.log)
        print(f"  {'numba' if use else 'numpy':<6} {per_epoch:8.3f} s/epoch  "
              f"val_mse {res.log[-1]['val_mse']:.6f}")
    kernels.USE_NUMBA = kernels.HAVE_NUMBA


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--T", type=int, default=512)
    ap.add_argument("--P", type=int, default=24)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--H", type=int, default=96)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--epoch", action="store_true", help="also time full training epochs")
    args = ap.parse_args()
    with threadpool_limits(limits=args.threads):
        kernel_table(args.batch, args.T, args.P, args.K, args.H, args.repeat)
        if args.epoch:
            for variant in ("svtime", "svtime-t"):
                epoch_table(variant)


if __name__ == "__main__":
    main()
