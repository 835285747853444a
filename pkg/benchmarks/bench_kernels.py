"""Time the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

Sizes mirror the defaults of the selection loop (20 classes, 32-dim
features, batch 32, caches of a few thousand scores). The end-to-end row
times a full selection run under whichever path the IDSLAB_NUMBA flag
selected for this process; flip the flag to compare:

    IDSLAB_NUMBA=0 python benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from idslab import kernels
from idslab.harness import IDSConfig, run
from idslab.scoring import AcquisitionMethod, MethodConfig
from idslab.stream import SyntheticSourceSpec, synth_build


def timeit(fn, repeats):
    fn()  # warm cache / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_pairs(repeats):
    rng = np.random.default_rng(0)
    C, d, b = 20, 32, 32
    W = rng.standard_normal((C, d))
    phi = rng.standard_normal(d)
    batch = rng.standard_normal((b, d))
    labels = rng.integers(0, C, size=b)
    cache = rng.standard_normal(4096)
    logits = rng.standard_normal((b, C))

    pairs = [
        ("softmax (C=20)", lambda f: f(W[0]), kernels._np_softmax, kernels._nb_softmax),
        ("matvec (20x32)", lambda f: f(W, phi), kernels._np_matvec, kernels._nb_matvec),
        (
            "batch_logits (32x32 @ 32x20)",
            lambda f: f(batch, W),
            kernels._np_batch_logits,
            kernels._nb_batch_logits,
        ),
        (
            "row_softmax (32x20)",
            lambda f: f(logits),
            kernels._np_row_softmax,
            kernels._nb_row_softmax,
        ),
        (
            "count_strictly_less (4096)",
            lambda f: f(cache, 0.1),
            kernels._np_count_strictly_less,
            kernels._nb_count_strictly_less,
        ),
        (
            "sgd_step (b=32)",
            lambda f: f(W.copy(), batch, labels, 0.05),
            kernels._np_sgd_step,
            kernels._nb_sgd_step,
        ),
        (
            "correct_count (1000x32)",
            lambda f: f(W, rng.standard_normal((1000, d)), rng.integers(0, C, 1000)),
            kernels._np_correct_count,
            kernels._nb_correct_count,
        ),
    ]

    print(f"{'kernel':34s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, call, np_fn, nb_fn in pairs:
        t_np = timeit(lambda: call(np_fn), repeats)
        if kernels.NUMBA_AVAILABLE:
            t_nb = timeit(lambda: call(nb_fn), repeats)
            print(f"{name:34s} {t_np * 1e6:10.2f}us {t_nb * 1e6:10.2f}us {t_np / t_nb:8.1f}x")
        else:
            print(f"{name:34s} {t_np * 1e6:10.2f}us {'n/a':>12s} {'n/a':>9s}")


def bench_end_to_end():
    spec = SyntheticSourceSpec(
        num_classes=20, feature_dim=32, pool_size=20000,
        power_law_alpha=1.0, label_noise_rate=0.2, seed=0,
    )
    config = IDSConfig(
        data_budget=1200, initial_size=200, total_updates=400, init_updates=200,
        method=MethodConfig(AcquisitionMethod.PEAKS), seed=0,
    )
    run(config, synth_build(spec))  # warm
    t0 = time.perf_counter()
    result = run(config, synth_build(spec))
    dt = time.perf_counter() - t0
    path = "numba" if kernels.USING_NUMBA else "numpy"
    print(
        f"\nend-to-end selection run ({path} path): {dt:.3f}s, "
        f"{len(result.candidate_log)} candidates scored, "
        f"final accuracy {result.final_test_accuracy:.3f}"
    )


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    if not kernels.NUMBA_AVAILABLE:
        print("numba unavailable: timing the numpy path only")
    kernels.warmup()
    bench_pairs(args.repeats)
    bench_end_to_end()


if __name__ == "__main__":
    main()
