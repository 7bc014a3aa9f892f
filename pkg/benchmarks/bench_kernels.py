"""Timing comparison of the numba and pure-numpy kernel variants.

Runs each hot kernel at pipeline-realistic sizes in both variants
(when numba is installed) and prints median wall times plus the result
agreement, bypassing the backend switch so one process measures both.

    python benchmarks/bench_kernels.py [--repeats N] [--pairs N]
"""

import argparse
import math
import time

import numpy as np

from photonmod import _kernels


def _median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def _row(name, np_fn, nb_fn, args, repeats):
    ref = np_fn(*args)
    t_np = _median_time(np_fn, args, repeats)
    if nb_fn is None:
        print(f"{name:24s} numpy {1e3 * t_np:8.3f} ms   numba      n/a")
        return
    nb_fn(*args)  # compile before timing
    got = nb_fn(*args)
    t_nb = _median_time(nb_fn, args, repeats)
    err = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
    scale = float(np.max(np.abs(np.asarray(ref)))) or 1.0
    print(
        f"{name:24s} numpy {1e3 * t_np:8.3f} ms   numba {1e3 * t_nb:8.3f} ms   "
        f"speedup {t_np / t_nb:5.2f}x   rel err {err / scale:.2e}"
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=9, help="timing repeats per kernel")
    ap.add_argument("--pairs", type=int, default=500, help="trajectory pairs to overlap")
    args = ap.parse_args()

    rng = np.random.default_rng(0)

    # decaying intensity on a 14 ns, 1 ps grid: the overlap integrand
    n = 14001
    dt = 0.001
    t = dt * np.arange(n)
    w = (1.0 / 1.4) * np.exp(-t / 1.4)
    overlap_args = (w, dt, 2.0 * 3.2142857142857144)

    # phase increments for pair overlap, sized like the MC estimator
    wc = w * dt
    eps1 = rng.normal(0.0, math.sqrt(2.0 * 3.21 * dt), size=(args.pairs, n - 1))
    eps2 = rng.normal(0.0, math.sqrt(2.0 * 3.21 * dt), size=(args.pairs, n - 1))
    pair_args = (wc, eps1, eps2)

    # jitter-convolved expectation over a 20 ns histogram at 50 ps bins
    m = 20001
    tm = dt * np.arange(m)
    rho_c = np.exp(-tm / 1.4) * dt
    edges = 0.05 * np.arange(401)
    jitter_args = (rho_c, tm, edges, 0.25 / (2.0 * math.sqrt(2.0 * math.log(2.0))))

    print(f"numba available: {_kernels.HAVE_NUMBA}")
    _row(
        "exp_kernel_overlap",
        _kernels.exp_kernel_overlap_np,
        _kernels.exp_kernel_overlap_nb,
        overlap_args,
        args.repeats,
    )
    _row(
        "pair_overlap",
        _kernels.pair_overlap_np,
        _kernels.pair_overlap_nb,
        pair_args,
        args.repeats,
    )
    _row(
        "jitter_bin_weights",
        _kernels.jitter_bin_weights_np,
        _kernels.jitter_bin_weights_nb,
        jitter_args,
        args.repeats,
    )


if __name__ == "__main__":
    main()
