"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel is fed the same inputs in both backends; the script checks that the
outputs agree before reporting the best-of-``repeat`` wall time and the speedup.
"""
import argparse
import time

import numpy as np

from flis import _fallback

try:
    from flis import _kernels
except ImportError:
    _kernels = None


def _patch_problem(rng, d=242, K=120, n=2000):
    # coherent, nonnegative atoms and signals, like intensity/distance patches
    D = np.abs(rng.standard_normal((d, K))) + 0.5
    D /= np.linalg.norm(D, axis=0)
    Y = D[:, rng.integers(0, K, n)] * rng.random(n) + 0.05 * np.abs(rng.standard_normal((d, n)))
    return D.T @ D, D.T @ Y


def _cases(rng):
    G, B = _patch_problem(rng)
    Gs, Bs = _patch_problem(rng, d=50, K=40, n=500)
    yy, xx = np.mgrid[:512, :512]
    mask = ((yy - 256) / 200.0) ** 2 + ((xx - 256) / 170.0) ** 2 < 1.0
    mask &= rng.random(mask.shape) > 0.01
    return {
        "omp_gram (K=120, L=5, n=2000)": lambda m: m.omp_gram(G, B, 5),
        "nnqp_gram (K=120, n=2000)": lambda m: m.nnqp_gram(G, B - 0.05),
        "lasso_cd nonneg (K=40, n=500)": lambda m: m.lasso_cd(Gs, Bs, 0.1, True)[0],
        "edt_sq (512x512)": lambda m: m.edt_sq(mask),
    }


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':34}{'python s':>11}{'cython s':>11}{'speedup':>9}")
    for name, call in cases.items():
        tp, outp = best_time(lambda: call(_fallback), args.repeat)
        tc, outc = best_time(lambda: call(_kernels), args.repeat)
        err = np.abs(np.asarray(outp) - np.asarray(outc)).max()
        scale = max(1.0, np.abs(np.asarray(outp)).max())
        if err > 1e-6 * scale:
            raise SystemExit(f"{name}: backends disagree (max abs diff {err:.3g})")
        print(f"{name:34}{tp:11.4f}{tc:11.4f}{tp / tc:9.1f}")


if __name__ == "__main__":
    main()
