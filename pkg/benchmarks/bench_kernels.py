"""Time the numba kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--paths N] [--repeat R]

Run with NOISECTL_NUMBA=1 (the default); if numba is unavailable only the
numpy timings are printed.
"""

import argparse
import timeit

import numpy as np

from noisectl import _kernels


def cases(paths):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((paths, 2))
    means = rng.standard_normal((8, 2)) * 2.0
    logw = np.log(np.full(8, 1.0 / 8))
    score = rng.standard_normal((paths, 2))
    noise = rng.standard_normal((paths, 2))
    return {
        "normals": (7, 3, 0, paths, 2),
        "gmm_score": (x, 0.8, 0.5, means, logw),
        "ei_update": (x, score, noise, 1.01, 0.02, 0.1),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    jit = {"normals": _kernels.normals, "gmm_score": _kernels.gmm_score, "ei_update": _kernels.ei_update}
    print(f"backend: {_kernels.BACKEND}, paths: {args.paths}")
    print(f"{'kernel':<10} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, call_args in cases(args.paths).items():
        ref = _kernels.NUMPY_KERNELS[name]
        t_np = min(timeit.repeat(lambda: ref(*call_args), number=1, repeat=args.repeat)) * 1e3
        if _kernels.BACKEND == "numba":
            fast = jit[name]
            out = fast(*call_args)  # compile outside the timed region
            assert np.allclose(out, ref(*call_args), rtol=1e-12, atol=1e-12)
            t_nb = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<10} {t_np:>10.2f} {t_nb:>10.2f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<10} {t_np:>10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
