"""Compare the numba and numpy kernel backends: wall time and largest output difference.

    python benchmarks/bench_kernels.py [--repeat 20]

The end-to-end row times one default-schedule top exponent on the standard map
in a fresh interpreter per backend (NEWLYAP_DISABLE_NUMBA selects numpy).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from newlyap import _kernels as K


def _cases(rng):
    e = rng.normal(size=(4000, 2)) * 1e-9
    x = np.array([0.31, 0.27])
    a = np.array([[2.0, 1.0], [1.0, 1.0]])
    dists = np.abs(rng.lognormal(-12, 3, size=(4000, 31)))
    ns = np.array([5, 10, 15, 20, 25, 30], dtype=np.int64)
    ds = np.array([1e-2, 1e-3, 1e-4])
    return {
        "linear_offsets": ((a, e), K.linear_offsets_np, K.linear_offsets_nb),
        "standard_offsets": ((1.5, x, e), K.standard_offsets_np, K.standard_offsets_nb),
        "example_offsets": ((x, e), K.example_offsets_np, K.example_offsets_nb),
        "twist_offsets": ((-0.35, 0.0, 0.25, 0.6, 1.0, x - 0.4, e), K.twist_offsets_np, K.twist_offsets_nb),
        "grid_reduce": ((dists, ns, ds), K.grid_reduce_np, K.grid_reduce_nb),
    }


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, float), np.asarray(b, float)
    finite = np.isfinite(a) & np.isfinite(b)
    return float(np.max(np.abs(a[finite] - b[finite]), initial=0.0))


def _end_to_end(disable: bool) -> float:
    code = ("import time; from newlyap import exponents as E, maps as M;"
            "m = M.standard_map(1.5); E.new_top_exponent(m, (0.1, 0.2));"
            "t = time.perf_counter(); [E.new_top_exponent(m, (0.1 * i, 0.3)) for i in range(1, 9)];"
            "print((time.perf_counter() - t) / 8)")
    env = dict(os.environ)
    env.pop("NEWLYAP_DISABLE_NUMBA", None)
    if disable:
        env["NEWLYAP_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (args_, f_np, f_nb) in _cases(rng).items():
        f_nb(*args_)  # compile
        t_np = min(timeit.repeat(lambda: f_np(*args_), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*args_), number=1, repeat=args.repeat)) * 1e3
        diff = _maxdiff(f_np(*args_), f_nb(*args_))
        print(f"{name:18s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f} {diff:10.1e}")
    t_np, t_nb = _end_to_end(True), _end_to_end(False)
    print(f"{'new_top_exponent':18s} {t_np * 1e3:10.1f} {t_nb * 1e3:10.1f} {t_np / t_nb:8.1f} {'-':>10s}")


if __name__ == "__main__":
    main()
