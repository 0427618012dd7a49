"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat R]

Times each hot kernel on the same inputs with both backends, checks the
outputs agree, and times one full default edit under each backend in a
subprocess (the backend is chosen at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from flowbypass import _kernels_py

try:
    from flowbypass import _kernels_c
except ImportError:
    _kernels_c = None

EDIT_SNIPPET = """
import time, numpy as np
from flowbypass import BACKEND, EditConfig, edit, labeled
from flowbypass.field import ConditionedFieldSpec, GaussianMixture
mix = lambda w: GaussianMixture.from_components(
    [(w / 3, [c, 2.5], 0.5) for c in (-2, 0, 2)] + [((1 - w) / 3, [c, -2.5], 0.5) for c in (-2, 0, 2)])
f = ConditionedFieldSpec(2, {"x": mix(0.3), "y": mix(0.7)})
x, y = labeled("x"), labeled("y")
edit(f, np.array([0.1, -2.4]), x, y)
t = time.perf_counter()
for _ in range(20):
    edit(f, np.array([0.1, -2.4]), x, y)
print(BACKEND, (time.perf_counter() - t) / 20)
"""


def cases():
    rng = np.random.Generator(np.random.Philox(0))
    k, d = 12, 2
    w = rng.uniform(0.1, 1, k)
    w /= w.sum()
    means = np.ascontiguousarray(rng.normal(size=(k, d)))
    stds = rng.uniform(0.3, 1.0, k)
    out = []
    for n in (1, 64, 4096):
        states = np.ascontiguousarray(rng.normal(size=(n, d)))
        t = np.ascontiguousarray(rng.uniform(0, 1, n))
        out.append((f"mixture_velocity n={n}", "mixture_velocity", (states, t, w, means, stds)))
    times = np.ascontiguousarray(np.linspace(0, 1, 51))
    q = np.ascontiguousarray(rng.normal(size=(51, d)))
    p = np.ascontiguousarray(rng.normal(size=(51, d)))
    out.append(("bypass_trapezoid N=50", "bypass_trapezoid", (times, q, p, 0)))
    ft = np.ascontiguousarray(np.linspace(0, 1, 4001))
    fq = np.ascontiguousarray(rng.normal(size=(4001, d)))
    fp = np.ascontiguousarray(rng.normal(size=(4001, d)))
    out.append(("linear_backward_euler M=4000", "linear_backward_euler", (ft, fq, fp)))
    return out


def bench(fn, args, repeat):
    number = max(1, int(0.05 / max(min(timeit.repeat(lambda: fn(*args), number=1, repeat=3)), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; only the numpy backend is available")
        return 1
    print(f"{'kernel':<32}{'numpy [us]':>12}{'cython [us]':>13}{'speedup':>9}")
    for label, name, fargs in cases():
        py_fn, c_fn = getattr(_kernels_py, name), getattr(_kernels_c, name)
        np.testing.assert_allclose(np.asarray(c_fn(*fargs)[0] if name == "bypass_trapezoid" else c_fn(*fargs)),
                                   np.asarray(py_fn(*fargs)[0] if name == "bypass_trapezoid" else py_fn(*fargs)),
                                   rtol=1e-12, atol=1e-13)
        tp, tc = bench(py_fn, fargs, args.repeat), bench(c_fn, fargs, args.repeat)
        print(f"{label:<32}{tp * 1e6:>12.1f}{tc * 1e6:>13.1f}{tp / tc:>8.1f}x")
    print()
    for pure in ("1", "0"):
        env = dict(os.environ, FLOWBYPASS_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", EDIT_SNIPPET], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"full default edit, {out[0]:<7} backend: {float(out[1]) * 1e3:8.2f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
