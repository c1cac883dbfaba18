"""Compiled vs pure-Python unit-speed kernel.

Times whole trajectories (Euclidean and one random metric) and a batch of
field evaluations for both backends, and reports how far the endpoints
agree.  Usage: python3 benchmarks/bench_kernel.py [--repeat N]
"""
import argparse
import time

import numpy as np

from pqflow import _spiral_kernel_py as py_backend
from pqflow import flow, spiral

try:
    from pqflow import _spiral_kernel as cy_backend
except ImportError:
    cy_backend = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if cy_backend is None:
        print("compiled kernel not built; nothing to compare")
        return
    sp = spiral.SpiralParams()
    cases = [("euclidean", flow.euclidean_metric()), ("random seed 3", flow.random_metric(flow.RandomMetricSpec(3)))]
    print(f"{'case':<22}{'python s':>10}{'cython s':>10}{'speedup':>9}{'steps':>8}{'|ds_end|':>11}")
    for label, g in cases:
        def run(backend, g=g):
            return backend.unit_speed_flow(g.kind, g.params, sp.delta, sp.c, sp.sharpness, -0.4, 0.0,
                                           1e-2, 1e-8, 1e-10, 1e4, 1_000_000)
        tp, rp = _best(lambda: run(py_backend), args.repeat)
        tc, rc = _best(lambda: run(cy_backend), args.repeat)
        print(f"{label:<22}{tp:>10.3f}{tc:>10.4f}{tp / tc:>9.1f}{len(rc[0]):>8d}{abs(rp[1][-1] - rc[1][-1]):>11.2e}")
    rng = np.random.default_rng(0)
    s = rng.uniform(-1.0, -0.01, 20000)
    t = rng.uniform(0.0, 2 * np.pi, s.size)
    g = cases[1][1]
    batch = lambda b: b.field_batch(g.kind, g.params, sp.delta, sp.c, sp.sharpness, s, t)
    tp, vp = _best(lambda: batch(py_backend), args.repeat)
    tc, vc = _best(lambda: batch(cy_backend), args.repeat)
    diff = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in zip(vp, vc))
    print(f"{'field batch 2e4':<22}{tp:>10.3f}{tc:>10.4f}{tp / tc:>9.1f}{s.size:>8d}{diff:>11.2e}")


if __name__ == "__main__":
    main()
