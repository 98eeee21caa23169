"""Compare the compiled and pure-numpy kernel backends on representative inputs.

Run: python3 benchmarks/bench_kernels.py
"""

import timeit

import numpy as np

from cachesched import _pykernels
from cachesched.kernels import BACKENDS


def _inputs(rng):
    theta = rng.uniform(-5, 20, 100_000)
    cand = 10 ** rng.uniform(-11, -8, 21)
    miss = 10 ** rng.uniform(-11, -8, 20)
    pen = rng.uniform(0, 1e7, 20)
    K, C, S = 2000, 2, 2
    ugain = 10 ** rng.uniform(-11, -8, (K, S))
    cgain = 10 ** rng.uniform(-11, -8, (K, C, S))
    ucost, ccost = rng.uniform(1e7, 1e9, (K, S)), rng.uniform(1e7, 1e9, (K, C, S))
    covered = rng.random((K, C)) < 0.2
    v_cont = np.sort(rng.uniform(0, 1e9, 1 << (C * S)))[::-1]
    return theta, (cand, miss, pen), (ucost, ccost, ugain, cgain, covered, v_cont)


def bench(impl, theta, target_args, bellman_args):
    cases = {
        "segment_cost x1e5": (lambda: impl.segment_cost(theta, 1.0, 100.0, 1.4e7), 5),
        "choose_target x1e3": (lambda: [impl.choose_target(*target_args, 33.5, 1.0, 100.0, 1.4e7)
                                         for _ in range(1000)], 3),
        "bellman 16 states, 2000 draws": (lambda: impl.bellman_values(*bellman_args), 1),
    }
    return {name: min(timeit.repeat(fn, number=1, repeat=rep)) for name, (fn, rep) in cases.items()}


def main():
    rng = np.random.default_rng(0)
    theta, target_args, bellman_args = _inputs(rng)
    results = {name: bench(impl, theta, target_args, bellman_args) for name, impl in BACKENDS.items()}
    if "cython" in BACKENDS:
        # the two backends must agree before timings mean anything
        c, p = BACKENDS["cython"], _pykernels
        assert np.allclose(c.bellman_values(*bellman_args), p.bellman_values(*bellman_args), rtol=1e-12)
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in results) + ("   speedup" if len(results) > 1 else ""))
    for case in results["python"]:
        row = [results[n][case] for n in results]
        line = f"{case:32s}" + "".join(f"{t * 1e3:10.2f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[0] / row[1]:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
