"""Compare the compiled and numpy backends on the solver's hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--episode]

``--episode`` also times a short closed-loop cart-pole episode under each
backend (run in a subprocess so the backend choice is made at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ssimpc import kernels
from ssimpc.plants import QuadrotorParams


def _cases(rng):
    W = rng.normal(size=(75, 5))
    b = rng.uniform(0, 2 * np.pi, 75)
    Z = rng.normal(size=(40, 5))
    cp = np.array([1.0, 0.1, 0.5, 9.81])
    Xc = rng.normal(size=(200, 4))
    Uc = rng.uniform(-30, 30, (200, 1))
    qa = QuadrotorParams().as_array(True)
    Xq = rng.normal(size=(280, 10))
    Xq[:, 6:10] /= np.linalg.norm(Xq[:, 6:10], axis=1, keepdims=True)
    Uq = rng.uniform([0, -3, -3, -3], [13, 3, 3, 3], (280, 4))

    def backward(N, n, m):
        G = rng.normal(size=(n, n))
        return (rng.normal(size=(N, n, n)) * 0.5, rng.normal(size=(N, n, m)), G @ G.T, np.eye(m),
                G @ G.T, rng.normal(size=(N + 1, n)), rng.normal(size=(N, m)),
                np.zeros((N, m)), -np.ones(m), np.ones(m), 1e-6)

    bc = backward(20, 4, 1)
    bq = backward(10, 10, 4)
    return {
        "rff_eval (M=75, 40 pts)": lambda be: be.rff_eval(W, b, Z),
        "rff_eval_grad": lambda be: be.rff_eval_grad(W, b, Z),
        "cartpole_rk4 (200 rows)": lambda be: be.cartpole_rk4(cp, 1 / 15, Xc, Uc),
        "quadrotor_rk4 (280 rows)": lambda be: be.quadrotor_rk4(qa, 0.02, Xq, Uq),
        "ilqr_backward (N=20, 4x1)": lambda be: be.ilqr_backward(*bc),
        "ilqr_backward (N=10, 10x4)": lambda be: be.ilqr_backward(*bq),
    }


EPISODE = """
import time, numpy as np
from ssimpc.controller import EpisodeConfig, run_episode
from ssimpc.mpc import CostSpec
from ssimpc.plants import make_cartpole
from ssimpc import kernels
truth, nominal = make_cartpole()
cost = CostSpec(np.diag([5.0, 0.1, 5.0, 0.1]), np.array([[0.1]]))
cfg = EpisodeConfig(truth, nominal, cost, steps=45, init_lower=[0.5, 0, 0.1, 0], init_upper=[0.5, 0, 0.1, 0])
t0 = time.perf_counter(); run_episode(cfg); print(kernels.BACKEND, time.perf_counter() - t0)
"""


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episode", action="store_true")
    args = ap.parse_args()

    backends = kernels.backends()
    cases = _cases(np.random.default_rng(0))
    names = sorted(backends)
    print(f"{'kernel':30s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases.items():
        times = {}
        for name in names:
            be = backends[name]
            t = timeit.Timer(lambda: fn(be))
            n, _ = t.autorange()
            times[name] = min(t.repeat(args.repeat, n)) / n
        row = f"{label:30s}" + "".join(f"{times[n] * 1e6:12.1f}us" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)

    if args.episode:
        for env in ({}, {"SSIMPC_PURE_PYTHON": "1"}):
            out = subprocess.run([sys.executable, "-c", EPISODE], env=dict(os.environ, **env),
                                 capture_output=True, text=True, check=True)
            name, secs = out.stdout.split()
            print(f"cart-pole episode, 45 steps, {name:7s} {float(secs):.2f}s")


if __name__ == "__main__":
    main()
