"""Compare the compiled and pure-Python gradient-flow kernels.

Runs the same projected-gradient integration on the microgrid
demonstration data with both backends, reports per-step timings, and
checks that the two implementations land on the same gain.

Usage: python benchmarks/benchmark_backends.py [--steps N] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ddlqi import protocol
from ddlqi._kernels import HAVE_COMPILED
from ddlqi.data import (build_covariances, collect_integral_data,
                        random_excitation)
from ddlqi.flow import FlowOptions, integrate_flow
from ddlqi.param import gain_to_parameterizer


def build_workload(seed=7):
    model = protocol.nominal_dgu()
    weights = protocol.dgu_weights()
    rng = np.random.default_rng(seed)
    excitation = random_excitation(model.m, 1.0, 0.02, 100.0, rng)
    pack = build_covariances(
        collect_integral_data(model, excitation, 0.1, 0.1))
    g0 = gain_to_parameterizer(pack, protocol.detuned_gains()["k1"])
    return pack, weights, g0


def run(backend, pack, weights, g0, steps, repeat):
    best = np.inf
    traj = None
    for _ in range(repeat):
        tic = time.perf_counter()
        traj = integrate_flow(pack, weights, g0, FlowOptions(
            grad_tol=0.0, max_steps=steps, backend=backend))
        best = min(best, time.perf_counter() - tic)
    return best, traj


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=20_000,
                        help="flow steps per run (default 20000)")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions, best-of (default 3)")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    pack, weights, g0 = build_workload(args.seed)
    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled kernel not available; benchmarking python only")

    results = {}
    for backend in backends:
        elapsed, traj = run(backend, pack, weights, g0,
                            args.steps, args.repeat)
        results[backend] = (elapsed, traj)
        print(f"{backend:>8}: {elapsed:8.3f} s total, "
              f"{elapsed / traj.steps * 1e6:8.2f} us/step "
              f"({traj.steps} steps, final cost "
              f"{traj.final_cost:.12g})")

    if len(results) == 2:
        t_py, traj_py = results["python"]
        t_c, traj_c = results["compiled"]
        gap = np.linalg.norm(traj_py.final_gain - traj_c.final_gain)
        print(f"speedup: {t_py / t_c:.1f}x, final-gain agreement "
              f"{gap:.3e}")


if __name__ == "__main__":
    main()
