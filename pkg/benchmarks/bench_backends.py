#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the three hot loops (thinning simulation, feedback schedule
construction, schedule replay) on the two-resilience showcase workload and
prints per-backend timings plus the speedup.  The two backends are
bit-identical, so only the wall clock differs.

Usage: python benchmarks/bench_backends.py [--paths N] [--grid-step H]
"""

import argparse
import time

import numpy as np

from mihexec import ExcitationPair, ExecutionProblem, HawkesSpec, ImpactParams, MarkLaw, PowerSum, simulate
from mihexec.backend import available_backends, get_backend
from mihexec.market import realized_cost
from mihexec.montecarlo import path_seed
from mihexec.strategy import execute_optimal


def build_workload():
    phi_s = PowerSum.of((1.2, 0.2), (0.5, 0.7), (14.4, 1.0))
    phi_c = PowerSum.of((1.2, 0.2), (0.5, 0.7), (0.4, 1.0))
    spec = HawkesSpec(
        beta=20.0, kappa_infty=12.0, kappa0_plus=60.0, kappa0_minus=60.0,
        marks=MarkLaw.exponential(50.0), excitation=ExcitationPair(phi_s, phi_c),
    )
    params = ImpactParams(q=100.0, rho=25.0, nu=0.3, epsilon=0.3)
    problem = ExecutionProblem(x0=-500.0, T=1.0, D0=0.1, S0=0.0, params=params, spec=spec)
    return spec, problem


def bench_backend(name, spec, problem, n_paths, grid_step):
    kernels = get_backend(name)
    timings = {}

    t0 = time.perf_counter()
    paths = [simulate(spec, problem.T, path_seed(42, i), kernels=kernels) for i in range(n_paths)]
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    results = [
        execute_optimal(p, problem, mode="feedback", grid_step=grid_step, kernels=kernels) for p in paths
    ]
    timings["feedback+replay"] = time.perf_counter() - t0

    init = problem.initial_market_state()
    t0 = time.perf_counter()
    costs = [realized_cost(p, r.schedule, init, problem.params, kernels=kernels) for p, r in zip(paths, results)]
    timings["replay"] = time.perf_counter() - t0

    return timings, float(np.mean(costs))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=50)
    parser.add_argument("--grid-step", type=float, default=5e-4)
    args = parser.parse_args()

    spec, problem = build_workload()
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"workload: {args.paths} paths, grid step {args.grid_step}")
    print()

    all_timings = {}
    means = {}
    for name in backends:
        timings, mean_cost = bench_backend(name, spec, problem, args.paths, args.grid_step)
        all_timings[name] = timings
        means[name] = mean_cost

    stages = ["simulate", "feedback+replay", "replay"]
    header = f"{'stage':<18}" + "".join(f"{name:>14}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for stage in stages:
        row = f"{stage:<18}"
        for name in backends:
            row += f"{all_timings[name][stage]:>12.3f}s"
        if len(backends) == 2:
            row += f"{all_timings[backends[0]][stage] / all_timings[backends[1]][stage]:>9.1f}x"
        print(row)
    print()
    if len(backends) == 2 and means[backends[0]] == means[backends[1]]:
        print(f"mean cost identical across backends: {means[backends[0]]:.6f}")
    else:
        for name in backends:
            print(f"mean cost [{name}]: {means[name]:.6f}")


if __name__ == "__main__":
    main()
