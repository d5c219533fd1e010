"""Path-parallel cost estimation, optimality perturbation tests, drift checks.

Every path gets its own PCG64 stream keyed by (master seed, path index), so
results are independent of worker scheduling; reductions run over an array
indexed by path.  MIHEXEC_THREADS caps the worker count (0 = auto, unset =
serial).

TODO: antithetic and control-variate variance reduction; common random
numbers is the only technique implemented.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .hawkes import EventPath, HawkesSpec, simulate
from .market import ImpactParams, TradeSchedule, realized_cost
from .pms import poisson_arbitrage_schedule
from .special import DEFAULT_STABILITY
from .strategy import ExecutionProblem, _merged_breakpoints, ow_schedule


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_paths: int
    ci95: tuple[float, float]

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        n = len(samples)
        if n and np.all(samples == samples[0]):
            # degenerate sample (e.g. no randomness left); keep stderr exactly 0
            mean = float(samples[0])
            return cls(mean=mean, stderr=0.0, n_paths=n, ci95=(mean, mean))
        mean = float(np.mean(samples))
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=mean, stderr=stderr, n_paths=n, ci95=(mean - 1.96 * stderr, mean + 1.96 * stderr))


def path_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((master_seed, index))


def simulate_path(spec: HawkesSpec, T: float, master_seed: int, index: int) -> EventPath:
    return simulate(spec, T, path_seed(master_seed, index))


def _worker_count() -> int:
    raw = os.environ.get("MIHEXEC_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 0:
        raise ValueError("MIHEXEC_THREADS must be >= 0")
    if n == 0:
        return min(os.cpu_count() or 1, 8)
    return n


def optimal_schedule(path: EventPath, problem: ExecutionProblem, grid_step: float) -> TradeSchedule:
    """Feedback-mode optimal schedule for one path (lean Monte Carlo path)."""
    bp, ev_idx = _merged_breakpoints(path, problem.T, grid_step)
    p = problem.params
    b0, blk_tau, blk_dx, rates, terminal, _, _, _ = backend.feedback_schedule(
        bp,
        ev_idx,
        path.dN,
        path.delta_I,
        problem.T,
        problem.x0,
        p.q * problem.D0,
        problem.delta0,
        p.rho,
        p.nu,
        p.epsilon,
        problem.spec.beta,
        problem.m1,
        problem.eta,
        problem.stability.series_threshold,
    )
    return TradeSchedule(
        T=problem.T,
        initial_block=b0,
        block_times=blk_tau,
        block_sizes=blk_dx,
        rate_edges=bp,
        rate_values=rates,
        terminal_block=terminal,
    )


def resolve_policy(policy, problem: ExecutionProblem):
    """Normalize a policy spec to (name, path -> TradeSchedule)."""
    if callable(policy):
        return getattr(policy, "__name__", "custom"), policy
    if policy == "optimal":
        return "optimal", lambda path, problem, grid_step: optimal_schedule(path, problem, grid_step)
    if policy == "ow":
        sched = ow_schedule(problem.x0, problem.params.rho, problem.T)
        return "ow", lambda path, problem, grid_step: sched
    if isinstance(policy, tuple) and len(policy) == 2 and policy[0] == "poisson_arb":
        lam = float(policy[1])
        return (
            f"poisson_arb({lam})",
            lambda path, problem, grid_step: poisson_arbitrage_schedule(lam, path, problem.params),
        )
    raise ValueError(f"unknown policy {policy!r}")


def estimate_cost(
    policy,
    problem: ExecutionProblem,
    n_paths: int,
    seed: int,
    grid_step: float | None = None,
) -> Estimate:
    """Average realized cost of a policy over independent paths.

    Per-path streams are derived from (seed, index); the reduction is an
    indexed array, so worker scheduling cannot change the result.
    """
    if n_paths < 2:
        raise ValueError("estimate_cost: n_paths must be >= 2")
    step = problem.T / 2000.0 if grid_step is None else float(grid_step)
    _, build = resolve_policy(policy, problem)
    init = problem.initial_market_state()
    costs = np.empty(n_paths)

    def run(i: int) -> None:
        path = simulate_path(problem.spec, problem.T, seed, i)
        schedule = build(path, problem, step)
        costs[i] = realized_cost(path, schedule, init, problem.params)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(n_paths)))
    else:
        for i in range(n_paths):
            run(i)
    return Estimate.from_samples(costs)


def perturbation_test(
    problem: ExecutionProblem,
    perturbations: list[TradeSchedule],
    n_paths: int,
    seed: int,
    grid_step: float | None = None,
) -> list[Estimate]:
    """Common-random-number estimates of E[C(X* + pi)] - E[C(X*)].

    Each perturbation must be a round trip (zero net position); optimality
    predicts every mean difference >= 0 up to confidence-interval width.
    """
    if n_paths < 2:
        raise ValueError("perturbation_test: n_paths must be >= 2")
    step = problem.T / 2000.0 if grid_step is None else float(grid_step)
    for k, pert in enumerate(perturbations):
        if abs(pert.total_traded()) > 1e-9 * max(1.0, abs(pert.initial_block), float(np.max(np.abs(pert.block_sizes))) if len(pert.block_sizes) else 1.0):
            raise ValueError(f"perturbation {k} is not a round trip (net {pert.total_traded()})")
        if pert.T != problem.T:
            raise ValueError(f"perturbation {k} horizon differs from problem horizon")
    init = problem.initial_market_state()
    diffs = np.empty((len(perturbations), n_paths))
    for i in range(n_paths):
        path = simulate_path(problem.spec, problem.T, seed, i)
        base = optimal_schedule(path, problem, step)
        base_cost = realized_cost(path, base, init, problem.params)
        for k, pert in enumerate(perturbations):
            merged = base.merged_with(pert)
            diffs[k, i] = realized_cost(path, merged, init, problem.params) - base_cost
    return [Estimate.from_samples(diffs[k]) for k in range(len(perturbations))]


@dataclass(frozen=True)
class DriftDiagnostic:
    times: np.ndarray
    drift: list[Estimate]
    mean_D2: np.ndarray

    def covers_zero(self, z: float = 3.0) -> bool:
        return all(abs(e.mean) <= z * e.stderr for e in self.drift)


def martingale_diagnostic(
    spec: HawkesSpec,
    params: ImpactParams,
    D0: float,
    delta0: float,
    t_grid: np.ndarray,
    n_paths: int,
    seed: int,
) -> DriftDiagnostic:
    """Monte Carlo drift of P with no strategic trading, plus E[D_t^2].

    delta0 re-centers the initial intensities around the flow's Sigma0 so
    drift states (D0, delta0) off the simulated spec can be probed directly.
    """
    import dataclasses

    Sigma0 = spec.Sigma0
    k0p = (Sigma0 + delta0) / 2.0
    k0m = (Sigma0 - delta0) / 2.0
    if k0p < 0.0 or k0m < 0.0:
        raise ValueError("martingale_diagnostic: |delta0| must not exceed Sigma0")
    spec = dataclasses.replace(spec, kappa0_plus=k0p, kappa0_minus=k0m)
    t_grid = np.asarray(t_grid, dtype=float)
    T = float(np.max(t_grid))
    q, rho, nu = params.q, params.rho, params.nu
    sums = np.zeros(len(t_grid))
    sq_sums = np.zeros(len(t_grid))
    d2_sums = np.zeros(len(t_grid))
    for i in range(n_paths):
        path = simulate_path(spec, T, seed, i)
        dn = path.dN
        idx = np.searchsorted(path.tau, t_grid, side="right")
        cum_growth = np.concatenate([[0.0], np.cumsum(np.exp(rho * path.tau) * dn)])
        cum_n = np.concatenate([[0.0], np.cumsum(dn)])
        D_t = np.exp(-rho * t_grid) * (D0 + (1.0 - nu) / q * cum_growth[idx])
        drift = nu * cum_n[idx] / q + D_t - D0
        sums += drift
        sq_sums += drift * drift
        d2_sums += D_t * D_t
    mean = sums / n_paths
    var = (sq_sums - n_paths * mean * mean) / (n_paths - 1)
    stderr = np.sqrt(np.maximum(var, 0.0) / n_paths)
    drift = [
        Estimate(
            mean=float(mean[j]),
            stderr=float(stderr[j]),
            n_paths=n_paths,
            ci95=(float(mean[j] - 1.96 * stderr[j]), float(mean[j] + 1.96 * stderr[j])),
        )
        for j in range(len(t_grid))
    ]
    return DriftDiagnostic(times=t_grid, drift=drift, mean_D2=d2_sums / n_paths)
