"""Price-manipulation diagnostics and the Poisson round-trip arbitrage.

The no-manipulation regime ties four parameter conditions together: kernel
decay equals resilience, net self-excitation equals the transient impact
rate, the excitation difference is linear on the mark support, and the
initial state sits on the steady-state ray q*D0 = m1*delta0/rho.  When they
hold the unperturbed price is a martingale and the optimal strategy ignores
the flow entirely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .hawkes import EventPath, HawkesSpec
from .market import ImpactParams, TradeSchedule
from .special import zeta_divided_difference, zeta_scalar
from .strategy import ExecutionProblem

STRUCTURAL_RTOL = 1e-9


@dataclass(frozen=True)
class MihmReport:
    beta_eq_rho: bool
    alpha_eq_resilience: bool
    phi_diff_linear: bool
    phi_diff_max_dev: float
    steady_state: bool
    steady_state_residual: float
    verdict: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta_eq_rho": self.beta_eq_rho,
                "alpha_eq_resilience": self.alpha_eq_resilience,
                "phi_diff_linear": self.phi_diff_linear,
                "phi_diff_max_dev": self.phi_diff_max_dev,
                "steady_state": self.steady_state,
                "steady_state_residual": self.steady_state_residual,
                "verdict": self.verdict,
            },
            indent=2,
            sort_keys=True,
        )


def _structural_checks(spec: HawkesSpec, params: ImpactParams, n_support: int = 64):
    """The three state-free conditions, with the linearity deviation."""
    rho, nu = params.rho, params.nu
    alpha = spec.alpha
    beta_eq_rho = abs(spec.beta - rho) <= STRUCTURAL_RTOL * max(1.0, abs(rho))
    target = (1.0 - nu) * rho
    alpha_eq = abs(alpha - target) <= STRUCTURAL_RTOL * max(1.0, abs(target))
    xs = spec.marks.support_points(n_support)
    dev = np.abs(spec.excitation.phi_diff(xs) - alpha * xs)
    max_dev = float(np.max(dev)) if len(xs) else 0.0
    scale = max(1.0, abs(alpha) * float(np.max(np.abs(xs))) if len(xs) else 1.0)
    linear = max_dev <= STRUCTURAL_RTOL * scale
    return beta_eq_rho, alpha_eq, linear, max_dev


def _is_degenerate_dirac(spec: HawkesSpec) -> bool:
    return spec.marks.kind == "dirac" and spec.marks.m1 == 0.0


def mihm_diagnosis(problem: ExecutionProblem) -> MihmReport:
    """Evaluate the four no-manipulation conditions for this problem."""
    spec = problem.spec
    params = problem.params
    beta_eq_rho, alpha_eq, linear, max_dev = _structural_checks(spec, params)
    target = problem.m1 * problem.delta0 / params.rho
    residual = params.q * problem.D0 - target
    scale = max(1.0, abs(params.q * problem.D0), abs(target))
    steady = abs(residual) <= STRUCTURAL_RTOL * scale
    if _is_degenerate_dirac(spec) and problem.D0 == 0.0:
        verdict = "no_PMS"
    elif beta_eq_rho and alpha_eq and linear and steady:
        verdict = "no_PMS"
    else:
        verdict = "PMS_possible"
    return MihmReport(
        beta_eq_rho=beta_eq_rho,
        alpha_eq_resilience=alpha_eq,
        phi_diff_linear=linear,
        phi_diff_max_dev=max_dev,
        steady_state=steady,
        steady_state_residual=float(residual),
        verdict=verdict,
    )


def wpms_check(spec: HawkesSpec, params: ImpactParams) -> bool:
    """True iff no block posted in response to another trade can reduce cost.

    Equivalent to every reaction block vanishing identically.
    """
    if _is_degenerate_dirac(spec):
        return True
    beta_eq_rho, alpha_eq, linear, _ = _structural_checks(spec, params)
    return beta_eq_rho and alpha_eq and linear


def poisson_arbitrage_schedule(lam: float, path: EventPath, params: ImpactParams) -> TradeSchedule:
    """Round trip that shades a fraction of each incoming order.

    Posts -(1-nu)/(1-eps) * lam * dN at each order arrival and unwinds the
    accumulated position in the terminal block.  Requires a memoryless flow
    (no excitation on the path).
    """
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must be in (0, 1)")
    if path.beta != 0.0 or (path.n_events and (np.any(path.delta_I != 0.0) or np.any(path.delta_Ibar != 0.0))):
        raise ValueError("poisson arbitrage requires a memoryless (beta=0, phi=0) flow")
    factor = -(1.0 - params.nu) / (1.0 - params.epsilon) * lam
    interior = path.tau < path.T
    times = path.tau[interior]
    sizes = factor * path.dN[interior]
    return TradeSchedule(
        T=path.T,
        initial_block=0.0,
        block_times=times,
        block_sizes=sizes,
        terminal_block=-float(np.sum(sizes)),
    )


def poisson_arbitrage_expected_cost(
    lam: float, kappa0: float, m2: float, params: ImpactParams, T: float
) -> float:
    """Closed-form expected cost of the shading round trip (negative)."""
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must be in (0, 1)")
    rho = params.rho
    bracket = (1.0 - math.exp(-rho * T)) / rho - T
    return (
        2.0
        * lam
        * (1.0 - lam)
        * kappa0
        * m2
        * (1.0 - params.nu) ** 2
        / (params.q * (1.0 - params.epsilon))
        * bracket
    )


def poisson_optimal_cost(D0: float, kappa0: float, m2: float, params: ImpactParams, T: float) -> float:
    """Optimal round-trip cost in the balanced memoryless model."""
    q, rho, nu, eps = params.q, params.rho, params.nu, params.epsilon
    rt = rho * T
    value = -(rt / 2.0 / (2.0 + rt)) * (q * D0) ** 2 - (1.0 - nu) ** 2 * 2.0 * kappa0 * m2 * (
        T / 2.0 - math.log1p(rt / 2.0) / rho
    )
    return value / ((1.0 - eps) * q)


def expected_price(state: tuple[float, float], h: float, problem: ExecutionProblem) -> float:
    """E[P_{t+h} - P_t | F_t] with no strategic trading, in closed form.

    state is (D, delta).  The conditional means follow the linear system
    dE[delta]/du = -eta E[delta], dE[D]/du = -rho E[D] + (1-nu) m1 E[delta]/q;
    the rho = eta confluence is handled by a stable divided difference.
    """
    if h < 0.0:
        raise ValueError("expected_price: horizon must be >= 0")
    if h == 0.0:
        return 0.0
    D, delta = state
    p = problem.params
    q, rho, nu = p.q, p.rho, p.nu
    eta = problem.eta
    m1 = problem.m1
    drift = (m1 * delta / q) * h * zeta_scalar(eta * h)
    drift -= D * (-math.expm1(-rho * h))
    drift += rho * (1.0 - nu) * (m1 * delta / q) * h * h * zeta_divided_difference(eta * h, rho * h)
    return drift
