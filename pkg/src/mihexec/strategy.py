"""Closed-form optimal liquidation: coefficients, value function, execution.

Two interchangeable executions of the same optimum:

* feedback mode (production) tracks the affine identity
  (1-eps) X_t = -(1+rho(T-t)) qD_t + (2+rho(T-t)) k(T-t) delta_t
  along the path: per grid segment the deviation advances by its exact flow
  and a constant rate plus a small landing block reproduce the endpoint, so
  the identity holds at every breakpoint; at each order arrival the
  implicit block re-establishes it after the jump;
* explicit mode (verification) evaluates the closed trajectory formulas
  built from the auxiliary integrals Phi and the telescoped Theta sums.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import backend
from .hawkes import EventPath, HawkesSpec
from .market import ImpactParams, MarketState, TradeSchedule, realized_cost
from .special import (
    DEFAULT_STABILITY,
    StabilityConfig,
    L_vec,
    gauss_legendre_panels,
    omega_prime_vec,
    omega_scalar,
    omega_vec,
    zeta_vec,
)

# |eta| * T below which the Ei closed form for Phi is abandoned for panel
# quadrature of the (perfectly regular) integrand: the Ei form carries 1/eta^2
# coefficients whose cancellation destroys it near eta = 0.
PHI_ETA_SMALL = 1e-3


@dataclass(frozen=True)
class ExecutionProblem:
    """Liquidate x0 on [0, T] from price state (S0, D0) and flow spec."""

    x0: float
    T: float
    D0: float
    S0: float
    params: ImpactParams
    spec: HawkesSpec
    stability: StabilityConfig = DEFAULT_STABILITY

    def __post_init__(self) -> None:
        if not (self.T > 0.0):
            raise ValueError("T must be > 0")

    @property
    def delta0(self) -> float:
        return self.spec.delta0

    @property
    def Sigma0(self) -> float:
        return self.spec.Sigma0

    @property
    def eta(self) -> float:
        return self.spec.eta

    @property
    def m1(self) -> float:
        return self.spec.marks.m1

    @property
    def P0(self) -> float:
        return self.S0 + self.D0

    def initial_market_state(self) -> MarketState:
        return MarketState(t=0.0, S=self.S0, D=self.D0, X=self.x0)

    def coefficient_set(self, ode_step: float | None = None) -> "CoefficientSet":
        step = self.T / 2000.0 if ode_step is None else float(ode_step)
        return _coefficient_set_cached(self, step)


class Coefficients(NamedTuple):
    a: float
    b: float
    c: float
    j: float
    k: float
    G_eta: float
    c_hat_eta: float


class CoefficientSet:
    """Closed-form coefficient evaluators plus tabulated (e, g).

    a, b, c, j, k and the auxiliary G, c_hat come in closed form; e and g are
    integrated once per problem by fixed-step RK4 and interpolated with cubic
    Hermite segments (the ODE right-hand side supplies exact node slopes).
    """

    def __init__(self, problem: ExecutionProblem, ode_step: float):
        if not (ode_step > 0.0):
            raise ValueError("ode_step must be > 0")
        self.problem = problem
        self.ode_step = ode_step
        p = problem.params
        self.rho = p.rho
        self.nu = p.nu
        self.eps = p.epsilon
        self.eta = problem.eta
        self.m1 = problem.m1
        self._thr = problem.stability.series_threshold
        mom = problem.spec.moments
        self._iota_c = mom.iota_c
        self._alpha_tilde = mom.alpha_tilde
        self._alpha_2 = mom.alpha_2
        self._m2 = problem.spec.marks.m2
        self._beta = problem.spec.beta
        self._kappa_infty = problem.spec.kappa_infty
        self._integrate_eg()

    # closed forms ---------------------------------------------------------

    def G(self, u):
        u = np.asarray(u, dtype=float)
        y = self.eta * u
        return zeta_vec(y, self._thr) + self.nu * self.rho * u * omega_vec(y, self._thr)

    def j(self, u):
        return 1.0 / (2.0 + self.rho * np.asarray(u, dtype=float))

    def a(self, u):
        return (self.j(u) - self.eps / 2.0) / (1.0 - self.eps)

    def b(self, u):
        u = np.asarray(u, dtype=float)
        return (self.rho * u * self.j(u)) * (self.m1 / self.rho) * self.G(u) / (1.0 - self.eps)

    def k(self, u):
        return (1.0 - self.eps) / 2.0 * self.b(u) + self.m1 / (2.0 * self.rho)

    def K(self, u):
        """(2 + rho u) k(u); the combination the feedback identity uses."""
        u = np.asarray(u, dtype=float)
        return (2.0 + self.rho * u) * self.k(u)

    def c_hat(self, u):
        u = np.asarray(u, dtype=float)
        y = self.eta * u
        return (
            (self.eta - self.nu * self.rho) ** 2
            * (self.rho * u**3 / 8.0)
            * omega_prime_vec(y, self._thr)
            * zeta_vec(y, self._thr)
            / (1.0 - self.eps)
        )

    def c(self, u):
        # algebraically identical to the eta != 0 closed form, but written
        # through omega' so it stays regular through eta = 0
        u = np.asarray(u, dtype=float)
        ratio = self.m1 / self.rho
        return (
            -(self.rho * u / 2.0) * self.j(u) * ratio**2 * self.G(u) ** 2 / (1.0 - self.eps)
            + ratio**2 * self.c_hat(u)
        )

    def coefficients(self, u) -> Coefficients:
        return Coefficients(
            a=float(self.a(u)),
            b=float(self.b(u)),
            c=float(self.c(u)),
            j=float(self.j(u)),
            k=float(self.k(u)),
            G_eta=float(self.G(u)),
            c_hat_eta=float(self.c_hat(u)),
        )

    # e, g -----------------------------------------------------------------

    def _e_rhs(self, u, e):
        forcing = (
            self._alpha_tilde * (1.0 - self.nu) * float(self.b(u))
            + self._alpha_2 * float(self.c(u))
            + (1.0 - self.nu) ** 2 * self._m2 / (1.0 - self.eps) * (float(self.j(u)) - 0.5)
        )
        return -(self.eta - 2.0 * self._iota_c) * e + forcing

    def _integrate_eg(self) -> None:
        T = self.problem.T
        n = max(2, int(math.ceil(T / self.ode_step)))
        h = T / n
        u = np.linspace(0.0, T, n + 1)
        e = np.empty(n + 1)
        g = np.empty(n + 1)
        e[0] = 0.0
        g[0] = 0.0
        two_bk = 2.0 * self._beta * self._kappa_infty
        for i in range(n):
            ui = u[i]
            ei = e[i]
            k1e = self._e_rhs(ui, ei)
            k1g = two_bk * ei
            k2e = self._e_rhs(ui + h / 2.0, ei + h / 2.0 * k1e)
            k2g = two_bk * (ei + h / 2.0 * k1e)
            k3e = self._e_rhs(ui + h / 2.0, ei + h / 2.0 * k2e)
            k3g = two_bk * (ei + h / 2.0 * k2e)
            k4e = self._e_rhs(ui + h, ei + h * k3e)
            k4g = two_bk * (ei + h * k3e)
            e[i + 1] = ei + h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
            g[i + 1] = g[i] + h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        self._u_nodes = u
        self._e_nodes = e
        self._g_nodes = g
        self._de_nodes = np.asarray([self._e_rhs(ui, ei) for ui, ei in zip(u, e)])
        self._dg_nodes = two_bk * e

    @staticmethod
    def _hermite(u, nodes, vals, slopes):
        u = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(nodes, u, side="right") - 1, 0, len(nodes) - 2)
        h = nodes[i + 1] - nodes[i]
        s = (u - nodes[i]) / h
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        out = h00 * vals[i] + h10 * h * slopes[i] + h01 * vals[i + 1] + h11 * h * slopes[i + 1]
        return out if out.ndim else float(out)

    def e(self, u):
        return self._hermite(u, self._u_nodes, self._e_nodes, self._de_nodes)

    def g(self, u):
        return self._hermite(u, self._u_nodes, self._g_nodes, self._dg_nodes)

    @property
    def eg_table(self):
        return self._u_nodes, self._e_nodes, self._g_nodes


@lru_cache(maxsize=64)
def _coefficient_set_cached(problem: ExecutionProblem, ode_step: float) -> CoefficientSet:
    return CoefficientSet(problem, ode_step)


def coefficients(u: float, problem: ExecutionProblem, ode_step: float | None = None) -> Coefficients:
    """(a, b, c, j, k, G_eta, c_hat_eta) at time-to-go u in [0, T]."""
    if not (0.0 <= u <= problem.T):
        raise ValueError("coefficients: u outside [0, T]")
    return problem.coefficient_set(ode_step).coefficients(u)


def integrate_eg(problem: ExecutionProblem, ode_step: float):
    """Tabulated (u, e, g) on [0, T] from the RK4 sweep."""
    return problem.coefficient_set(ode_step).eg_table


# eta = 0 closed forms (correctness anchor for the RK4 route) ---------------

def _I_p(p: int, u, lam: float):
    """exp(lam*u) * int_0^u s^p exp(-lam*s) ds, stable for small lam*u."""
    u = np.asarray(u, dtype=float)
    if lam == 0.0:
        return u ** (p + 1) / (p + 1)
    x = lam * u
    if np.all(np.abs(x) > 0.1):
        out = u * np.exp(x) * zeta_vec(x)  # p = 0 closed form
        for m in range(1, p + 1):
            out = (m * out - u**m) / lam
        return out
    # series: I_p = u^{p+1} e^{x} sum_n (-x)^n / (n! (n+p+1))
    acc = np.zeros_like(u)
    term = np.ones_like(u)
    for n in range(0, 30):
        acc = acc + term / (n + p + 1)
        term = term * (-x) / (n + 1)
    return u ** (p + 1) * np.exp(x) * acc


def e_crit_closed_form(problem: ExecutionProblem, u):
    """e(u) for eta = 0 via the printed closed form (test oracle)."""
    p = problem.params
    mom = problem.spec.moments
    rho, nu, eps = p.rho, p.nu, p.epsilon
    m1, m2 = problem.m1, problem.spec.marks.m2
    at, a2, ic = mom.alpha_tilde, mom.alpha_2, mom.iota_c
    u = np.asarray(u, dtype=float)
    kappa_e = m2 - m1 * (2.0 * at * rho - a2 * m1) / rho**2
    term1 = -((1.0 - nu) ** 2 / (1.0 - eps)) * kappa_e * (
        _I_p(0, u, 2.0 * ic) / 2.0 - np.exp(2.0 * ic * u) / rho * L_vec(rho, -2.0 * ic, u)
    )
    term2 = (
        nu * (1.0 - nu) * m1 / (2.0 * rho**2 * (1.0 - eps))
        * (at - a2 * m1 / rho)
        * rho**2
        * _I_p(1, u, 2.0 * ic)
    )
    term3 = -(a2 * nu**2 * m1**2 / (4.0 * rho**3 * (1.0 - eps))) * (
        rho**2 * _I_p(1, u, 2.0 * ic) + rho**3 * _I_p(2, u, 2.0 * ic) / 2.0 + rho**4 * _I_p(3, u, 2.0 * ic) / 12.0
    )
    return term1 + term2 + term3


def g_crit_closed_form(problem: ExecutionProblem, u):
    """g(u) for eta = 0 via the printed closed form; needs iota_c > 0."""
    p = problem.params
    spec = problem.spec
    mom = spec.moments
    rho, nu, eps = p.rho, p.nu, p.epsilon
    m1, m2 = problem.m1, spec.marks.m2
    at, a2, ic = mom.alpha_tilde, mom.alpha_2, mom.iota_c
    beta, kinf = spec.beta, spec.kappa_infty
    if ic <= 0.0 and beta * kinf != 0.0:
        raise ValueError("g closed form requires iota_c > 0 (confluent case not printed)")
    u = np.asarray(u, dtype=float)
    kappa_e = m2 - m1 * (2.0 * at * rho - a2 * m1) / rho**2
    if beta * kinf == 0.0:
        return np.zeros_like(u)
    brace = _I_p(1, u, 2.0 * ic) / 2.0 - (
        np.exp(2.0 * ic * u) * L_vec(rho, -2.0 * ic, u) - np.log1p(rho * u / 2.0)
    ) / (2.0 * ic * rho)
    term1 = -2.0 * beta * kinf * ((1.0 - nu) ** 2 / (1.0 - eps)) * kappa_e * brace
    term2 = (
        beta * kinf * nu * (1.0 - nu) * m1 / (2.0 * rho**3 * (1.0 - eps))
        * (at - a2 * m1 / rho)
        * rho**3
        * _I_p(2, u, 2.0 * ic)
    )
    term3 = -(beta * kinf * a2 * nu**2 * m1**2 / (4.0 * rho**4 * (1.0 - eps))) * (
        rho**3 * _I_p(2, u, 2.0 * ic) + rho**4 * _I_p(3, u, 2.0 * ic) / 3.0 + rho**5 * _I_p(4, u, 2.0 * ic) / 24.0
    )
    return term1 + term2 + term3


# value function and pointwise trades ---------------------------------------

def value_function(
    t: float,
    x,
    d: float,
    z: float,
    delta: float,
    Sigma: float,
    problem: ExecutionProblem,
    ode_step: float | None = None,
):
    """Expected remaining cost from state (x, d, z, delta, Sigma) at time t."""
    if not (0.0 <= t <= problem.T):
        raise ValueError("value_function: t outside [0, T]")
    cs = problem.coefficient_set(ode_step)
    p = problem.params
    q, rho, eps = p.q, p.rho, p.epsilon
    u = problem.T - t
    x = np.asarray(x, dtype=float)
    G = float(cs.G(u))
    chat = float(cs.c_hat(u))
    e_u = float(cs.e(u))
    g_u = float(cs.g(u))
    lever = q * d - G * delta * problem.m1 / rho
    ru = rho * u
    qC = (
        -q * (z + d) * x
        + ((1.0 - eps) / (2.0 + ru) + eps / 2.0) * x * x
        + (ru / (2.0 + ru)) * lever * x
        - (ru / 2.0 / (2.0 + ru)) * lever * lever / (1.0 - eps)
        + chat * (delta * problem.m1 / rho) ** 2
        + e_u * Sigma
        + g_u
    )
    out = qC / q
    return out if out.ndim else float(out)


def ow_schedule(x0: float, rho: float, T: float) -> TradeSchedule:
    """Block / constant-rate / block liquidation of x0 on [0, T]."""
    if not (rho > 0.0 and T > 0.0):
        raise ValueError("ow_schedule: rho and T must be > 0")
    blk = -x0 / (2.0 + rho * T)
    return TradeSchedule(
        T=T,
        initial_block=blk,
        rate_edges=np.asarray([0.0, T]),
        rate_values=np.asarray([-rho * x0 / (2.0 + rho * T)]),
        terminal_block=blk,
    )


def ow_expected_cost(x0: float, rho: float, T: float, P0: float, epsilon: float, q: float) -> float:
    return -P0 * x0 + ((1.0 - epsilon) / (2.0 + rho * T) + epsilon / 2.0) * x0 * x0 / q


def reaction_block(tau: float, dn: float, di: float, problem: ExecutionProblem) -> float:
    """Optimal block posted right after an order of signed volume dn at tau."""
    if not (0.0 < tau < problem.T):
        raise ValueError("reaction_block: tau outside (0, T)")
    p = problem.params
    rho, nu, eps = p.rho, p.nu, p.epsilon
    m1, eta = problem.m1, problem.eta
    u = problem.T - tau
    thr = problem.stability.series_threshold
    w = omega_scalar(eta * u, thr)
    lhs = ((1.0 + rho * u) / (2.0 + rho * u)) * (m1 / rho * di - (1.0 - nu) * dn)
    lhs += (m1 / (2.0 * rho)) * (nu * rho - eta) * (rho * u * u * w / (2.0 + rho * u)) * di
    return lhs / (1.0 - eps)


def optimal_initial_position(D0: float, delta0: float, problem: ExecutionProblem) -> float:
    """Position whose optimal liquidation minimizes cost against mark-to-market.

    Note the sign: a positive deviation D0 (price above fundamental, about to
    decay) favors acquiring a short position (x0 < 0) and buying it back as
    the price falls.
    """
    p = problem.params
    cs = problem.coefficient_set()
    T = problem.T
    G = float(cs.G(T))
    lever = G * delta0 * problem.m1 / p.rho - p.q * D0
    return p.rho * T * lever / (2.0 * (1.0 + p.epsilon * p.rho * T / 2.0))


# auxiliary integrals Phi ----------------------------------------------------

def phi_eta(t, problem: ExecutionProblem):
    """Integrand weight phi_eta(t) of the trend/dynamic strategy rates."""
    p = problem.params
    rho, nu = p.rho, p.nu
    beta, eta, m1 = problem.spec.beta, problem.eta, problem.m1
    thr = problem.stability.series_threshold
    u = problem.T - np.asarray(t, dtype=float)
    y = eta * u
    z = zeta_vec(y, thr)
    w = omega_vec(y, thr)
    Ku = (m1 / (2.0 * rho)) * (2.0 + rho * u * (1.0 + z + nu * rho * u * w))
    out = (1.0 + np.exp(-y) + nu * rho * u * z + 2.0 * beta * Ku / m1) / (2.0 * (2.0 + rho * u))
    return out if out.ndim else float(out)


def _Phi_ei(s, t, problem: ExecutionProblem):
    p = problem.params
    rho, nu = p.rho, p.nu
    beta, eta = problem.spec.beta, problem.eta
    alpha = beta - eta
    T = problem.T
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    term1 = 0.5 * (1.0 / rho + nu / eta) * (np.exp(-beta * s) - np.exp(-beta * t))
    coef_b = 1.0 + nu * (rho - 2.0 * beta) / eta + (beta / eta) * (1.0 - nu * rho / eta)
    coef_a = 1.0 - nu * rho / eta - (beta / eta) * (1.0 - nu * rho / eta)
    pref = math.exp(-beta * T) / (2.0 * rho)
    term2 = pref * coef_b * (L_vec(rho, beta, T - s) - L_vec(rho, beta, T - t))
    term3 = pref * coef_a * (L_vec(rho, alpha, T - s) - L_vec(rho, alpha, T - t))
    return term1 + term2 + term3


def _Phi_crit(s, t, problem: ExecutionProblem):
    """Closed form at eta = 0 exactly (alpha = beta), beta = 0 allowed."""
    p = problem.params
    rho, nu = p.rho, p.nu
    beta = problem.spec.beta
    T = problem.T
    thr = problem.stability.series_threshold
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    gap = t - s
    term1 = (beta / rho + nu / 2.0 * (0.5 - beta / rho)) * np.exp(-beta * s) * gap * zeta_vec(beta * gap, thr)
    term2 = (
        (1.0 - nu)
        * (1.0 - beta / rho)
        * math.exp(-beta * T)
        / rho
        * (L_vec(rho, beta, T - s) - L_vec(rho, beta, T - t))
    )
    term3 = nu / 4.0 * ((T - s) * np.exp(-beta * s) - (T - t) * np.exp(-beta * t))
    return term1 + term2 + term3


def _Phi_quad(s, t, problem: ExecutionProblem):
    p = problem.params
    beta = problem.spec.beta
    scale = max(beta, p.rho, 1.0 / problem.T)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s, t = np.broadcast_arrays(s, t)
    out = np.empty(s.shape)
    flat_s, flat_t, flat_o = s.ravel(), t.ravel(), out.ravel()
    for idx in range(flat_s.size):
        a, b = flat_s[idx], flat_t[idx]
        if b <= a:
            flat_o[idx] = 0.0
            continue
        panels = max(1, int(math.ceil((b - a) * scale / 2.0)))
        flat_o[idx] = gauss_legendre_panels(
            lambda u: phi_eta(u, problem) * np.exp(-beta * u), a, b, panels
        )
    return out


def Phi(s, t, problem: ExecutionProblem):
    """Phi(s, t) = int_s^t phi_eta(u) exp(-beta u) du, branch-stable in eta."""
    scalar_in = np.asarray(s).ndim == 0 and np.asarray(t).ndim == 0
    eta = problem.eta
    if eta == 0.0:
        out = _Phi_crit(s, t, problem)
    elif abs(eta) * problem.T < PHI_ETA_SMALL:
        out = _Phi_quad(s, t, problem)
    else:
        out = _Phi_ei(s, t, problem)
    out = np.asarray(out)
    if scalar_in:
        return float(out.reshape(-1)[0])
    return out.reshape(np.broadcast_shapes(np.shape(s), np.shape(t)))


def int_phi_delta(path: EventPath, t: float, problem: ExecutionProblem) -> float:
    """int_0^t phi_eta(u) delta_u du via the piecewise-exponential telescoping."""
    if not (0.0 <= t <= problem.T):
        raise ValueError("int_phi_delta: t outside [0, T]")
    delta0 = path.delta0
    total = delta0 * float(Phi(0.0, t, problem))
    chi = path.chi(t)
    if chi == 0:
        return total
    theta = path.theta
    tau = path.tau
    total += theta[chi - 1] * float(Phi(tau[chi - 1], t, problem))
    if chi >= 2:
        pair_phi = Phi(tau[: chi - 1], tau[1:chi], problem)
        total += float(np.dot(theta[: chi - 1], np.asarray(pair_phi)))
    return total


# execution ------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Post-operation samples of the executed strategy at the breakpoints."""

    t: np.ndarray
    X: np.ndarray
    D: np.ndarray
    delta: np.ndarray
    N: np.ndarray
    dX_block: np.ndarray
    rate: np.ndarray


@dataclass(frozen=True)
class ExecutionResult:
    schedule: TradeSchedule
    trajectory: Trajectory
    cost: float
    mode: str


TRAJECTORY_CSV_HEADER = ["t", "X", "dX_block", "rate", "D", "P", "N", "delta"]


def write_trajectory_csv(result: ExecutionResult, problem: ExecutionProblem, fileobj) -> None:
    tr = result.trajectory
    writer = csv.writer(fileobj)
    writer.writerow(TRAJECTORY_CSV_HEADER)
    for i in range(len(tr.t)):
        # S moves only with permanent impact; reconstruct it from N and X
        S = problem.S0 + problem.params.nu * tr.N[i] / problem.params.q
        S += problem.params.epsilon * (tr.X[i] - problem.x0) / problem.params.q
        writer.writerow(
            [
                repr(float(tr.t[i])),
                repr(float(tr.X[i])),
                repr(float(tr.dX_block[i])),
                repr(float(tr.rate[i])),
                repr(float(tr.D[i])),
                repr(float(S + tr.D[i])),
                repr(float(tr.N[i])),
                repr(float(tr.delta[i])),
            ]
        )


def _merged_breakpoints(path: EventPath, T: float, grid_step: float):
    n = max(2, int(round(T / grid_step)))
    grid = np.linspace(0.0, T, n + 1)
    bp = np.union1d(grid, path.tau)
    ev_idx = np.full(len(bp), -1, dtype=np.int64)
    pos = np.searchsorted(bp, path.tau)
    ev_idx[pos] = np.arange(len(path.tau))
    return bp, ev_idx


def _blocks_at_breakpoints(bp, blk_tau, blk_dx, initial_block, terminal_block):
    out = np.zeros(len(bp))
    out[0] = initial_block
    out[-1] += terminal_block
    if len(blk_tau):
        pos = np.searchsorted(bp, blk_tau)
        out[pos] += blk_dx
    return out


def execute_optimal(
    path: EventPath,
    problem: ExecutionProblem,
    mode: str = "feedback",
    grid_step: float | None = None,
    kernels=None,
) -> ExecutionResult:
    """Run the optimal strategy against one event path.

    feedback re-solves the affine identity along the replayed state; explicit
    evaluates the closed trajectory formulas.  Both return the schedule, the
    realized trajectory at the merged grid/event breakpoints, and the
    realized cost of replaying the schedule through the market dynamics.
    """
    if mode not in ("feedback", "explicit"):
        raise ValueError("mode must be 'feedback' or 'explicit'")
    step = problem.T / 2000.0 if grid_step is None else float(grid_step)
    if not (step > 0.0):
        raise ValueError("grid_step must be > 0")
    bp, ev_idx = _merged_breakpoints(path, problem.T, step)
    p = problem.params
    if mode == "feedback":
        impl = kernels if kernels is not None else backend
        b0, blk_tau, blk_dx, rates, terminal, Xs, Ws, ds = impl.feedback_schedule(
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
        D_traj = Ws / p.q
        delta_traj = ds
    else:
        b0, blk_tau, blk_dx, rates, terminal, Xs, Ws, ds = _explicit_schedule(path, problem, bp, ev_idx)
        D_traj = Ws / p.q
        delta_traj = ds

    schedule = TradeSchedule(
        T=problem.T,
        initial_block=b0,
        block_times=blk_tau,
        block_sizes=blk_dx,
        rate_edges=bp,
        rate_values=rates,
        terminal_block=terminal,
    )
    cost = realized_cost(path, schedule, problem.initial_market_state(), p, kernels=kernels)
    chi = np.searchsorted(path.tau, bp, side="right")
    cum_dn = np.concatenate([[0.0], np.cumsum(path.dN)])
    blocks_at = _blocks_at_breakpoints(bp, blk_tau, blk_dx, b0, terminal)
    trajectory = Trajectory(
        t=bp,
        X=Xs,
        D=D_traj,
        delta=delta_traj,
        N=cum_dn[chi],
        dX_block=blocks_at,
        rate=np.concatenate([rates, [0.0]]),
    )
    return ExecutionResult(schedule=schedule, trajectory=trajectory, cost=cost, mode=mode)


def _explicit_states(path: EventPath, problem: ExecutionProblem, times, include_at):
    """Closed-form (X, W, delta) at given times.

    include_at: bool array; True counts an event landing exactly at the
    sample time (post-jump value), False takes the left limit.
    """
    p = problem.params
    cs = problem.coefficient_set()
    rho, nu, eps = p.rho, p.nu, p.epsilon
    m1 = problem.m1
    beta = problem.spec.beta
    T = problem.T
    x0 = problem.x0
    W0 = p.q * problem.D0
    delta0 = problem.delta0
    times = np.asarray(times, dtype=float)
    include_at = np.asarray(include_at, dtype=bool)

    tau = path.tau
    theta = path.theta
    n = len(tau)
    kT = float(cs.k(T))
    base = (W0 - (1.0 - eps) * x0) / (2.0 + rho * T) + delta0 * kT

    # prefix sums over events
    k_at_tau = np.asarray(cs.k(T - tau)) if n else np.empty(0)
    jump_terms = (1.0 - nu) * path.dN / (2.0 + rho * (T - tau)) + k_at_tau * path.delta_I if n else np.empty(0)
    jump_prefix = np.concatenate([[0.0], np.cumsum(jump_terms)])
    if n >= 2:
        pair_phi = np.asarray(Phi(tau[:-1], tau[1:], problem))
        theta_phi_prefix = np.concatenate([[0.0], np.cumsum(theta[:-1] * pair_phi)])
    else:
        theta_phi_prefix = np.zeros(max(n, 1))

    chi = np.where(
        include_at,
        np.searchsorted(tau, times, side="right"),
        np.searchsorted(tau, times, side="left"),
    )
    phi_0t = np.asarray(Phi(np.zeros_like(times), times, problem))
    W = base + delta0 * (-m1) * phi_0t + jump_prefix[chi]
    has = chi >= 1
    if np.any(has):
        idx = chi[has] - 1
        tail = np.asarray(Phi(tau[idx], times[has], problem))
        W[has] -= m1 * (theta[idx] * tail + theta_phi_prefix[idx])
    theta_chi = np.where(has, theta[np.maximum(chi - 1, 0)] if n else 0.0, 0.0)
    delta_t = np.exp(-beta * times) * (delta0 + theta_chi)
    u = T - times
    Ku = np.asarray(cs.K(u))
    X = (Ku * delta_t - (1.0 + rho * u) * W) / (1.0 - eps)
    return X, W, delta_t


def _explicit_schedule(path: EventPath, problem: ExecutionProblem, bp, ev_idx):
    """Schedule and trajectory from the closed-form optimal strategy."""
    p = problem.params
    eps = p.epsilon
    x0 = problem.x0
    T = problem.T

    X_post, W_post, d_post = _explicit_states(path, problem, bp, np.ones(len(bp), dtype=bool))
    X_pre, _, _ = _explicit_states(path, problem, bp, np.zeros(len(bp), dtype=bool))

    b0 = X_post[0] - x0
    is_event = ev_idx >= 0
    interior_event = is_event & (bp < T)
    blk_tau = bp[interior_event]
    blk_dx = X_post[interior_event] - X_pre[interior_event]
    # an event exactly at T jumps W and delta but triggers no reaction block,
    # so the position at T is the left limit
    X_traj = X_post.copy()
    X_traj[-1] = X_pre[-1]
    rates = (X_pre[1:] - X_traj[:-1]) / np.diff(bp)
    terminal = -X_traj[-1]
    return b0, blk_tau, blk_dx, rates, terminal, X_traj, W_post, d_post


def explicit_components(path: EventPath, problem: ExecutionProblem, times):
    """Split the explicit trajectory into base/trend/dynamic parts by linearity.

    The strategy is affine in (x0, D0, delta0, events): the base part is the
    x0-only run, the trend part the (D0, delta0)-only run on an empty path,
    and the dynamic part the remainder.
    """
    import dataclasses

    times = np.asarray(times, dtype=float)
    include = np.ones(len(times), dtype=bool)
    empty = EventPath(
        T=problem.T,
        beta=problem.spec.beta,
        kappa_infty=problem.spec.kappa_infty,
        kappa0_plus=problem.spec.kappa0_plus,
        kappa0_minus=problem.spec.kappa0_minus,
        tau=np.empty(0),
        side=np.empty(0, dtype=np.int32),
        volume=np.empty(0),
        delta_I=np.empty(0),
        delta_Ibar=np.empty(0),
    )
    spec_flat = dataclasses.replace(problem.spec, kappa0_plus=problem.spec.kappa0_minus)
    prob_ow = dataclasses.replace(problem, D0=0.0, spec=spec_flat)
    prob_trend = dataclasses.replace(problem, x0=0.0)
    X_full, _, _ = _explicit_states(path, problem, times, include)
    X_ow, _, _ = _explicit_states(empty, prob_ow, times, include)
    X_trend, _, _ = _explicit_states(empty, prob_trend, times, include)
    X_dyn = X_full - X_ow - X_trend
    return {"ow": X_ow, "trend": X_trend, "dyn": X_dyn, "total": X_full}
