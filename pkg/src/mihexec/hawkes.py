"""Two-sided marked point-process order flow: spec, moments, exact simulation.

The buy/sell intensities share a baseline, decay exponentially at rate beta,
and jump by phi_s (own side) / phi_c (opposite side) evaluated at the
normalized order volume.  Everything downstream only needs the derived
sequences: event times, signed volumes, and the intensity-jump marks
delta_I / delta_Ibar.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import backend

_MARK_KINDS = {"dirac": 0, "exponential": 1, "empirical": 2}


@dataclass(frozen=True)
class MarkLaw:
    """Order-volume law with closed-form normalized moments.

    Three kinds keep every moment computable without quadrature: a point
    mass, an exponential law with the same mean, or a finite atom list.
    """

    kind: str
    m1: float
    volumes: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _MARK_KINDS:
            raise ValueError(f"unknown mark law kind {self.kind!r}")
        if self.m1 < 0.0 or not math.isfinite(self.m1):
            raise ValueError("m1 must be finite and >= 0")
        if self.kind == "empirical":
            if len(self.volumes) == 0 or len(self.volumes) != len(self.weights):
                raise ValueError("empirical law needs matching volumes/weights")
            if any(v < 0.0 for v in self.volumes):
                raise ValueError("empirical volumes must be >= 0")
            if any(w < 0.0 for w in self.weights):
                raise ValueError("empirical weights must be >= 0")
            if abs(sum(self.weights) - 1.0) > 1e-12:
                raise ValueError("empirical weights must sum to 1")

    @classmethod
    def dirac(cls, m1: float) -> "MarkLaw":
        return cls("dirac", float(m1))

    @classmethod
    def exponential(cls, m1: float) -> "MarkLaw":
        return cls("exponential", float(m1))

    @classmethod
    def empirical(cls, volumes, weights) -> "MarkLaw":
        vols = tuple(float(v) for v in volumes)
        w = tuple(float(x) for x in weights)
        m1 = sum(v * x for v, x in zip(vols, w))
        return cls("empirical", m1, vols, w)

    @property
    def m2(self) -> float:
        if self.kind == "dirac":
            return self.m1 * self.m1
        if self.kind == "exponential":
            return 2.0 * self.m1 * self.m1
        return sum(w * v * v for v, w in zip(self.volumes, self.weights))

    def normalized_moment(self, p: float) -> float:
        """E[(V/m1)^p]; for the degenerate m1 = 0 law the convention is 0^p."""
        if p < 0.0:
            raise ValueError("normalized_moment: p must be >= 0")
        if self.m1 == 0.0:
            return 1.0 if p == 0.0 else 0.0
        if self.kind == "dirac":
            return 1.0
        if self.kind == "exponential":
            return math.gamma(1.0 + p)
        return sum(w * (v / self.m1) ** p for v, w in zip(self.volumes, self.weights))

    def support_points(self, n: int = 64) -> np.ndarray:
        """Deterministic sample of the normalized support (for linearity checks)."""
        if self.m1 == 0.0:
            return np.array([0.0])
        if self.kind == "dirac":
            return np.array([1.0])
        if self.kind == "exponential":
            p = (np.arange(n) + 0.5) / n
            return -np.log1p(-p)
        return np.asarray([v / self.m1 for v in self.volumes])

    def kernel_args(self):
        """(kind code, m1, atom volumes, cumulative weights) for the simulators."""
        if self.kind == "empirical":
            cum = np.cumsum(np.asarray(self.weights, dtype=np.float64))
            cum[-1] = 1.0
            return _MARK_KINDS[self.kind], self.m1, np.asarray(self.volumes, dtype=np.float64), cum
        empty = np.empty(0, dtype=np.float64)
        return _MARK_KINDS[self.kind], self.m1, empty, empty


@dataclass(frozen=True)
class PowerSum:
    """Finite sum of nonnegative power terms sum_k a_k * y**p_k on y >= 0."""

    terms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        for coef, power in self.terms:
            if coef < 0.0 or power < 0.0:
                raise ValueError("power-sum terms need coef >= 0 and power >= 0")

    @classmethod
    def of(cls, *terms) -> "PowerSum":
        return cls(tuple((float(c), float(p)) for c, p in terms))

    @classmethod
    def zero(cls) -> "PowerSum":
        return cls(())

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        acc = np.zeros_like(y)
        for coef, power in self.terms:
            acc = acc + coef * y**power
        return float(acc) if acc.ndim == 0 else acc

    def kernel_args(self):
        coefs = np.asarray([c for c, _ in self.terms], dtype=np.float64)
        pows = np.asarray([p for _, p in self.terms], dtype=np.float64)
        return coefs, pows


class ExcitationMoments(NamedTuple):
    iota_s: float
    iota_c: float
    alpha: float
    alpha_tilde: float
    alpha_2: float


@dataclass(frozen=True)
class ExcitationPair:
    """Self/cross excitation responses to a normalized order volume."""

    phi_s: PowerSum
    phi_c: PowerSum

    def difference_terms(self) -> tuple[tuple[float, float], ...]:
        """(coef, power) terms of phi_s - phi_c, merged by power."""
        merged: dict[float, float] = {}
        for coef, power in self.phi_s.terms:
            merged[power] = merged.get(power, 0.0) + coef
        for coef, power in self.phi_c.terms:
            merged[power] = merged.get(power, 0.0) - coef
        return tuple(sorted((p, c) for p, c in merged.items()))

    def phi_diff(self, y):
        y = np.asarray(y, dtype=float)
        acc = np.zeros_like(y)
        for power, coef in self.difference_terms():
            acc = acc + coef * y**power
        return float(acc) if acc.ndim == 0 else acc


def _checked_moment(marks: MarkLaw, p: float, origin: str) -> float:
    val = marks.normalized_moment(p)
    if not math.isfinite(val):
        raise ValueError(f"divergent moment E[Y^{p}] from term {origin}")
    return val


def _checked_term(coef: float, moment: float, origin: str) -> float:
    val = coef * moment
    if not math.isfinite(val):
        raise ValueError(f"divergent moment contribution from term {origin}")
    return val


def excitation_moments(excitation: ExcitationPair, marks: MarkLaw) -> ExcitationMoments:
    """Closed-form (iota_s, iota_c, alpha, alpha_tilde, alpha_2).

    Powers integrate against the normalized mark via gamma-function moments
    (exponential law), point evaluation (dirac), or weighted sums
    (empirical); E[phi^2] finiteness is checked term by term.
    """
    iota_s = 0.0
    for coef, power in excitation.phi_s.terms:
        origin = f"phi_s: {coef}*y^{power}"
        iota_s += _checked_term(coef, _checked_moment(marks, power, origin), origin)
    iota_c = 0.0
    for coef, power in excitation.phi_c.terms:
        origin = f"phi_c: {coef}*y^{power}"
        iota_c += _checked_term(coef, _checked_moment(marks, power, origin), origin)
    diff = excitation.difference_terms()
    alpha = 0.0
    alpha_tilde = 0.0
    for power, coef in diff:
        origin = f"phi_s-phi_c: y^{power}"
        alpha += _checked_term(coef, _checked_moment(marks, power, origin), origin)
        origin_t = f"V*(phi_s-phi_c): y^{power + 1.0}"
        alpha_tilde += _checked_term(coef, _checked_moment(marks, power + 1.0, origin_t), origin_t)
    alpha_tilde *= marks.m1
    alpha_2 = 0.0
    for p1, c1 in diff:
        for p2, c2 in diff:
            origin = f"(phi_s-phi_c)^2: y^{p1 + p2}"
            alpha_2 += _checked_term(c1 * c2, _checked_moment(marks, p1 + p2, origin), origin)
    # square-integrability of each response (guards the second-moment assumption)
    for name, ps in (("phi_s", excitation.phi_s), ("phi_c", excitation.phi_c)):
        for coef, power in ps.terms:
            _checked_moment(marks, 2.0 * power, f"{name}^2: y^{2.0 * power}")
    return ExcitationMoments(iota_s, iota_c, alpha, alpha_tilde, alpha_2)


@dataclass(frozen=True)
class HawkesSpec:
    """Full parameterization of the two-sided flow."""

    beta: float
    kappa_infty: float
    kappa0_plus: float
    kappa0_minus: float
    marks: MarkLaw
    excitation: ExcitationPair

    def __post_init__(self) -> None:
        for name in ("beta", "kappa_infty", "kappa0_plus", "kappa0_minus"):
            v = getattr(self, name)
            if v < 0.0 or not math.isfinite(v):
                raise ValueError(f"{name} must be finite and >= 0")
        object.__setattr__(self, "_moments", excitation_moments(self.excitation, self.marks))

    @property
    def moments(self) -> ExcitationMoments:
        return self._moments  # type: ignore[attr-defined]

    @property
    def alpha(self) -> float:
        return self.moments.alpha

    @property
    def eta(self) -> float:
        return self.beta - self.moments.alpha

    @property
    def is_stationary(self) -> bool:
        return self.moments.iota_s + self.moments.iota_c < self.beta

    @property
    def delta0(self) -> float:
        return self.kappa0_plus - self.kappa0_minus

    @property
    def Sigma0(self) -> float:
        return self.kappa0_plus + self.kappa0_minus


def stationarity(spec: HawkesSpec) -> tuple[bool, float | None]:
    """Stability flag and, when stable, the fixed point of d E[Sigma]/dt."""
    mom = spec.moments
    stable = mom.iota_s + mom.iota_c < spec.beta
    if not stable:
        return False, None
    return True, 2.0 * spec.beta * spec.kappa_infty / (spec.beta - mom.iota_s - mom.iota_c)


class StateSnapshot(NamedTuple):
    kappa_plus: float
    kappa_minus: float
    delta: float
    Sigma: float
    chi: int
    theta_chi: float


EVENT_CSV_HEADER = ["tau", "side", "volume", "delta_I", "delta_Ibar"]


@dataclass(frozen=True)
class EventPath:
    """Time-ordered record of one simulated flow, plus decay metadata."""

    T: float
    beta: float
    kappa_infty: float
    kappa0_plus: float
    kappa0_minus: float
    tau: np.ndarray
    side: np.ndarray
    volume: np.ndarray
    delta_I: np.ndarray
    delta_Ibar: np.ndarray
    kappa_plus_after: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    kappa_minus_after: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = len(self.tau)
        if n and not (np.all(np.diff(self.tau) > 0.0) and self.tau[0] > 0.0 and self.tau[-1] <= self.T):
            raise ValueError("event times must be strictly increasing in (0, T]")
        if self.kappa_plus_after is None:
            kp, km = self._reconstruct_intensities()
            object.__setattr__(self, "kappa_plus_after", kp)
            object.__setattr__(self, "kappa_minus_after", km)

    def _reconstruct_intensities(self) -> tuple[np.ndarray, np.ndarray]:
        # kappa+ always jumps by (dIbar + dI)/2 and kappa- by (dIbar - dI)/2,
        # regardless of the event side.
        n = len(self.tau)
        kp = np.empty(n)
        km = np.empty(n)
        cp, cm = self.kappa0_plus, self.kappa0_minus
        prev = 0.0
        for i in range(n):
            decay = math.exp(-self.beta * (self.tau[i] - prev))
            cp = self.kappa_infty + (cp - self.kappa_infty) * decay
            cm = self.kappa_infty + (cm - self.kappa_infty) * decay
            cp += 0.5 * (self.delta_Ibar[i] + self.delta_I[i])
            cm += 0.5 * (self.delta_Ibar[i] - self.delta_I[i])
            kp[i] = cp
            km[i] = cm
            prev = self.tau[i]
        return kp, km

    @property
    def n_events(self) -> int:
        return len(self.tau)

    @property
    def dN(self) -> np.ndarray:
        return self.side * self.volume

    @property
    def theta(self) -> np.ndarray:
        """Theta_i = sum_{l<=i} exp(beta tau_l) dI_l (1-indexed in the math)."""
        return np.cumsum(np.exp(self.beta * self.tau) * self.delta_I)

    def chi(self, t: float) -> int:
        """Number of events in (0, t] (right-continuous convention)."""
        return int(np.searchsorted(self.tau, t, side="right"))

    def state_at(self, t: float) -> StateSnapshot:
        if not (0.0 <= t <= self.T):
            raise ValueError("state_at: t outside [0, T]")
        chi = self.chi(t)
        if chi == 0:
            ref_t, kp, km = 0.0, self.kappa0_plus, self.kappa0_minus
        else:
            ref_t = self.tau[chi - 1]
            kp = self.kappa_plus_after[chi - 1]
            km = self.kappa_minus_after[chi - 1]
        decay = math.exp(-self.beta * (t - ref_t))
        kp = self.kappa_infty + (kp - self.kappa_infty) * decay
        km = self.kappa_infty + (km - self.kappa_infty) * decay
        theta_chi = float(self.theta[chi - 1]) if chi else 0.0
        return StateSnapshot(kp, km, kp - km, kp + km, chi, theta_chi)

    def delta_at(self, t: float) -> float:
        chi = self.chi(t)
        theta_chi = float(self.theta[chi - 1]) if chi else 0.0
        return math.exp(-self.beta * t) * (self.delta0 + theta_chi)

    @property
    def delta0(self) -> float:
        return self.kappa0_plus - self.kappa0_minus

    def to_csv(self, fileobj) -> None:
        writer = csv.writer(fileobj)
        writer.writerow(EVENT_CSV_HEADER)
        for i in range(self.n_events):
            writer.writerow(
                [
                    repr(float(self.tau[i])),
                    int(self.side[i]),
                    repr(float(self.volume[i])),
                    repr(float(self.delta_I[i])),
                    repr(float(self.delta_Ibar[i])),
                ]
            )

    @classmethod
    def from_csv(cls, fileobj, T: float, spec: HawkesSpec) -> "EventPath":
        reader = csv.reader(fileobj)
        header = next(reader)
        if header != EVENT_CSV_HEADER:
            raise ValueError(f"unexpected event CSV header: {header}")
        rows = [row for row in reader if row]
        tau = np.asarray([float(r[0]) for r in rows])
        side = np.asarray([int(r[1]) for r in rows], dtype=np.int32)
        vol = np.asarray([float(r[2]) for r in rows])
        di = np.asarray([float(r[3]) for r in rows])
        dibar = np.asarray([float(r[4]) for r in rows])
        return cls(
            T=T,
            beta=spec.beta,
            kappa_infty=spec.kappa_infty,
            kappa0_plus=spec.kappa0_plus,
            kappa0_minus=spec.kappa0_minus,
            tau=tau,
            side=side,
            volume=vol,
            delta_I=di,
            delta_Ibar=dibar,
        )


def state_at(path: EventPath, t: float) -> StateSnapshot:
    """Markov state (kappa+, kappa-, delta, Sigma, chi, Theta_chi) at time t."""
    return path.state_at(t)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def simulate(
    spec: HawkesSpec,
    T: float,
    seed,
    max_events: int = 10_000_000,
    kernels=None,
) -> EventPath:
    """Exact thinning simulation of the flow on (0, T]; deterministic in seed."""
    if not (T > 0.0):
        raise ValueError("simulate: T must be > 0")
    gen = _as_generator(seed)
    kind, m1, emp_vols, emp_cumw = spec.marks.kernel_args()
    s_coefs, s_pows = spec.excitation.phi_s.kernel_args()
    c_coefs, c_pows = spec.excitation.phi_c.kernel_args()
    impl = kernels if kernels is not None else backend
    tau, side, vol, di, dibar, kp, km = impl.simulate_events(
        spec.beta,
        spec.kappa_infty,
        spec.kappa0_plus,
        spec.kappa0_minus,
        T,
        kind,
        m1,
        emp_vols,
        emp_cumw,
        s_coefs,
        s_pows,
        c_coefs,
        c_pows,
        gen,
        max_events,
    )
    return EventPath(
        T=T,
        beta=spec.beta,
        kappa_infty=spec.kappa_infty,
        kappa0_plus=spec.kappa0_plus,
        kappa0_minus=spec.kappa0_minus,
        tau=tau,
        side=side,
        volume=vol,
        delta_I=di,
        delta_Ibar=dibar,
        kappa_plus_after=kp,
        kappa_minus_after=km,
    )
