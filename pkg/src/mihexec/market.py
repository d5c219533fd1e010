"""Impacted price state (S, D, P) and realized cost of a trade schedule.

The fundamental price S absorbs the permanent fraction of every order; the
deviation D absorbs the transient fraction and decays at the resilience
rate.  Replays interleave market orders (at tau) and strategy blocks (at
tau+) and accumulate the block-shaped-book cost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .hawkes import EventPath
from .special import DEFAULT_STABILITY, omega_scalar, zeta_scalar


@dataclass(frozen=True)
class ImpactParams:
    """Depth, resilience and the permanent-impact fractions.

    epsilon = 1 is excluded (the strategy layer divides by 1 - epsilon) and
    rho = 0 is excluded (the schedule formulas divide by rho).
    """

    q: float
    rho: float
    nu: float
    epsilon: float

    def __post_init__(self) -> None:
        if not (self.q > 0.0):
            raise ValueError("q must be > 0")
        if not (self.rho > 0.0):
            raise ValueError("rho must be > 0")
        if not (0.0 <= self.nu <= 1.0):
            raise ValueError("nu must be in [0, 1]")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must be in [0, 1)")


@dataclass(frozen=True)
class MarketState:
    t: float
    S: float
    D: float
    X: float
    realized_cost: float = 0.0

    @property
    def P(self) -> float:
        return self.S + self.D


def apply_market_order(state: MarketState, tau: float, dn: float, params: ImpactParams) -> MarketState:
    """Decay D over the gap, then jump S by nu*dn/q and D by (1-nu)*dn/q."""
    if tau < state.t:
        raise ValueError("apply_market_order: event time before current state time")
    D = state.D * math.exp(-params.rho * (tau - state.t))
    return replace(
        state,
        t=tau,
        S=state.S + params.nu * dn / params.q,
        D=D + (1.0 - params.nu) * dn / params.q,
    )


def apply_block(state: MarketState, dx: float, params: ImpactParams) -> tuple[MarketState, float]:
    """Instantaneous trade: cost P*dx + dx^2/(2q), then the impact jumps."""
    P = state.S + state.D
    cost = P * dx + dx * dx / (2.0 * params.q)
    new = replace(
        state,
        S=state.S + params.epsilon * dx / params.q,
        D=state.D + (1.0 - params.epsilon) * dx / params.q,
        X=state.X + dx,
        realized_cost=state.realized_cost + cost,
    )
    return new, cost


def evolve(state: MarketState, h: float, rate: float, params: ImpactParams) -> MarketState:
    """Exact constant-rate update over a step of length h, cost included."""
    if h < 0.0:
        raise ValueError("evolve: h must be >= 0")
    if h == 0.0:
        return state
    q, rho, eps = params.q, params.rho, params.epsilon
    thr = DEFAULT_STABILITY.series_threshold
    zr = zeta_scalar(rho * h, thr)
    wr = omega_scalar(rho * h, thr)
    inc = rate * (
        state.S * h + eps * rate * h * h / (2.0 * q) + state.D * h * zr + (1.0 - eps) * (rate / q) * h * h * wr
    )
    return replace(
        state,
        t=state.t + h,
        S=state.S + eps * rate * h / q,
        D=state.D * math.exp(-rho * h) + (1.0 - eps) * rate * h * zr / q,
        X=state.X + rate * h,
        realized_cost=state.realized_cost + inc,
    )


@dataclass(frozen=True)
class TradeSchedule:
    """Initial block, event-triggered blocks, piecewise-constant rate, terminal block.

    Blocks execute at tau+ (after any market order sharing the timestamp);
    block_times must lie strictly inside (0, T).  rate_edges spans [0, T]
    with one value per segment; both may be empty for block-only schedules.
    """

    T: float
    initial_block: float = 0.0
    block_times: np.ndarray = None  # type: ignore[assignment]
    block_sizes: np.ndarray = None  # type: ignore[assignment]
    rate_edges: np.ndarray = None  # type: ignore[assignment]
    rate_values: np.ndarray = None  # type: ignore[assignment]
    terminal_block: float = 0.0

    def __post_init__(self) -> None:
        def setdefault(name, value):
            object.__setattr__(self, name, np.asarray(value, dtype=np.float64))

        setdefault("block_times", self.block_times if self.block_times is not None else [])
        setdefault("block_sizes", self.block_sizes if self.block_sizes is not None else [])
        setdefault("rate_edges", self.rate_edges if self.rate_edges is not None else [])
        setdefault("rate_values", self.rate_values if self.rate_values is not None else [])
        if len(self.block_times) != len(self.block_sizes):
            raise ValueError("block_times and block_sizes must have equal length")
        if len(self.block_times) and not (
            np.all(np.diff(self.block_times) >= 0.0)
            and self.block_times[0] > 0.0
            and self.block_times[-1] < self.T
        ):
            raise ValueError("block times must be sorted and strictly inside (0, T)")
        ne = len(self.rate_edges)
        if ne:
            if ne != len(self.rate_values) + 1:
                raise ValueError("rate_edges must have len(rate_values) + 1 entries")
            if self.rate_edges[0] != 0.0 or self.rate_edges[-1] != self.T:
                raise ValueError("rate_edges must span [0, T]")
            if not np.all(np.diff(self.rate_edges) > 0.0):
                raise ValueError("rate_edges must be strictly increasing")
        elif len(self.rate_values):
            raise ValueError("rate_values given without rate_edges")

    def total_traded(self) -> float:
        total = self.initial_block + float(np.sum(self.block_sizes)) + self.terminal_block
        if len(self.rate_values):
            total += float(np.dot(self.rate_values, np.diff(self.rate_edges)))
        return total

    def rate_at(self, t: float) -> float:
        """Rate on the segment containing t (right-open convention)."""
        if not len(self.rate_values):
            return 0.0
        i = int(np.searchsorted(self.rate_edges, t, side="right")) - 1
        i = min(max(i, 0), len(self.rate_values) - 1)
        return float(self.rate_values[i])

    def scaled(self, factor: float) -> "TradeSchedule":
        return TradeSchedule(
            T=self.T,
            initial_block=factor * self.initial_block,
            block_times=self.block_times.copy(),
            block_sizes=factor * self.block_sizes,
            rate_edges=self.rate_edges.copy(),
            rate_values=factor * self.rate_values,
            terminal_block=factor * self.terminal_block,
        )

    def merged_with(self, other: "TradeSchedule") -> "TradeSchedule":
        """Superpose two schedules on the same horizon (blocks concatenated, rates added)."""
        if other.T != self.T:
            raise ValueError("cannot merge schedules with different horizons")
        times = np.concatenate([self.block_times, other.block_times])
        sizes = np.concatenate([self.block_sizes, other.block_sizes])
        order = np.argsort(times, kind="stable")
        times, sizes = times[order], sizes[order]
        if not len(self.rate_values):
            edges, values = other.rate_edges.copy(), other.rate_values.copy()
        elif not len(other.rate_values):
            edges, values = self.rate_edges.copy(), self.rate_values.copy()
        else:
            edges = np.union1d(self.rate_edges, other.rate_edges)
            mids = 0.5 * (edges[:-1] + edges[1:])
            values = np.asarray([self.rate_at(m) + other.rate_at(m) for m in mids])
        return TradeSchedule(
            T=self.T,
            initial_block=self.initial_block + other.initial_block,
            block_times=times,
            block_sizes=sizes,
            rate_edges=edges,
            rate_values=values,
            terminal_block=self.terminal_block + other.terminal_block,
        )


TRACE_CSV_HEADER = ["t", "event_kind", "dN", "dX", "S", "D", "P", "X", "cost_increment"]
_TRACE_KINDS = {0: "market", 1: "block", 2: "rate", 3: "terminal"}


def realized_cost(
    path: EventPath,
    schedule: TradeSchedule,
    init: MarketState,
    params: ImpactParams,
    want_trace: bool = False,
    kernels=None,
):
    """Replay the full interleaving and return the realized cost.

    Raises if the schedule does not liquidate the initial position.  With
    want_trace=True returns (cost, trace-array-tuple) instead.
    """
    total = init.X + schedule.total_traded()
    scale = max(1.0, abs(init.X), abs(schedule.initial_block), abs(schedule.terminal_block))
    if abs(total) > 1e-9 * scale:
        raise ValueError(f"schedule does not liquidate: residual position {total}")
    impl = kernels if kernels is not None else backend
    cost, S, D, X, trace = impl.replay_schedule(
        path.tau,
        path.dN,
        schedule.T,
        init.S,
        init.D,
        init.X,
        params.q,
        params.rho,
        params.nu,
        params.epsilon,
        schedule.initial_block,
        schedule.block_times,
        schedule.block_sizes,
        schedule.rate_edges,
        schedule.rate_values,
        schedule.terminal_block,
        DEFAULT_STABILITY.series_threshold,
        want_trace,
    )
    if want_trace:
        return cost, trace
    return cost


def write_trace_csv(trace, fileobj) -> None:
    t, kind, dn, dx, S, D, P, X, inc = trace
    writer = csv.writer(fileobj)
    writer.writerow(TRACE_CSV_HEADER)
    for i in range(len(t)):
        writer.writerow(
            [
                repr(float(t[i])),
                _TRACE_KINDS[int(kind[i])],
                repr(float(dn[i])),
                repr(float(dx[i])),
                repr(float(S[i])),
                repr(float(D[i])),
                repr(float(P[i])),
                repr(float(X[i])),
                repr(float(inc[i])),
            ]
        )
