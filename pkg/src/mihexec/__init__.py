"""Event-driven simulator and closed-form execution engine for a mutually
exciting order-flow price model."""

from .backend import BACKEND_NAME, HAVE_COMPILED, available_backends
from .hawkes import (
    EventPath,
    ExcitationPair,
    HawkesSpec,
    MarkLaw,
    PowerSum,
    excitation_moments,
    simulate,
    stationarity,
)
from .market import ImpactParams, MarketState, TradeSchedule, apply_block, apply_market_order, evolve, realized_cost
from .montecarlo import Estimate, estimate_cost, martingale_diagnostic, perturbation_test
from .pms import (
    MihmReport,
    expected_price,
    mihm_diagnosis,
    poisson_arbitrage_expected_cost,
    poisson_arbitrage_schedule,
    poisson_optimal_cost,
    wpms_check,
)
from .special import StabilityConfig, L, expint, zeta_family
from .strategy import (
    CoefficientSet,
    ExecutionProblem,
    coefficients,
    execute_optimal,
    int_phi_delta,
    integrate_eg,
    optimal_initial_position,
    ow_expected_cost,
    ow_schedule,
    reaction_block,
    value_function,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "HAVE_COMPILED",
    "available_backends",
    "EventPath",
    "ExcitationPair",
    "HawkesSpec",
    "MarkLaw",
    "PowerSum",
    "excitation_moments",
    "simulate",
    "stationarity",
    "ImpactParams",
    "MarketState",
    "TradeSchedule",
    "apply_block",
    "apply_market_order",
    "evolve",
    "realized_cost",
    "Estimate",
    "estimate_cost",
    "martingale_diagnostic",
    "perturbation_test",
    "MihmReport",
    "expected_price",
    "mihm_diagnosis",
    "poisson_arbitrage_expected_cost",
    "poisson_arbitrage_schedule",
    "poisson_optimal_cost",
    "wpms_check",
    "StabilityConfig",
    "L",
    "expint",
    "zeta_family",
    "CoefficientSet",
    "ExecutionProblem",
    "coefficients",
    "execute_optimal",
    "int_phi_delta",
    "integrate_eg",
    "optimal_initial_position",
    "ow_expected_cost",
    "ow_schedule",
    "reaction_block",
    "value_function",
    "__version__",
]
