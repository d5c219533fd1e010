import numpy as np
import pytest

from mihexec import ExcitationPair, ExecutionProblem, HawkesSpec, ImpactParams, MarkLaw, PowerSum


@pytest.fixture(scope="session")
def showcase_spec() -> HawkesSpec:
    """The two-resilience showcase flow: exponential marks, mixed powers."""
    phi_s = PowerSum.of((1.2, 0.2), (0.5, 0.7), (14.4, 1.0))
    phi_c = PowerSum.of((1.2, 0.2), (0.5, 0.7), (0.4, 1.0))
    return HawkesSpec(
        beta=20.0,
        kappa_infty=12.0,
        kappa0_plus=60.0,
        kappa0_minus=60.0,
        marks=MarkLaw.exponential(50.0),
        excitation=ExcitationPair(phi_s, phi_c),
    )


@pytest.fixture(scope="session")
def showcase_problem(showcase_spec) -> ExecutionProblem:
    params = ImpactParams(q=100.0, rho=25.0, nu=0.3, epsilon=0.3)
    return ExecutionProblem(x0=-500.0, T=1.0, D0=0.1, S0=0.0, params=params, spec=showcase_spec)


@pytest.fixture(scope="session")
def martingale_spec() -> HawkesSpec:
    """No-manipulation regime with exact-binary parameters.

    beta = rho = 16, nu = 1/2, phi_s - phi_c = 8 y exactly, exponential
    marks; stationary (iota_s + iota_c < beta) and steady state at
    delta0 = 0, D0 = 0.
    """
    phi_s = PowerSum.of((1.2, 0.2), (0.5, 0.7), (8.4, 1.0))
    phi_c = PowerSum.of((1.2, 0.2), (0.5, 0.7), (0.4, 1.0))
    return HawkesSpec(
        beta=16.0,
        kappa_infty=12.0,
        kappa0_plus=60.0,
        kappa0_minus=60.0,
        marks=MarkLaw.exponential(50.0),
        excitation=ExcitationPair(phi_s, phi_c),
    )


@pytest.fixture(scope="session")
def martingale_problem(martingale_spec) -> ExecutionProblem:
    params = ImpactParams(q=100.0, rho=16.0, nu=0.5, epsilon=0.25)
    return ExecutionProblem(x0=-500.0, T=1.0, D0=0.0, S0=0.0, params=params, spec=martingale_spec)


@pytest.fixture(scope="session")
def poisson_spec() -> HawkesSpec:
    """Balanced memoryless flow: unit intensity each side, unit point marks."""
    zero = PowerSum.zero()
    return HawkesSpec(
        beta=0.0,
        kappa_infty=0.0,
        kappa0_plus=1.0,
        kappa0_minus=1.0,
        marks=MarkLaw.dirac(1.0),
        excitation=ExcitationPair(zero, zero),
    )


@pytest.fixture(scope="session")
def poisson_params() -> ImpactParams:
    return ImpactParams(q=1.0, rho=1.0, nu=0.0, epsilon=0.0)


@pytest.fixture(scope="session")
def quiet_spec() -> HawkesSpec:
    """Zero intensity forever: no events, pure deterministic replay."""
    zero = PowerSum.zero()
    return HawkesSpec(
        beta=0.0,
        kappa_infty=0.0,
        kappa0_plus=0.0,
        kappa0_minus=0.0,
        marks=MarkLaw.exponential(50.0),
        excitation=ExcitationPair(zero, zero),
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240509)
