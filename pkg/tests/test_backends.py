"""Parity between the compiled extension and the pure-Python fallback.

The two kernels mirror each other operation for operation and consume the
same PCG64 stream, so everything here is asserted bitwise.
"""

import numpy as np
import pytest

from mihexec import MarketState, TradeSchedule, realized_cost, simulate
from mihexec.backend import available_backends, get_backend
from mihexec.strategy import execute_optimal

pytestmark = pytest.mark.skipif(
    "compiled" not in available_backends(), reason="compiled backend not built"
)


@pytest.fixture(scope="module")
def backends():
    return get_backend("python"), get_backend("compiled")


FIELDS = ("tau", "side", "volume", "delta_I", "delta_Ibar", "kappa_plus_after", "kappa_minus_after")


class TestSimulationParity:
    @pytest.mark.parametrize("seed", range(5))
    def test_showcase_paths_bitwise(self, showcase_spec, backends, seed):
        py, co = backends
        a = simulate(showcase_spec, 1.0, seed, kernels=py)
        b = simulate(showcase_spec, 1.0, seed, kernels=co)
        for f in FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f)), f

    def test_empirical_marks_bitwise(self, backends):
        import mihexec as mx

        py, co = backends
        marks = mx.MarkLaw.empirical([5.0, 20.0, 80.0], [0.25, 0.5, 0.25])
        pair = mx.ExcitationPair(mx.PowerSum.of((2.0, 0.5)), mx.PowerSum.of((1.0, 0.0)))
        spec = mx.HawkesSpec(
            beta=4.0, kappa_infty=2.0, kappa0_plus=5.0, kappa0_minus=3.0,
            marks=marks, excitation=pair,
        )
        a = simulate(spec, 2.0, 12345, kernels=py)
        b = simulate(spec, 2.0, 12345, kernels=co)
        for f in FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f)), f

    def test_dirac_marks_bitwise(self, poisson_spec, backends):
        py, co = backends
        a = simulate(poisson_spec, 10.0, 5, kernels=py)
        b = simulate(poisson_spec, 10.0, 5, kernels=co)
        for f in FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f)), f


class TestExecutionParity:
    @pytest.mark.parametrize("seed", range(3))
    def test_feedback_schedule_bitwise(self, showcase_problem, backends, seed):
        py, co = backends
        path = simulate(showcase_problem.spec, 1.0, seed)
        a = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 300, kernels=py)
        b = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 300, kernels=co)
        assert a.schedule.initial_block == b.schedule.initial_block
        assert np.array_equal(a.schedule.block_times, b.schedule.block_times)
        assert np.array_equal(a.schedule.block_sizes, b.schedule.block_sizes)
        assert np.array_equal(a.schedule.rate_values, b.schedule.rate_values)
        assert a.schedule.terminal_block == b.schedule.terminal_block
        assert np.array_equal(a.trajectory.X, b.trajectory.X)
        assert np.array_equal(a.trajectory.D, b.trajectory.D)
        assert a.cost == b.cost

    def test_env_var_forces_backend(self):
        import subprocess
        import sys

        for name in ("python", "compiled"):
            out = subprocess.run(
                [sys.executable, "-c", "import mihexec; print(mihexec.BACKEND_NAME)"],
                env={"PATH": "/usr/bin:/bin", "MIHEXEC_BACKEND": name},
                capture_output=True,
                text=True,
            )
            assert out.stdout.strip() == name, out.stderr

    def test_replay_bitwise_with_trace(self, showcase_problem, backends):
        py, co = backends
        path = simulate(showcase_problem.spec, 1.0, 8)
        sched = TradeSchedule(
            T=1.0,
            initial_block=-3.0,
            block_times=[0.4],
            block_sizes=[1.0],
            rate_edges=[0.0, 0.5, 1.0],
            rate_values=[2.0, 1.0],
            terminal_block=3.0 - 1.0 - 1.5,
        )
        init = MarketState(t=0.0, S=1.0, D=0.05, X=0.0)
        ca, ta = realized_cost(path, sched, init, showcase_problem.params, want_trace=True, kernels=py)
        cb, tb = realized_cost(path, sched, init, showcase_problem.params, want_trace=True, kernels=co)
        assert ca == cb
        for xa, xb in zip(ta, tb):
            assert np.array_equal(np.asarray(xa), np.asarray(xb))
