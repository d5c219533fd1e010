import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad

from mihexec import (
    EventPath,
    ExcitationPair,
    ExecutionProblem,
    HawkesSpec,
    ImpactParams,
    MarkLaw,
    PowerSum,
    coefficients,
    execute_optimal,
    int_phi_delta,
    integrate_eg,
    optimal_initial_position,
    ow_expected_cost,
    ow_schedule,
    reaction_block,
    simulate,
    value_function,
)
from mihexec.strategy import Phi, e_crit_closed_form, g_crit_closed_form, phi_eta


def empty_path(problem):
    return EventPath(
        T=problem.T, beta=problem.spec.beta, kappa_infty=problem.spec.kappa_infty,
        kappa0_plus=problem.spec.kappa0_plus, kappa0_minus=problem.spec.kappa0_minus,
        tau=np.empty(0), side=np.empty(0, dtype=np.int32), volume=np.empty(0),
        delta_I=np.empty(0), delta_Ibar=np.empty(0),
    )


@pytest.fixture(scope="module")
def critical_problem():
    """eta = 0 with positive cross-excitation: the closed-form e/g anchor."""
    pair = ExcitationPair(PowerSum.of((4.0, 1.0)), PowerSum.of((1.0, 0.0)))
    spec = HawkesSpec(
        beta=3.0, kappa_infty=1.5, kappa0_plus=2.0, kappa0_minus=1.0,
        marks=MarkLaw.exponential(2.0), excitation=pair,
    )
    assert spec.eta == 0.0
    params = ImpactParams(q=10.0, rho=2.0, nu=0.4, epsilon=0.2)
    return ExecutionProblem(x0=-30.0, T=1.5, D0=0.05, S0=1.0, params=params, spec=spec)


@pytest.fixture(scope="module")
def small_flow_problem():
    """Low-intensity flow (few events) for quadrature oracles."""
    pair = ExcitationPair(PowerSum.of((1.5, 1.0)), PowerSum.of((0.5, 0.0)))
    spec = HawkesSpec(
        beta=2.0, kappa_infty=1.0, kappa0_plus=3.0, kappa0_minus=2.0,
        marks=MarkLaw.dirac(1.0), excitation=pair,
    )
    params = ImpactParams(q=5.0, rho=3.0, nu=0.25, epsilon=0.1)
    return ExecutionProblem(x0=-10.0, T=1.0, D0=0.02, S0=0.0, params=params, spec=spec)


class TestOwSchedule:
    def test_hand_value(self):
        sched = ow_schedule(-500.0, 25.0, 1.0)
        assert sched.initial_block == pytest.approx(500.0 / 27.0, rel=1e-15)
        assert sched.terminal_block == pytest.approx(500.0 / 27.0, rel=1e-15)
        assert sched.rate_values[0] == pytest.approx(25.0 * 500.0 / 27.0, rel=1e-15)

    def test_short_horizon_splits_in_halves(self):
        sched = ow_schedule(-500.0, 25.0, 1e-9)
        assert sched.initial_block == pytest.approx(250.0, rel=1e-7)
        assert sched.terminal_block == pytest.approx(250.0, rel=1e-7)

    def test_liquidation_identity(self):
        for x0 in (-500.0, 3.0, 0.0):
            sched = ow_schedule(x0, 7.0, 2.0)
            assert x0 + sched.total_traded() == pytest.approx(0.0, abs=1e-12 * max(1.0, abs(x0)))

    def test_expected_cost(self):
        val = ow_expected_cost(-500.0, 25.0, 1.0, P0=0.1, epsilon=0.3, q=100.0)
        assert val == pytest.approx(0.1 * 500.0 + (0.7 / 27.0 + 0.15) * 250000.0 / 100.0, rel=1e-14)


class TestCoefficients:
    def test_boundary_values(self, showcase_problem):
        c = coefficients(0.0, showcase_problem)
        assert c.a == pytest.approx(0.5, rel=1e-14)
        assert c.b == 0.0
        assert c.c == pytest.approx(0.0, abs=1e-15)
        assert c.j == 0.5
        assert c.k == pytest.approx(showcase_problem.m1 / (2 * 25.0), rel=1e-14)
        assert c.G_eta == pytest.approx(1.0, rel=1e-14)
        assert c.c_hat_eta == 0.0

    def test_u_out_of_range_rejected(self, showcase_problem):
        with pytest.raises(ValueError):
            coefficients(-0.1, showcase_problem)
        with pytest.raises(ValueError):
            coefficients(1.1, showcase_problem)

    def test_G_at_eta_zero(self, critical_problem):
        cs = critical_problem.coefficient_set()
        nu, rho = 0.4, 2.0
        for u in (0.0, 0.3, 1.2):
            assert float(cs.G(u)) == pytest.approx(1.0 + nu * rho * u / 2.0, rel=1e-12)

    def test_k_identity(self, showcase_problem):
        cs = showcase_problem.coefficient_set()
        eps, m1, rho = 0.3, 50.0, 25.0
        for u in np.linspace(0.0, 1.0, 7):
            assert float(cs.k(u)) == pytest.approx(
                (1 - eps) / 2.0 * float(cs.b(u)) + m1 / (2 * rho), rel=1e-13
            )

    @pytest.mark.parametrize("prob_name", ["showcase_problem", "critical_problem"])
    def test_ode_residuals(self, prob_name, request):
        problem = request.getfixturevalue(prob_name)
        cs = problem.coefficient_set(ode_step=problem.T / 4000.0)
        p = problem.params
        rho, nu, eps = p.rho, p.nu, p.epsilon
        m1 = problem.m1
        eta = problem.eta
        mom = problem.spec.moments
        h = 1e-6
        for u in np.linspace(0.05, problem.T - 0.05, 9):
            b_dot = (float(cs.b(u + h)) - float(cs.b(u - h))) / (2 * h)
            b_rhs = (-eta - rho / (2 + rho * u)) * float(cs.b(u)) + (m1 / (1 - eps)) * (1 + nu * rho * u) / (2 + rho * u)
            assert abs(b_dot - b_rhs) < 1e-6 * max(1.0, abs(b_rhs))
            c_dot = (float(cs.c(u + h)) - float(cs.c(u - h))) / (2 * h)
            c_rhs = -2 * eta * float(cs.c(u)) + (1 - nu) * m1 * float(cs.b(u)) - rho / (1 - eps) * float(cs.k(u)) ** 2
            assert abs(c_dot - c_rhs) < 1e-6 * max(1.0, abs(c_rhs))
            e_dot = (float(cs.e(u + h)) - float(cs.e(u - h))) / (2 * h)
            e_rhs = (
                -(eta - 2 * mom.iota_c) * float(cs.e(u))
                + mom.alpha_tilde * (1 - nu) * float(cs.b(u))
                + mom.alpha_2 * float(cs.c(u))
                + (1 - nu) ** 2 * problem.spec.marks.m2 / (1 - eps) * (1 / (2 + rho * u) - 0.5)
            )
            assert abs(e_dot - e_rhs) < 1e-6 * max(1.0, abs(e_rhs))
            g_dot = (float(cs.g(u + h)) - float(cs.g(u - h))) / (2 * h)
            g_rhs = 2 * problem.spec.beta * problem.spec.kappa_infty * float(cs.e(u))
            assert abs(g_dot - g_rhs) < 1e-6 * max(1.0, abs(g_rhs))


class TestIntegrateEG:
    def test_zero_baseline_gives_zero_g(self, showcase_problem):
        spec = dataclasses.replace(showcase_problem.spec, kappa_infty=0.0)
        problem = dataclasses.replace(showcase_problem, spec=spec)
        _, _, g = integrate_eg(problem, ode_step=1e-3)
        assert np.max(np.abs(g)) == 0.0

    def test_matches_critical_closed_forms(self, critical_problem):
        u, e, g = integrate_eg(critical_problem, ode_step=critical_problem.T / 3000.0)
        e_ref = e_crit_closed_form(critical_problem, u)
        g_ref = g_crit_closed_form(critical_problem, u)
        scale_e = np.max(np.abs(e_ref))
        scale_g = np.max(np.abs(g_ref))
        assert np.max(np.abs(e - e_ref)) <= 1e-6 * scale_e
        assert np.max(np.abs(g - g_ref)) <= 1e-6 * scale_g

    def test_rk4_order(self, critical_problem):
        ref = e_crit_closed_form(critical_problem, critical_problem.T)
        errs = []
        for n in (50, 100):
            cs = critical_problem.coefficient_set(ode_step=critical_problem.T / n)
            errs.append(abs(float(cs.e(critical_problem.T)) - float(ref)))
        ratio = errs[0] / errs[1]
        assert 10.0 < ratio < 22.0  # fourth order: ~16


class TestValueFunction:
    def test_terminal_is_block_cost(self, showcase_problem):
        x, d, z = -47.0, 0.3, 1.2
        v = value_function(showcase_problem.T, x, d, z, 5.0, 40.0, showcase_problem)
        q = 100.0
        assert v == pytest.approx(-(d + z) * x + x * x / (2 * q), rel=1e-12)

    def test_pure_constant_term(self, showcase_problem):
        v = value_function(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, showcase_problem)
        cs = showcase_problem.coefficient_set()
        assert v == pytest.approx(float(cs.g(1.0)) / 100.0, rel=1e-12)

    def test_martingale_state_reduces_to_ow_cost(self, martingale_spec):
        # steady state qd = m1 delta / rho with Sigma = 0 and no baseline
        spec = dataclasses.replace(martingale_spec, kappa_infty=0.0, kappa0_plus=10.0, kappa0_minus=2.0)
        params = ImpactParams(q=100.0, rho=16.0, nu=0.5, epsilon=0.25)
        delta0 = 8.0
        D0 = 50.0 * delta0 / (16.0 * 100.0)
        problem = ExecutionProblem(x0=-500.0, T=1.0, D0=D0, S0=2.0, params=params, spec=spec)
        for x in (-500.0, 120.0):
            v = value_function(0.0, x, D0, 2.0, delta0, 0.0, problem)
            ref = ow_expected_cost(x, 16.0, 1.0, P0=2.0 + D0, epsilon=0.25, q=100.0)
            assert v == pytest.approx(ref, rel=1e-12)


class TestReactionBlock:
    def test_no_manipulation_regime_gives_zero(self, martingale_problem):
        m1 = 50.0
        for tau in (0.05, 0.5, 0.93):
            for v in (5.0, 50.0, 250.0):
                for side in (1, -1):
                    dn = side * v
                    di = side * 8.0 * (v / m1)
                    assert abs(reaction_block(tau, dn, di, martingale_problem)) < 1e-12 * max(1.0, abs(dn))

    def test_memoryless_flow_formula(self, showcase_problem):
        # with no excitation jump the block opposes the order
        p = showcase_problem.params
        for tau in (0.2, 0.8):
            u = 1.0 - tau
            dn = 60.0
            expected = -((1 + p.rho * u) / (2 + p.rho * u)) * (1 - p.nu) * dn / (1 - p.epsilon)
            assert reaction_block(tau, dn, 0.0, showcase_problem) == pytest.approx(expected, rel=1e-13)

    def test_hand_value(self):
        zero = PowerSum.zero()
        spec = HawkesSpec(
            beta=0.0, kappa_infty=0.0, kappa0_plus=1.0, kappa0_minus=1.0,
            marks=MarkLaw.dirac(1.0), excitation=ExcitationPair(zero, zero),
        )
        params = ImpactParams(q=1.0, rho=1.0, nu=0.0, epsilon=0.0)
        problem = ExecutionProblem(x0=0.0, T=2.0, D0=0.0, S0=0.0, params=params, spec=spec)
        assert reaction_block(1.0, 1.0, 0.0, problem) == pytest.approx(-2.0 / 3.0, rel=1e-14)

    def test_rejects_tau_outside_open_interval(self, showcase_problem):
        with pytest.raises(ValueError):
            reaction_block(0.0, 1.0, 0.0, showcase_problem)
        with pytest.raises(ValueError):
            reaction_block(1.0, 1.0, 0.0, showcase_problem)


class TestPhiMachinery:
    def test_phi_eta_matches_K_derivative(self, showcase_problem):
        # m1 phi_eta(t) = (K'(u) + beta K(u)) / (2 + rho u) at u = T - t
        cs = showcase_problem.coefficient_set()
        p = showcase_problem.params
        beta = showcase_problem.spec.beta
        h = 1e-6
        for t in (0.1, 0.55, 0.9):
            u = 1.0 - t
            Kp = (float(cs.K(u + h)) - float(cs.K(u - h))) / (2 * h)
            ref = (Kp + beta * float(cs.K(u))) / (2 + p.rho * u)
            assert 50.0 * phi_eta(t, showcase_problem) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("prob_name", ["showcase_problem", "critical_problem", "small_flow_problem"])
    def test_Phi_matches_quadrature(self, prob_name, request):
        problem = request.getfixturevalue(prob_name)
        beta = problem.spec.beta
        for s, t in [(0.0, 0.4), (0.2, 0.9), (0.5, 0.6)]:
            s_, t_ = s * problem.T, t * problem.T
            ref, _ = quad(lambda u: phi_eta(u, problem) * math.exp(-beta * u), s_, t_, epsabs=1e-13, epsrel=1e-12)
            assert float(Phi(s_, t_, problem)) == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_Phi_eta_branch_seam(self):
        # construct flows with eta just above/below the Ei/quadrature switch
        def make(eta):
            c = 2.0 - eta
            pair = ExcitationPair(PowerSum.of((c, 0.0)), PowerSum.zero())
            spec = HawkesSpec(
                beta=2.0, kappa_infty=1.0, kappa0_plus=1.0, kappa0_minus=1.0,
                marks=MarkLaw.dirac(1.0), excitation=pair,
            )
            params = ImpactParams(q=1.0, rho=1.5, nu=0.3, epsilon=0.1)
            return ExecutionProblem(x0=-1.0, T=1.0, D0=0.0, S0=0.0, params=params, spec=spec)

        lo = make(1e-3 * (1 - 1e-9))
        hi = make(1e-3 * (1 + 1e-9))
        for s, t in [(0.0, 0.8), (0.3, 0.95)]:
            assert abs(float(Phi(s, t, lo)) - float(Phi(s, t, hi))) <= 1e-8

    def test_int_phi_delta_trivial(self, small_flow_problem):
        spec = dataclasses.replace(small_flow_problem.spec, kappa0_plus=1.0, kappa0_minus=1.0)
        problem = dataclasses.replace(small_flow_problem, spec=spec)
        path = empty_path(problem)
        assert int_phi_delta(path, 0.7, problem) == 0.0

    def test_int_phi_delta_matches_quadrature(self, small_flow_problem):
        problem = small_flow_problem
        path = simulate(problem.spec, problem.T, 909)
        assert 0 < path.n_events < 40
        beta = problem.spec.beta

        def integrand(u):
            return phi_eta(u, problem) * path.delta_at(u)

        for t in (0.3, 0.75, 1.0):
            pts = [float(x) for x in path.tau if x < t]
            ref, _ = quad(integrand, 0.0, t, points=pts, limit=200, epsabs=1e-12, epsrel=1e-11)
            assert int_phi_delta(path, t, problem) == pytest.approx(ref, rel=1e-8, abs=1e-8)


class TestExecuteOptimal:
    def test_no_flow_reproduces_ow(self, quiet_spec):
        params = ImpactParams(q=100.0, rho=25.0, nu=0.3, epsilon=0.3)
        problem = ExecutionProblem(x0=-500.0, T=1.0, D0=0.0, S0=5.0, params=params, spec=quiet_spec)
        path = empty_path(problem)
        ow = ow_schedule(-500.0, 25.0, 1.0)
        for mode in ("feedback", "explicit"):
            res = execute_optimal(path, problem, mode=mode, grid_step=1.0 / 250)
            assert res.schedule.initial_block == pytest.approx(ow.initial_block, rel=1e-12)
            assert res.schedule.terminal_block == pytest.approx(ow.terminal_block, rel=1e-10)
            assert np.max(np.abs(res.schedule.rate_values - ow.rate_values[0])) < 1e-9 * abs(ow.rate_values[0])
            if len(res.schedule.block_sizes):
                assert np.max(np.abs(res.schedule.block_sizes)) < 1e-10
            assert res.cost == pytest.approx(
                ow_expected_cost(-500.0, 25.0, 1.0, P0=5.0, epsilon=0.3, q=100.0), rel=1e-12
            )

    def test_feedback_matches_explicit(self, showcase_problem):
        path = simulate(showcase_problem.spec, 1.0, 404)
        fb = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 1000)
        ex = execute_optimal(path, showcase_problem, mode="explicit", grid_step=1.0 / 1000)
        scale = np.max(np.abs(ex.trajectory.X))
        assert np.max(np.abs(fb.trajectory.X - ex.trajectory.X)) <= 1e-9 * scale
        assert fb.cost == pytest.approx(ex.cost, rel=1e-4)

    def test_identity_residual_along_feedback(self, showcase_problem):
        path = simulate(showcase_problem.spec, 1.0, 405)
        res = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 500)
        tr = res.trajectory
        p = showcase_problem.params
        cs = showcase_problem.coefficient_set()
        u = showcase_problem.T - tr.t
        K = np.asarray(cs.K(u))
        F = (1 - p.epsilon) * tr.X + (1 + p.rho * u) * (p.q * tr.D) - K * tr.delta
        scale = np.max(np.abs((1 - p.epsilon) * tr.X)) + np.max(np.abs((1 + p.rho * u) * p.q * tr.D))
        assert np.max(np.abs(F)) <= 1e-10 * scale

    def test_event_blocks_match_reaction_formula(self, showcase_problem):
        path = simulate(showcase_problem.spec, 1.0, 406)
        res = execute_optimal(path, showcase_problem, mode="explicit", grid_step=1.0 / 200)
        sched = res.schedule
        interior = path.tau < 1.0
        ev_times = path.tau[interior]
        pos = np.searchsorted(sched.block_times, ev_times)
        for k, t in enumerate(ev_times):
            expected = reaction_block(float(t), float(path.dN[interior][k]), float(path.delta_I[interior][k]), showcase_problem)
            assert sched.block_sizes[pos[k]] == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_showcase_reaction_directions(self, showcase_spec):
        # fast resilience: reactions oppose the orders; slow: they follow
        path = simulate(showcase_spec, 1.0, 407)
        interior = path.tau < 1.0
        signs = {}
        for rho in (25.0, 16.0):
            params = ImpactParams(q=100.0, rho=rho, nu=0.3, epsilon=0.3)
            problem = ExecutionProblem(x0=-500.0, T=1.0, D0=0.1, S0=0.0, params=params, spec=showcase_spec)
            res = execute_optimal(path, problem, mode="feedback", grid_step=1.0 / 500)
            pos = np.searchsorted(res.schedule.block_times, path.tau[interior])
            blocks = res.schedule.block_sizes[pos]
            signs[rho] = np.sign(blocks) * np.sign(path.dN[interior])
        assert np.mean(signs[25.0] < 0) > 0.5
        assert np.mean(signs[16.0] > 0) > 0.5

    def test_linearity_under_doubling(self, martingale_spec):
        # phi_s - phi_c is linear, so doubled volumes double the intensity jumps
        spec = dataclasses.replace(martingale_spec, kappa0_plus=70.0, kappa0_minus=50.0)
        params = ImpactParams(q=100.0, rho=25.0, nu=0.5, epsilon=0.25)
        problem = ExecutionProblem(x0=-500.0, T=1.0, D0=0.1, S0=0.0, params=params, spec=spec)
        path = simulate(spec, 1.0, 408)
        spec2 = dataclasses.replace(martingale_spec, kappa0_plus=80.0, kappa0_minus=40.0)
        problem2 = ExecutionProblem(x0=-1000.0, T=1.0, D0=0.2, S0=0.0, params=params, spec=spec2)
        path2 = EventPath(
            T=1.0, beta=spec2.beta, kappa_infty=spec2.kappa_infty,
            kappa0_plus=80.0, kappa0_minus=40.0,
            tau=path.tau, side=path.side, volume=2.0 * path.volume,
            delta_I=2.0 * path.delta_I, delta_Ibar=path.delta_Ibar,
        )
        r1 = execute_optimal(path, problem, mode="feedback", grid_step=1.0 / 400)
        r2 = execute_optimal(path2, problem2, mode="feedback", grid_step=1.0 / 400)
        assert np.max(np.abs(r2.trajectory.X - 2.0 * r1.trajectory.X)) <= 1e-9 * np.max(np.abs(r2.trajectory.X))

    def test_affine_superposition(self, showcase_spec):
        params = ImpactParams(q=100.0, rho=25.0, nu=0.3, epsilon=0.3)
        path = simulate(showcase_spec, 1.0, 409)

        def run(x0, D0, dk):
            spec = dataclasses.replace(showcase_spec, kappa0_plus=60.0 + dk, kappa0_minus=60.0 - dk)
            pb = ExecutionProblem(x0=x0, T=1.0, D0=D0, S0=0.0, params=params, spec=spec)
            p = dataclasses.replace(path, kappa0_plus=60.0 + dk, kappa0_minus=60.0 - dk)
            return execute_optimal(p, pb, mode="feedback", grid_step=1.0 / 300).trajectory.X

        Xa = run(-300.0, 0.05, 4.0)
        Xb = run(100.0, -0.02, -1.5)
        X0 = run(0.0, 0.0, 0.0)
        Xab = run(-200.0, 0.03, 2.5)
        assert np.max(np.abs(Xa + Xb - X0 - Xab)) <= 1e-8 * np.max(np.abs(Xab))

    def test_event_on_grid_point_and_at_horizon(self, showcase_problem):
        # events colliding with grid points, and one exactly at T: the order
        # at T moves the state but triggers no reaction block
        spec = showcase_problem.spec
        m1 = 50.0
        taus = np.array([0.25, 0.5, 1.0])
        sides = np.array([1, -1, 1], dtype=np.int32)
        vols = np.array([40.0, 60.0, 50.0])
        y = vols / m1
        diff = spec.excitation.phi_diff(y)
        tot = spec.excitation.phi_s(y) + spec.excitation.phi_c(y)
        path = EventPath(
            T=1.0, beta=spec.beta, kappa_infty=spec.kappa_infty,
            kappa0_plus=60.0, kappa0_minus=60.0,
            tau=taus, side=sides, volume=vols,
            delta_I=sides * diff, delta_Ibar=tot,
        )
        fb = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 4)
        ex = execute_optimal(path, showcase_problem, mode="explicit", grid_step=1.0 / 4)
        scale = np.max(np.abs(ex.trajectory.X))
        assert np.max(np.abs(fb.trajectory.X - ex.trajectory.X)) <= 1e-9 * scale
        # no schedule block at T; the terminal closes the position
        assert np.all(fb.schedule.block_times < 1.0)
        # costs differ only through the coarse rate discretization here
        assert fb.cost == pytest.approx(ex.cost, rel=1e-2)

    def test_explicit_component_split(self, showcase_problem):
        from mihexec.strategy import explicit_components

        path = simulate(showcase_problem.spec, 1.0, 411)
        times = np.linspace(0.0, 1.0, 101)
        parts = explicit_components(path, showcase_problem, times)
        # the three parts sum to the full strategy by construction of dyn;
        # check the base part is the block-rate-block line instead
        ow = ow_schedule(showcase_problem.x0, 25.0, 1.0)
        X_ow_line = showcase_problem.x0 + ow.initial_block + ow.rate_values[0] * times
        assert np.max(np.abs(parts["ow"] - X_ow_line)) <= 1e-9 * 500.0
        assert np.allclose(parts["ow"] + parts["trend"] + parts["dyn"], parts["total"], atol=1e-9)
        # trend carries no event dependence; dyn vanishes with no events
        assert np.max(np.abs(parts["dyn"][times < path.tau[0]])) <= 1e-9

    def test_strategy_ignores_eg_tables(self, showcase_problem):
        path = simulate(showcase_problem.spec, 1.0, 410)
        base = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 200)
        cs = showcase_problem.coefficient_set()
        saved_e, saved_g = cs._e_nodes.copy(), cs._g_nodes.copy()
        try:
            cs._e_nodes += 1e6
            cs._g_nodes -= 1e6
            again = execute_optimal(path, showcase_problem, mode="feedback", grid_step=1.0 / 200)
        finally:
            cs._e_nodes[:] = saved_e
            cs._g_nodes[:] = saved_g
        assert np.array_equal(base.trajectory.X, again.trajectory.X)
        assert base.cost == again.cost


class TestOptimalInitialPosition:
    def test_flat_state_gives_zero(self, showcase_problem):
        assert optimal_initial_position(0.0, 0.0, showcase_problem) == 0.0

    def test_positive_deviation_favors_short(self, showcase_problem):
        # price above fundamental decays; the profitable program is a buy-back
        assert optimal_initial_position(0.1, 0.0, showcase_problem) < 0.0
        assert optimal_initial_position(0.0, 5.0, showcase_problem) > 0.0

    def test_grid_search_brackets_closed_form(self, showcase_problem):
        problem = showcase_problem
        x_star = optimal_initial_position(problem.D0, problem.delta0, problem)
        xs = np.linspace(x_star - 50.0, x_star + 50.0, 501)
        vals = value_function(0.0, xs, problem.D0, problem.S0, problem.delta0, problem.Sigma0, problem)
        vals = vals + problem.P0 * xs
        k = int(np.argmin(vals))
        assert abs(xs[k] - x_star) <= (xs[1] - xs[0])
