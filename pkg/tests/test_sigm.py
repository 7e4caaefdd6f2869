import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigm_kit.geometry import CompositeTerm, FeasibleSet, ProxSetup
from sigm_kit.oracle import NoiseSpec, lasso_problem, quadratic_oracle, with_noise
from sigm_kit.problems import ProblemSpec, build
from sigm_kit.rng import RngStream
from sigm_kit.schedule import Schedule, mean_gap_bound
from sigm_kit.sigm import (InvariantError, SigmProblem, geometric_checkpoints, init,
                           run, run_state, step)

# 2^{-3/2} / 4 * (1, 4) by hand; the noiseless beta sits 1e-12 above L
Y0_FROZEN = np.array([0.0883883476483184, 0.353553390593274])


def quad_problem(A, b, p=2.0, sigma=0.0, R=1.0, feasible=None, m=1):
    base = quadratic_oracle(A, b)
    oracle = with_noise(base, NoiseSpec("sphere", sigma)) if sigma > 0 else base
    setup = ProxSetup.euclidean(np.zeros(len(b)), feasible=feasible)
    sched = Schedule.default(p, base.meta.L, sigma / math.sqrt(m), R)
    return SigmProblem(oracle, CompositeTerm.zero(), setup, sched, minibatch=m)


class TestInit:
    def test_frozen_first_step(self):
        pr = quad_problem(np.diag([1.0, 4.0]), np.array([1.0, 4.0]), R=math.sqrt(2))
        st0 = init(pr)
        np.testing.assert_allclose(st0.y, Y0_FROZEN, rtol=1e-11)
        np.testing.assert_array_equal(st0.x, [0.0, 0.0])
        assert st0.k == 0 and st0.calls == 1

    @given(seed=st.integers(0, 2 ** 16), p=st.floats(1.0, 2.0))
    @settings(max_examples=30)
    def test_gradient_step_closed_form(self, seed, p):
        r = np.random.default_rng(seed)
        M = r.standard_normal((4, 4))
        A, b = M @ M.T + np.eye(4), r.standard_normal(4)
        pr = quad_problem(A, b, p=p)
        a0, b0, _ = pr.schedule.coefficients(0)
        np.testing.assert_allclose(init(pr).y, -(a0 / b0) * (-b), rtol=1e-12, atol=1e-15)

    def test_stationary_start(self):
        pr = quad_problem(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(init(pr).y, np.zeros(3))

    def test_dimension_mismatch(self):
        o = quadratic_oracle(np.eye(3), np.zeros(3))
        with pytest.raises(ValueError, match="dimension"):
            SigmProblem(o, CompositeTerm.zero(), ProxSetup.euclidean(np.zeros(2)), Schedule.default(1, 1.0))
        with pytest.raises(ValueError):
            SigmProblem(o, CompositeTerm.zero(), ProxSetup.euclidean(np.zeros(3)), Schedule.default(1, 1.0),
                        minibatch=0)


class TestStep:
    def test_unit_tau_at_p1(self):
        pr = quad_problem(np.diag([1.0, 2.0, 3.0]), np.ones(3), p=1.0, sigma=0.3)
        s = init(pr, RngStream(1))
        for _ in range(5):
            prev = s
            s = step(s, pr, RngStream(1))
            # x_{k+1} is the z computed from the previous model
            z = s.z
            np.testing.assert_allclose(s.x, z, rtol=0, atol=1e-15)
            assert s.k == prev.k + 1

    def test_accumulator_matches_history(self):
        pr = quad_problem(np.diag([1.0, 2.0]), np.ones(2), sigma=1.0)
        s = init(pr, RngStream(2), debug=True)
        for _ in range(30):
            s = step(s, pr, RngStream(2), debug=True)
        recomputed = sum(a * G for a, G in s.history)
        np.testing.assert_allclose(s.s, recomputed, rtol=1e-10)
        assert s.A == pr.schedule.partial_sum_A(30)

    def test_debug_keeps_iterates_feasible(self):
        ball = FeasibleSet.ball(np.zeros(3), 0.5)
        pr = quad_problem(np.eye(3), 3 * np.ones(3), sigma=2.0, feasible=ball)
        run(pr, 200, stream=RngStream(5), debug=True)

    def test_debug_detects_infeasible_prox(self, monkeypatch):
        import sigm_kit.sigm as engine

        ball = FeasibleSet.ball(np.zeros(2), 0.1)
        pr = quad_problem(np.eye(2), 10 * np.ones(2), feasible=ball)
        monkeypatch.setattr(engine, "solve_linear_prox", lambda *a: np.array([5.0, 5.0]))
        with pytest.raises(InvariantError, match="feasible"):
            engine.init(pr, debug=True)

    def test_minibatch_counts_calls(self):
        pr = quad_problem(np.eye(2), np.ones(2), sigma=1.0, m=8)
        _, trace = run(pr, 10)
        assert [r.calls for r in trace] == [8 * (k + 1) for k in range(11)]


class TestRun:
    def test_zero_budget(self):
        pr = quad_problem(np.diag([1.0, 4.0]), np.array([1.0, 4.0]), R=math.sqrt(2))
        y, trace = run(pr, 0)
        np.testing.assert_allclose(y, Y0_FROZEN, rtol=1e-11)
        assert len(trace) == 1 and trace[0].bound == math.inf

    def test_negative_budget(self):
        with pytest.raises(ValueError):
            run(quad_problem(np.eye(2), np.ones(2)), -1)

    def test_deterministic(self):
        pr = quad_problem(np.diag([1.0, 2.0]), np.ones(2), sigma=1.0)
        a = run(pr, 50, stream=RngStream(9))
        pr2 = quad_problem(np.diag([1.0, 2.0]), np.ones(2), sigma=1.0)
        b = run(pr2, 50, stream=RngStream(9))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    def test_streams_differ(self):
        pr = quad_problem(np.diag([1.0, 2.0]), np.ones(2), sigma=1.0)
        assert not np.array_equal(run(pr, 20, stream=RngStream(0))[0], run(pr, 20, stream=RngStream(1))[0])

    def test_trace_length_and_checkpoints(self):
        pr = quad_problem(np.eye(2), np.ones(2))
        assert len(run(pr, 25)[1]) == 26
        assert [r.k for r in run(pr, 25, checkpoints=[0, 5, 25, 99])[1]] == [0, 5, 25]
        assert run(pr, 25, checkpoints=())[1] == []

    def test_geometric_grid(self):
        assert geometric_checkpoints(1000) == [0, 1, 3, 10, 32, 100, 316, 1000]
        assert geometric_checkpoints(0) == [0]

    def test_trace_bound_matches_schedule(self):
        pr = quad_problem(np.eye(2), np.ones(2), sigma=0.5)
        _, trace = run(pr, 40)
        for r in trace[1:]:
            assert r.bound == mean_gap_bound(pr.schedule, 0.0, r.k)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_noiseless_quadratic_within_bound(self, p):
        built = build(ProblemSpec("quadratic", n=20, L=1.0, sigma=0.0))
        sched = Schedule.default(p, built.oracle.meta.L, 0.0, built.R)
        pr = SigmProblem(built.oracle, built.h, built.setup, sched)
        _, trace = run(pr, 1000, trace_with=built.evaluator)
        for r in trace[1:]:
            assert -1e-12 <= r.gap <= r.bound

    def test_noiseless_lasso_within_bound(self):
        built = build(ProblemSpec("lasso", n=10, rows=15, lam=0.1))
        sched = Schedule.default(2, built.oracle.meta.L, 0.0, built.R)
        pr = SigmProblem(built.oracle, built.h, built.setup, sched)
        _, trace = run(pr, 500, trace_with=built.evaluator, checkpoints=[500])
        assert trace[0].gap <= trace[0].bound
        assert trace[0].gap >= -built.phi_star_residual - 1e-12

    def test_timing_off_gives_zero_wall(self):
        pr = quad_problem(np.eye(2), np.ones(2))
        assert all(r.wall_ns == 0 for r in run(pr, 5)[1])
        assert run(pr, 5, timing=True)[1][-1].wall_ns > 0

    def test_oracle_value_without_evaluator(self):
        pr = quad_problem(np.eye(2), np.ones(2))
        y, trace = run(pr, 3)
        assert trace[-1].gap is None
        assert trace[-1].phi == pr.oracle.value(y)


class TestBiasTracking:
    def test_exact_oracle_has_no_charge(self):
        pr = quad_problem(np.diag([1.0, 3.0]), np.ones(2))
        pr.track_bias = True
        _, _, s = run_state(pr, 100, checkpoints=())
        assert s.max_slack <= 1e-12
        assert s.bias_charge <= 1e-12

    def test_nonsmooth_charge_is_bounded_by_slack(self):
        built = build(ProblemSpec("hoelder-norm", n=5, nu=0.0, L_nu=2.0, delta=0.01, dist=0.5))
        sched = Schedule.default(2, built.oracle.meta.L, 0.0, built.R)
        pr = SigmProblem(built.oracle, built.h, built.setup, sched, track_bias=True)
        _, _, s = run_state(pr, 200, checkpoints=())
        # a valid oracle keeps every slack below delta, so the charge is at most delta sum B_i / A_k
        B = sched.B(np.arange(201))
        assert s.max_slack <= 0.01 + 1e-12
        assert s.bias_charge <= 0.01 * B.sum() / s.A + 1e-12


class TestLassoIterates:
    def test_sparse_separable(self):
        o, h = lasso_problem(np.eye(3), np.array([2.0, 0.05, -1.0]), 1.0)
        pr = SigmProblem(o, h, ProxSetup.euclidean(np.zeros(3)), Schedule.default(2, o.meta.L, 0.0, 2.0))
        y, _ = run(pr, 400, checkpoints=())
        np.testing.assert_allclose(y, [1.5, 0.0, -0.5], atol=1e-4)
