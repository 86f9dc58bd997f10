import numpy as np
import pytest

from wavenmpc.controllers import (NMPC, CascadedPD, FeedForwardPD, NmpcConfig, PdConfig,
                                  QPInfeasibleError, SqpSolver, cpd_control, ff_control, solve_nlp,
                                  solve_qp, transcribe, vehicle_step)
from wavenmpc.controllers.pd import wave_compensation
from wavenmpc.dswp import DisturbancePreview, WavePredictor
from wavenmpc.harness.config import MissionSpec
from wavenmpc.harness.reference import generate_reference
from wavenmpc.vehicle import actuator_limits, field_wave_load, hover_force, rk4_step
from wavenmpc.wave_field import SpectrumSpec, full_kinematics, surface_elevation, synthesize_sea

DT = 0.1
POSE = np.array([50.0, -8.0, 0.0])
X0 = np.concatenate([POSE, np.zeros(3)])


def nmpc_cfg(params, **kw):
    return NmpcConfig(**kw).with_bounds(params)


def hold_refs(x, n):
    return np.tile(x, (n + 1, 1))


def kkt_residual(res, H, g, C, d, lb, ub):
    """Stationarity, sign and complementarity violations of a QP solution."""
    x = res.x
    grad = H @ x + g - C.T @ res.mult_general - res.mult_lower + res.mult_upper
    slack = np.concatenate([C @ x - d, x - lb, ub - x])
    mult = np.concatenate([res.mult_general, res.mult_lower, res.mult_upper])
    return max(np.abs(grad).max(), -slack.min(initial=0.0), -mult.min(initial=0.0),
               np.abs(slack * mult).max())


class TestCascadedPD:
    def test_equilibrium_gives_zero(self, params):
        assert np.all(cpd_control(X0, POSE, np.zeros(3), PdConfig(), params) == 0.0)

    def test_heave_error_drives_heave_only(self, params):
        cfg = PdConfig(Kpv=np.diag([1.0, 1.0, 1.0]))
        mu = cpd_control(X0, POSE + [0.0, 1.0, 0.0], np.zeros(3), cfg, params)
        assert mu[0] == 0.0 and mu[2] == 0.0
        assert mu[1] == pytest.approx(3.0)

    def test_damps_velocity(self, params):
        x = X0.copy()
        x[3] = 0.5
        assert cpd_control(x, POSE, np.zeros(3), PdConfig(), params)[0] < 0

    def test_saturates_on_box(self, params):
        lo, hi = actuator_limits(params)
        mu = cpd_control(X0, POSE + [1e3, -1e3, 1.0], np.zeros(3), PdConfig(), params)
        assert mu[0] == hi[0] and mu[1] == lo[1] and mu[2] == hi[2]

    def test_rejects_negative_gain(self):
        with pytest.raises(ValueError):
            PdConfig(Kp=[-1.0, 1.0, 1.0])


class TestFeedForward:
    def test_zero_preview_equals_pd(self, params):
        x = X0 + [0.3, -0.2, 0.05, 0.1, 0.0, -0.1]
        cfg = PdConfig()
        pd = cpd_control(x, POSE, np.zeros(3), cfg, params)
        assert np.array_equal(ff_control(x, POSE, np.zeros(3), np.zeros(3), cfg, params), pd)

    def test_missing_preview_falls_back(self, params, caplog):
        mu = FeedForwardPD(params)(X0 + [1, 0, 0, 0, 0, 0], POSE, np.zeros(3), None)
        assert np.array_equal(mu, CascadedPD(params)(X0 + [1, 0, 0, 0, 0, 0], POSE, np.zeros(3)))
        assert "falling back" in caplog.text

    def test_static_cancellation(self, params):
        tau = np.array([12.0, -7.5, 0.8])
        mu = ff_control(X0, POSE, np.zeros(3), tau, PdConfig(), params)
        assert np.max(np.abs(mu + tau)) < 1e-9

    def test_normalised_term(self, params):
        tau = np.array([12.0, -7.5, 0.8])
        mu = ff_control(X0, POSE, np.zeros(3), tau, PdConfig(normalized_ff=True), params)
        assert np.allclose(mu, -tau / actuator_limits(params)[1])

    def test_compensation_term_structure(self, params):
        acc = np.array([0.3, -0.2])
        assert np.allclose(wave_compensation(params, [0, 0], 2 * acc),
                           2 * wave_compensation(params, [0, 0], acc))
        vel = np.array([0.4, 0.0])
        lin = params.X_u * vel[0]
        quad = wave_compensation(params, 2 * vel, [0, 0])[0] - 2 * lin
        assert quad == pytest.approx(4 * (wave_compensation(params, vel, [0, 0])[0] - lin))


class TestQP:
    def test_unconstrained_minimiser(self, rng):
        A = rng.normal(size=(5, 5))
        H = A @ A.T + np.eye(5)
        g = rng.normal(size=5)
        res = solve_qp(H, g)
        assert np.allclose(res.x, np.linalg.solve(H, -g))
        assert res.iterations == 0

    def test_random_instances_satisfy_kkt(self, rng):
        for _ in range(40):
            n, m = 8, 5
            A = rng.normal(size=(n, n))
            H = A @ A.T + 0.1 * np.eye(n)
            g = rng.normal(size=n) * 5
            C = rng.normal(size=(m, n))
            d = C @ rng.uniform(-0.5, 0.5, n) - rng.uniform(0, 1, m)
            lb, ub = -np.ones(n), np.ones(n)
            res = solve_qp(H, g, C, d, lb, ub)
            assert kkt_residual(res, H, g, C, d, lb, ub) < 1e-8

    def test_detects_inconsistent_constraints(self):
        with pytest.raises(QPInfeasibleError):
            solve_qp(np.eye(1), np.zeros(1), C=np.array([[1.0]]), d=np.array([2.0]), ub=[1.0])


class TestTranscription:
    def test_decision_vector_size(self, params):
        cfg = nmpc_cfg(params)
        prob = transcribe(X0, hold_refs(X0, 20), np.zeros((20, 3)), cfg, vehicle_step(params, DT))
        assert prob.n_vars == 180
        X, U = prob.unpack(np.arange(180.0))
        assert np.array_equal(prob.pack(X, U), np.arange(180.0))

    def test_short_preview_is_an_error(self, params):
        cfg = nmpc_cfg(params)
        with pytest.raises(ValueError):
            transcribe(X0, hold_refs(X0, 20), np.zeros((10, 3)), cfg, vehicle_step(params, DT))

    def test_objective_matches_naive_sum(self, params, rng):
        cfg = nmpc_cfg(params, R=np.diag([1.0, 2.0, 3.0]))
        mu_prev, mu_ref = rng.normal(size=3), hover_force(params)
        refs = X0 + rng.normal(size=(21, 6))
        prob = transcribe(X0, refs, np.zeros((20, 3)), cfg, vehicle_step(params, DT),
                          mu_prev, mu_ref)
        X = X0 + rng.normal(size=(21, 6))
        U = rng.uniform(-50, 50, size=(20, 3))
        lim = actuator_limits(params)[1]
        expect = 0.0
        for k in range(21):
            for i in range(3):
                expect += 250.0 * (X[k, i] - refs[k, i]) ** 2
        prev = mu_prev
        for k in range(20):
            for i in range(3):
                w = cfg.R[i, i] / lim[i] ** 2
                expect += w * (U[k, i] - mu_ref[i]) ** 2 + w * (U[k, i] - prev[i]) ** 2
            prev = U[k]
        assert prob.objective(X, U) == pytest.approx(expect, rel=1e-10)

    def test_rollout_matches_step_function(self, params, rng):
        cfg = nmpc_cfg(params)
        taus = rng.normal(size=(20, 3))
        prob = transcribe(X0, hold_refs(X0, 20), taus, cfg, vehicle_step(params, DT))
        U = rng.uniform(-20, 20, size=(20, 3))
        X = prob.rollout(U)
        x = X0.copy()
        for k in range(20):
            x = rk4_step(x, U[k], taus[k], DT, params, wrap=False)
            assert np.allclose(X[k + 1], x, rtol=0, atol=1e-12)
        assert np.abs(prob.defects(X, U)).max() < 1e-12


def linear_problem(rng, horizon=1):
    A = np.eye(6) + 0.05 * rng.normal(size=(6, 6))
    B = 0.1 * rng.normal(size=(6, 3))
    D = 0.02 * rng.normal(size=(6, 3))

    def step(x, mu, d):
        return x @ A.T + np.asarray(mu) @ B.T + np.asarray(d) @ D.T

    cfg = NmpcConfig(horizon=horizon, normalized_control=False, effort_about_hover=False,
                     terminal_radius=(1e6, 1e6, 1e6), R=np.diag([0.5, 1.0, 2.0]))
    return A, B, D, step, cfg


class TestSolver:
    def test_single_stage_matches_closed_form(self, rng):
        A, B, D, step, cfg = linear_problem(rng)
        x0, r1 = rng.normal(size=6), rng.normal(size=6)
        d, mu_prev, mu_ref = rng.normal(size=(1, 3)), rng.normal(size=3), rng.normal(size=3)
        refs = np.vstack([x0, r1])
        prob = transcribe(x0, refs, d, cfg, step, mu_prev, mu_ref)
        sol = solve_nlp(prob, cfg=cfg)
        P, R = cfg.state_weight(True), cfg.R
        lhs = B.T @ P @ B + 2 * R
        rhs = B.T @ P @ (r1 - A @ x0 - D @ d[0]) + R @ (mu_ref + mu_prev)
        assert np.allclose(sol.U[0], np.linalg.solve(lhs, rhs), rtol=0, atol=1e-6)

    def test_zero_weights_feasible(self, params):
        zero = np.zeros((3, 3))
        cfg = nmpc_cfg(params, Q=zero, P=zero, R=zero)
        prob = transcribe(X0, hold_refs(X0, 20), np.zeros((20, 3)), cfg, vehicle_step(params, DT),
                          mu_ref=hover_force(params))
        sol = solve_nlp(prob, cfg=cfg)
        assert sol.max_defect < 1e-6
        assert np.all(prob.terminal_violation(sol.X) <= 1e-8)
        assert np.all(sol.U >= cfg.lower - 1e-12) and np.all(sol.U <= cfg.upper + 1e-12)


def disturbed_problem(params, cfg, tau=(15.0, -10.0, 1.0)):
    x0 = X0 + [0.4, -0.3, 0.1, 0.1, 0.0, 0.0]
    return transcribe(x0, hold_refs(X0, cfg.horizon), np.tile(tau, (cfg.horizon, 1)), cfg,
                      vehicle_step(params, DT), hover_force(params), hover_force(params))


class TestSolveContract:
    def test_solution_is_dynamically_consistent(self, params):
        cfg = nmpc_cfg(params)
        sol = solve_nlp(disturbed_problem(params, cfg), cfg=cfg)
        assert sol.status == "optimal"
        assert sol.kkt_residual <= cfg.tol_kkt
        assert sol.rollout_error < 1e-6
        assert np.all(sol.U >= cfg.lower) and np.all(sol.U <= cfg.upper)

    def test_warm_start_at_optimum(self, params):
        cfg = nmpc_cfg(params)
        prob = disturbed_problem(params, cfg)
        sol = solve_nlp(prob, cfg=cfg)
        again = solve_nlp(prob, (sol.X, sol.U), cfg)
        assert again.iterations <= 2
        assert again.cost == pytest.approx(sol.cost, rel=1e-8)

    def test_tighter_tolerance_never_costs_more(self, params):
        costs = []
        for tol in (1e-4, 1e-6, 1e-8):
            cfg = nmpc_cfg(params, tol_kkt=tol)
            costs.append(solve_nlp(disturbed_problem(params, cfg), cfg=cfg).cost)
        assert costs[2] <= costs[0] * (1 + 1e-6)
        assert costs[1] <= costs[0] * (1 + 1e-6)

    def test_iteration_limit_flags_suboptimal(self, params):
        cfg = nmpc_cfg(params, max_iter=0)
        sol = solve_nlp(disturbed_problem(params, cfg), cfg=cfg)
        assert sol.status == "suboptimal"
        assert sol.rollout_error < 1e-6

    def test_infeasible_terminal_set_is_relaxed(self, params):
        cfg = nmpc_cfg(params, horizon=3, terminal_radius=(0.01, 0.01, 0.01))
        far = np.concatenate([POSE + [3.0, 0.0, 0.0], np.zeros(3)])
        prob = transcribe(X0, hold_refs(far, 3), np.zeros((3, 3)), cfg, vehicle_step(params, DT))
        sol = SqpSolver(cfg).solve(prob)
        assert sol.relaxations == cfg.max_relaxations
        assert sol.status in ("terminal_dropped", "suboptimal")
        assert np.all(sol.U >= cfg.lower) and np.all(sol.U <= cfg.upper)


class TestNMPC:
    def test_hover(self, params):
        ctrl = NMPC(params, nmpc_cfg(params))
        mu, sol = ctrl.step(X0, hold_refs(X0, 20), np.zeros((20, 3)))
        assert np.max(np.abs(mu - hover_force(params))) < 0.1
        assert sol.rollout_error < 1e-6

    def test_horizon_shrinks_with_truncated_preview(self, params, caplog):
        ctrl = NMPC(params, nmpc_cfg(params))
        mu, sol = ctrl.step(X0, hold_refs(X0, 20), np.zeros((8, 3)))
        assert len(sol.U) == 8
        assert "horizon truncated" in caplog.text

    def test_deterministic(self, params):
        prev = DisturbancePreview(0.0, DT, np.tile([10.0, 5.0, 0.3], (20, 1)))
        x = X0 + [0.2, 0.1, 0.0, 0.0, 0.0, 0.0]
        a = NMPC(params, nmpc_cfg(params)).step(x, hold_refs(X0, 20), prev)[1]
        b = NMPC(params, nmpc_cfg(params)).step(x, hold_refs(X0, 20), prev)[1]
        assert a.U.tobytes() == b.U.tobytes()

    def test_ablated_preview_ignores_disturbance(self, params):
        ctrl = NMPC(params, nmpc_cfg(params, use_preview=False))
        mu, _ = ctrl.step(X0, hold_refs(X0, 20), np.tile([30.0, 0, 0], (20, 1)))
        assert np.max(np.abs(mu - hover_force(params))) < 0.1

    def test_constant_disturbance_beats_cpd(self, params):
        tau = np.array([20.0, -12.0, 0.6])
        ctrl = NMPC(params, nmpc_cfg(params))
        pd = CascadedPD(params)
        x_n, x_p = X0.copy(), X0.copy()
        err_n, err_p = [], []
        for k in range(150):
            mu_n, _ = ctrl.step(x_n, hold_refs(X0, 20), np.tile(tau, (20, 1)))
            mu_p = pd(x_p, POSE, np.zeros(3))
            x_n = rk4_step(x_n, mu_n, tau, DT, params)
            x_p = rk4_step(x_p, mu_p, tau, DT, params)
            if k >= 100:
                err_n.append(np.abs(x_n[:3] - POSE))
                err_p.append(np.abs(x_p[:3] - POSE))
        assert np.mean(err_n) < np.mean(err_p)
        assert np.all(np.mean(err_n, axis=0) < np.mean(err_p, axis=0))


@pytest.fixture(scope="module")
def w1_sea():
    return synthesize_sea(SpectrumSpec(2.78, 7.1, 128, seed=1), 54.0)


def w1_closed_loop(params, sea, steps, use_preview=True, cold_check=False):
    """Short W1 segment from the start of the square, truth state fed back."""
    pred = WavePredictor(300.0, DT, 54.0, params, band=(0.4, 2.5))
    for i in range(3000):
        pred.record(float(surface_elevation(sea, 0.0, i * DT)), i * DT)
    ref = generate_reference(MissionSpec())
    kin = lambda xs, zs, ts: full_kinematics(sea, xs, zs, ts)
    load = lambda t, x: field_wave_load(params, kin, x[0], x[1], x[2], t)
    ctrl = NMPC(params, nmpc_cfg(params, use_preview=use_preview))
    ctrl.reset(hover_force(params))
    x = np.concatenate([ref.eta[3000], np.zeros(3)])
    errors, warm_cold = [], []
    for k in range(3000, 3000 + steps):
        t = k * DT
        pred.record(float(surface_elevation(sea, 0.0, t)), t)
        preview = pred.preview(x[:3], t, 20)
        refs = ref.window(k, 21)
        if cold_check:
            prob = transcribe(x, refs, preview, ctrl.cfg, ctrl.step_fn, ctrl.mu_prev, ctrl.mu_ref)
            cold = solve_nlp(prob, cfg=ctrl.cfg)
        mu, sol = ctrl.step(x, refs, preview)
        if cold_check:
            warm_cold.append((sol.iterations, cold.iterations))
        x = rk4_step(x, mu, load, DT, params, t=t)
        errors.append(x[:3] - ref.eta[k + 1])
    return np.sqrt(np.mean(np.square(errors), axis=0)), warm_cold


class TestClosedLoopW1:
    def test_warm_start_not_slower(self, params, w1_sea):
        _, pairs = w1_closed_loop(params, w1_sea, 60, cold_check=True)
        better = sum(w <= c for w, c in pairs)
        assert better >= 0.9 * len(pairs)

    @pytest.mark.slow
    def test_preview_has_value(self, params, w1_sea):
        with_preview, _ = w1_closed_loop(params, w1_sea, 300)
        without, _ = w1_closed_loop(params, w1_sea, 300, use_preview=False)
        assert np.linalg.norm(with_preview) < np.linalg.norm(without)
