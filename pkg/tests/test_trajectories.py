import math

import numpy as np
import pytest

from collapselab.core import make_probe_params
from collapselab.errors import CapacityError, InvalidParameterError, InvalidStepError
from collapselab.noise import NoiseStream
from collapselab.trajectories import (
    CentroidState,
    analytic_moments,
    ensemble_run,
    increment_anomaly_scaling,
    step_centroid,
)


class TestStepCentroid:
    def test_inertial_drift(self, params):
        state = CentroidState(xbar=[1.0, 0.0, -2.0], pbar=[0.5, -0.1, 2.0])
        out = step_centroid(state, 0.1, np.zeros(3), params)
        assert np.allclose(out.xbar, state.xbar + state.pbar * 0.1 / params.M, atol=1e-15)
        assert np.array_equal(out.pbar, state.pbar)

    def test_shared_kick_in_both_updates(self, params):
        state = CentroidState(xbar=[0.0], pbar=[0.4])
        dW = np.array([0.03])
        out = step_centroid(state, 0.01, dW, params)
        kick = 2.0 * params.sigma_inf_sq / params.hbar
        assert out.pbar[0] == pytest.approx(0.4 + 0.03, rel=1e-15)
        # coordinate update uses the pre-step momentum
        assert out.xbar[0] == pytest.approx(0.4 * 0.01 / params.M + kick * 0.03, rel=1e-14)

    def test_validation(self, params):
        state = CentroidState(xbar=[0.0], pbar=[0.0])
        with pytest.raises(InvalidStepError):
            step_centroid(state, 0.0, [0.0], params)
        with pytest.raises(InvalidParameterError):
            step_centroid(state, 0.01, [0.0, 0.0], params)
        with pytest.raises(InvalidParameterError):
            CentroidState(xbar=[0.0, 1.0], pbar=[0.0])


class TestAnalyticMoments:
    def test_zero_time(self, params):
        report = analytic_moments(params, 0.0)
        assert np.all(report.var_x == 0.0)
        assert np.all(report.var_p == 0.0)
        assert np.all(report.cov_xp == 0.0)

    def test_var_p_linear_in_time(self, params):
        t = 1.7
        assert np.array_equal(
            analytic_moments(params, 2.0 * t).var_p, 2.0 * analytic_moments(params, t).var_p
        )

    def test_rejects_negative_time(self, params):
        with pytest.raises(InvalidParameterError):
            analytic_moments(params, -1.0)

    def test_against_brute_force_sde(self, params):
        # Independent vectorized Euler integration of the same SDE.
        n, n_steps, dt = 10_000, 1000, 1e-3
        T = n_steps * dt
        rng = np.random.default_rng(1234)
        kick = 2.0 * params.sigma_inf_sq / params.hbar
        dW = math.sqrt(params.D_p * dt) * rng.standard_normal((n, n_steps))
        p = np.cumsum(dW, axis=1)
        p_prev = np.hstack([np.zeros((n, 1)), p[:, :-1]])
        x = np.sum(p_prev * dt / params.M + kick * dW, axis=1)
        p_final = p[:, -1]
        expected = analytic_moments(params, T, n_axes=1)
        var_x = float(np.var(x, ddof=1))
        var_p = float(np.var(p_final, ddof=1))
        cov = float(np.cov(x, p_final)[0, 1])
        assert abs(var_x - expected.var_x[0]) <= 3.0 * var_x * math.sqrt(2.0 / n)
        assert abs(var_p - expected.var_p[0]) <= 3.0 * var_p * math.sqrt(2.0 / n)
        assert abs(cov - expected.cov_xp[0]) <= 3.0 * math.sqrt((var_x * var_p + cov**2) / n)


class TestEnsembleRun:
    def test_bit_identical_rerun(self, params):
        a = ensemble_run(2, 1.0, 0.01, seed=6, params=params)
        b = ensemble_run(2, 1.0, 0.01, seed=6, params=params)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.var_x, rb.var_x)
            assert np.array_equal(ra.cov_xp, rb.cov_xp)

    def test_var_p_tracks_analytic(self, params):
        reports = ensemble_run(2000, 2.0, 0.01, seed=8, params=params, n_axes=1)
        for r in reports:
            target = analytic_moments(params, r.t, n_axes=1).var_p[0]
            assert abs(r.var_p[0] - target) <= 4.0 * r.stderr_var_p[0]
        final = reports[-1]
        assert final.var_p[0] == pytest.approx(
            analytic_moments(params, final.t).var_p[0], rel=0.05
        )

    def test_cauchy_schwarz_on_sample_moments(self, params):
        for r in ensemble_run(500, 1.0, 0.01, seed=3, params=params, n_axes=1):
            assert np.all(np.abs(r.cov_xp) <= np.sqrt(r.var_x * r.var_p) + 1e-12)

    def test_shared_noise_dominates_early_covariance(self, params):
        # At t = 0.01/omega_G the direct-kick term 2 sigma_inf^2 D_p t / hbar
        # carries ~99.6% of cov_xp; plain Brownian motion would give half of
        # the remaining t^2 term only.
        report = ensemble_run(10_000, 0.01, 1e-4, seed=4, params=params, n_axes=1)[-1]
        c = 2.0 * params.sigma_inf_sq / params.hbar
        ratio = report.cov_xp[0] / (c * params.D_p * report.t)
        assert 0.9 <= ratio <= 1.1

    def test_convergence_rate_toward_analytic(self, params):
        errors = {}
        for n in (100, 1000, 10_000):
            reports = ensemble_run(n, 2.0, 0.01, seed=15, params=params, n_axes=1)
            rel = [
                abs(r.var_p[0] / analytic_moments(params, r.t).var_p[0] - 1.0)
                for r in reports
            ]
            errors[n] = float(np.mean(rel))
        assert errors[10_000] < errors[100] / 3.0

    def test_macroscopic_masses_straighten_trajectories(self):
        # Fixed R and fixed crossing speed: coordinate variance over one time
        # unit shrinks monotonically with mass.
        spread = [
            analytic_moments(make_probe_params(M, 1.0, 0.5), 1.0).var_x[0]
            for M in (1.0, 10.0, 100.0)
        ]
        assert spread[0] > spread[1] > spread[2]

    def test_capacity_guard(self, params):
        with pytest.raises(CapacityError):
            ensemble_run(100, 1.0, 1e-3, seed=0, params=params, step_budget=1e4)

    def test_validation(self, params):
        with pytest.raises(InvalidParameterError):
            ensemble_run(1, 1.0, 0.01, seed=0, params=params)
        with pytest.raises(InvalidStepError):
            ensemble_run(2, 1.0 + 0.003, 0.01, seed=0, params=params)
        with pytest.raises(InvalidStepError):
            ensemble_run(2, 1.0, 0.01, seed=0, params=params, sample_stride=7)


class TestIncrementAnomaly:
    def test_square_root_scaling(self, params):
        means, slope = increment_anomaly_scaling(
            params, (1e-2, 1e-3, 1e-4), n_traj=30, T=0.5, seed=2
        )
        assert slope == pytest.approx(0.5, abs=0.05)
        # the anomaly is |kick * dW|, a half-normal variable
        kick = 2.0 * params.sigma_inf_sq / params.hbar
        for dt, mean in zip((1e-2, 1e-3, 1e-4), means):
            expected = kick * math.sqrt(2.0 * params.D_p * dt / math.pi)
            assert mean == pytest.approx(expected, rel=0.05)
