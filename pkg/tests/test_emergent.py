import math

import numpy as np
import pytest
from scipy import integrate

from collapselab.core import make_probe_params
from collapselab.emergent import (
    EffectiveCouplingReport,
    ProbeEnsembleConfig,
    TwoProbeRecords,
    estimate_effective_G,
    mean_field_potential,
    pair_force,
    simulate_two_probe,
    two_probe_config,
)
from collapselab.errors import (
    InvalidParameterError,
    InvalidStepError,
    LowStatisticsError,
    OverlapError,
)
from collapselab.noise import Lattice, force_covariance
from collapselab.trajectories import CentroidState


class TestMeanFieldPotential:
    def test_exterior_coulomb_form(self, params):
        assert mean_field_potential([(params, (0.0, 0.0, 0.0))], (2.0, 0.0, 0.0)) == -0.5

    def test_center_value_against_radial_quadrature(self, params):
        # angular part is exact by symmetry; radial integral via quad
        rho = params.M / params.V_R
        radial, _ = integrate.quad(lambda s: 4.0 * math.pi * rho * s, 0.0, params.R)
        oracle = -params.G * radial
        assert oracle == pytest.approx(-1.5, rel=1e-12)
        value = mean_field_potential([(params, (0.0, 0.0, 0.0))], (0.0, 0.0, 0.0))
        assert value == pytest.approx(oracle, rel=1e-12)

    def test_superposition(self, params):
        pair = [(params, (-2.0, 0.0, 0.0)), (params, (2.0, 0.0, 0.0))]
        r = np.array([[0.0, 1.0, 0.5], [3.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        total = mean_field_potential(pair, r)
        singles = sum(mean_field_potential([probe], r) for probe in pair)
        assert np.allclose(total, singles, rtol=1e-12)
        assert total.shape == (3,)

    def test_accepts_config(self, params):
        cfg = two_probe_config(params, 4.0)
        at_mid = mean_field_potential(cfg, (0.0, 0.0, 0.0))
        assert at_mid == pytest.approx(2.0 * (-1.0 / 2.0), rel=1e-12)

    def test_rejects_bad_points(self, params):
        with pytest.raises(InvalidParameterError):
            mean_field_potential([(params, (0.0, 0.0, 0.0))], np.zeros((2, 4)))


class TestPairForce:
    def test_reference_magnitude_and_direction(self, params):
        f = pair_force((0.0, 0.0, 0.0), (4.0, 0.0, 0.0), params)
        assert f == pytest.approx([0.0625, 0.0, 0.0])
        f_side = pair_force((0.0, 0.0, 0.0), (0.0, -4.0, 0.0), params)
        assert f_side == pytest.approx([0.0, -0.0625, 0.0])

    def test_vanishing_coupling(self):
        off = make_probe_params(1.0, 1.0, 1e-30)
        f = pair_force((0.0, 0.0, 0.0), (4.0, 0.0, 0.0), off)
        assert np.all(np.abs(f) < 1e-25)

    def test_third_law(self, params):
        x1, x2 = (0.3, -1.0, 2.0), (3.0, 1.5, -0.5)
        f12 = pair_force(x1, x2, params)
        f21 = pair_force(x2, x1, params)
        assert np.array_equal(f12, -f21)

    def test_overlap_raises(self, params):
        with pytest.raises(OverlapError):
            pair_force((0.0, 0.0, 0.0), (1.5, 0.0, 0.0), params)


class TestConfigValidation:
    def test_requires_probes(self, params):
        with pytest.raises(InvalidParameterError):
            ProbeEnsembleConfig(probes=(), d=4.0)

    def test_rejects_unknown_modes(self, params):
        with pytest.raises(InvalidParameterError):
            two_probe_config(params, 4.0, noise_correlation="shared")
        with pytest.raises(InvalidParameterError):
            two_probe_config(params, 4.0, feedback="full")

    def test_rejects_overlapping_mean_field(self, params):
        with pytest.raises(InvalidParameterError):
            two_probe_config(params, 1.5)
        # without feedback the overlap constraint does not apply
        two_probe_config(params, 1.5, feedback="none")

    def test_rejects_bad_separation(self, params):
        with pytest.raises(InvalidParameterError):
            two_probe_config(params, -4.0)


@pytest.fixture(scope="module")
def quasi_static_records(params):
    cfg = two_probe_config(params, 4.0)
    return simulate_two_probe(cfg, 10.0, 0.01, seed=7, n_pairs=2000, window=1.0)


class TestSimulateTwoProbe:
    def test_quasi_static_drift_matches_pair_force(self, params, quasi_static_records):
        rec = quasi_static_records
        target = -2.0 * 0.0625  # both probes contribute to the relative drift
        pooled = float(np.mean(rec.drift_mean))
        stderr = float(np.sqrt(np.sum(rec.drift_stderr**2)) / len(rec.drift_mean))
        assert abs(pooled - target) < 3.0 * stderr
        assert pooled == pytest.approx(target, rel=0.15)

    def test_momentum_conservation(self, quasi_static_records):
        rec = quasi_static_records
        assert abs(rec.total_momentum_drift) < 3.0 * rec.total_momentum_stderr

    def test_no_feedback_means_no_drift(self, params):
        cfg = two_probe_config(params, 4.0, feedback="none")
        rec = simulate_two_probe(cfg, 4.0, 0.02, seed=21, n_pairs=800, window=1.0)
        pooled = float(np.mean(rec.drift_mean))
        stderr = float(np.sqrt(np.sum(rec.drift_stderr**2)) / len(rec.drift_mean))
        assert abs(pooled) < 3.0 * stderr

    def test_separation_schedule_cycles(self, params):
        cfg = two_probe_config(params, 4.0)
        rec = simulate_two_probe(
            cfg, 4.0, 0.02, seed=3, n_pairs=500, window=1.0, separations=(3.0, 4.0)
        )
        assert np.array_equal(rec.separations, [3.0, 4.0, 3.0, 4.0])
        report = estimate_effective_G(rec)
        assert report.fit_window == (3.0, 4.0)
        assert 0.5 < report.G_eff < 1.5

    def test_free_fall_aborts_on_contact(self):
        tight = make_probe_params(1.0, 1.0, 5.0)
        cfg = two_probe_config(tight, 2.2)
        rec = simulate_two_probe(cfg, 2.0, 0.005, seed=3, n_pairs=32, window=0.5, mode="free")
        assert len(rec.aborts) >= 1
        for index, t_abort in rec.aborts:
            assert 0 <= index < 32
            assert 0.0 <= t_abort <= 2.0
        assert np.all(np.isfinite(rec.drift_mean))

    def test_worker_split_is_invisible(self, params):
        cfg = two_probe_config(params, 4.0)
        kwargs = dict(T=2.0, dt=0.02, seed=9, n_pairs=64, window=1.0, chunk_size=16)
        one = simulate_two_probe(cfg, workers=1, **kwargs)
        two = simulate_two_probe(cfg, workers=2, **kwargs)
        assert np.array_equal(one.drift_mean, two.drift_mean)
        assert np.array_equal(one.drift_stderr, two.drift_stderr)
        assert one.total_momentum_drift == two.total_momentum_drift

    def test_validation(self, params):
        cfg = two_probe_config(params, 4.0)
        with pytest.raises(InvalidStepError):
            simulate_two_probe(cfg, 1.0, 0.0, seed=1)
        with pytest.raises(InvalidParameterError):
            simulate_two_probe(cfg, -1.0, 0.01, seed=1)
        with pytest.raises(InvalidParameterError):
            simulate_two_probe(cfg, 1.0, 0.01, seed=1, n_pairs=0)
        with pytest.raises(OverlapError):
            simulate_two_probe(cfg, 2.0, 0.01, seed=1, window=1.0, separations=(4.0, 1.0))
        with pytest.raises(InvalidParameterError):
            one_probe = ProbeEnsembleConfig(
                probes=((params, CentroidState(xbar=(0.0, 0.0, 0.0), pbar=(0.0, 0.0, 0.0))),),
                d=4.0,
            )
            simulate_two_probe(one_probe, 1.0, 0.01, seed=1)

    def test_independent_noise_records_no_forces(self, params):
        cfg = two_probe_config(params, 4.0)
        rec = simulate_two_probe(cfg, 0.5, 0.05, seed=2, n_pairs=4, record_forces=True)
        assert rec.force_samples is None


class TestFieldKernelNoise:
    def pair_lattice(self, params, d, resolution):
        h = 2.0 * params.R / resolution
        span = 0.5 * d + params.R + 3.0 * h
        n = int(math.ceil(2.0 * span / h)) + 1
        return Lattice(origin=(-span, -span, -span), h=h, shape=(n, n, n))

    def test_momentum_update_matches_recorded_field_forces(self, params):
        cfg = two_probe_config(params, 4.0, noise_correlation="field_kernel", feedback="none")
        rec = simulate_two_probe(
            cfg, 0.5, 0.05, seed=13, n_pairs=1, window=0.5, record_forces=True
        )
        f = rec.force_samples
        assert f.shape == (10, 6)
        # probe 1 sits at -d/2, so the pair axis points along -x
        rel = float(np.sum((f[:, 3] - f[:, 0]) * 0.05))
        assert rec.drift_mean[0] * rec.window == pytest.approx(rel, rel=1e-12)

    def test_cross_covariance_matches_lattice_prediction(self, params):
        d, dt = 4.0, 0.05
        lattice = self.pair_lattice(params, d, 8)
        c1 = np.array([0.5 * d, 0.0, 0.0])
        pred = force_covariance(lattice, c1, -c1, params, dt)
        var = force_covariance(lattice, c1, c1, params, dt)
        assert pred[0, 0] < 0  # common field pushes the pair coherently

        cfg = two_probe_config(params, d, noise_correlation="field_kernel", feedback="none")
        rec = simulate_two_probe(
            cfg, 24.0, dt, seed=11, n_pairs=256, window=24.0,
            record_forces=True, chunk_size=64,
        )
        f = rec.force_samples
        cross = float(np.mean(f[:, 0] * f[:, 3]) - np.mean(f[:, 0]) * np.mean(f[:, 3]))
        assert cross == pytest.approx(pred[0, 0], rel=0.15)
        assert float(np.var(f[:, 0])) == pytest.approx(var[0, 0], rel=0.05)

    def test_field_kernel_needs_single_pinned_distance(self, params):
        cfg = two_probe_config(params, 4.0, noise_correlation="field_kernel")
        with pytest.raises(InvalidParameterError):
            simulate_two_probe(cfg, 1.0, 0.05, seed=1, mode="free")
        with pytest.raises(InvalidParameterError):
            simulate_two_probe(cfg, 2.0, 0.05, seed=1, window=1.0, separations=(3.0, 4.0))


class TestEffectiveCoupling:
    def synthetic(self, params, spread=1e-6):
        d = np.array([2.0, 3.0, 4.0, 5.0])
        c = 2.0 * params.lam * params.G * params.M**2
        return TwoProbeRecords(
            times=np.arange(1.0, 5.0),
            separations=d,
            drift_mean=-2.0 * c / d**2,
            drift_stderr=np.full(4, spread),
            n_pairs=1000,
            window=1.0,
            total_momentum_drift=0.0,
            total_momentum_stderr=spread,
            noise_correlation="independent",
            feedback="mean_field",
            lam=params.lam,
            M=params.M,
            G=params.G,
        )

    def test_recovers_exact_generator(self, params):
        report = estimate_effective_G(self.synthetic(params))
        assert isinstance(report, EffectiveCouplingReport)
        assert report.G_eff == pytest.approx(params.G, rel=1e-10)
        assert report.strength == pytest.approx(report.target_strength, rel=1e-10)
        assert report.fit_window == (2.0, 5.0)

    def test_full_simulation_estimate(self, params, quasi_static_records):
        report = estimate_effective_G(quasi_static_records)
        assert report.n_trajectories == 2000
        assert report.stderr < 0.1
        assert abs(report.G_eff - 1.0) < 3.0 * report.stderr
        assert report.target_strength == pytest.approx(1.0)

    def test_mass_squared_scaling(self):
        c = {}
        for M in (1.0, 2.0):
            p = make_probe_params(M, 1.0, 0.5)
            rec = simulate_two_probe(
                two_probe_config(p, 2.0), 10.0, 0.01, seed=17, n_pairs=1000, window=1.0
            )
            report = estimate_effective_G(rec)
            assert report.strength == pytest.approx(1.0, rel=0.1)
            c[M] = report.strength * M**2
        assert c[2.0] / c[1.0] == pytest.approx(4.0, rel=0.1)

    def test_too_few_pairs(self, params):
        rec = self.synthetic(params)
        rec.n_pairs = 50
        with pytest.raises(LowStatisticsError):
            estimate_effective_G(rec)

    def test_ill_conditioned_fit(self, params):
        with pytest.raises(LowStatisticsError):
            estimate_effective_G(self.synthetic(params, spread=100.0))
