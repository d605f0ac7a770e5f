"""Full-scale acceptance runs, one test per criterion.

Every test computes its whole measurement first, prints a single
PASS/FAIL verdict line on the unbuffered stdout (so a suite run reads
as a ten-line checklist even under capture), and only then asserts.
Seeds and tolerances are pinned next to each criterion; two criteria
fail by design and their tests record the measured gap honestly rather
than widening the band.
"""

import dataclasses
import math
import os
import subprocess
import sys
import warnings

import numpy as np
import pytest
from scipy import stats

from collapselab import emergent, jumps, pointer, pressure, trajectories
from collapselab.core import make_probe_params
from collapselab.decoherence import (
    MassDensity,
    decoherence_rate,
    dp_norm_sq,
    two_gaussian_superposition,
)
from collapselab.errors import RegimeViolationWarning
from collapselab.noise import Lattice, NoiseStream, force_covariance


def _verdict(number, description, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number}: {status} - {description} ({detail})",
          file=sys.__stdout__, flush=True)


def test_criterion_01_momentum_diffusion(params):
    """Var[p] of 10^4 centroid trajectories equals lam hbar M w^2 T to 5%."""
    reports = trajectories.ensemble_run(10_000, 10.0, 0.01, 1, params, n_axes=1)
    measured = float(reports[-1].var_p[0])
    target = params.lam * params.hbar * params.M * params.omega_G**2 * 10.0
    rel = abs(measured / target - 1.0)
    _verdict(1, "centroid momentum diffusion Var[p] = lam hbar M w^2 T",
             rel <= 0.05, f"measured {measured:.4f}, target {target:.4f}, rel {rel:.4f}")
    assert rel <= 0.05


def test_criterion_02_coordinate_anomaly_exponent(params):
    """Mean |dx - (p/M) dt| scales as sqrt(dt) across three step decades."""
    means, exponent = trajectories.increment_anomaly_scaling(
        params, (1e-2, 1e-3, 1e-4))
    dev = abs(exponent - 0.5)
    _verdict(2, "coordinate increment anomaly exponent 1/2",
             dev <= 0.05, f"exponent {exponent:.4f}, means {np.round(means, 5)}")
    assert dev <= 0.05


def test_criterion_03_pointer_equilibrium_width(params):
    """Grid-solver width relaxes onto the Riccati fixed point within 1%."""
    result = pointer.run_grid_ensemble(
        100, 5.0, 0.002, 3, params, n_points=512, domain_width=30.0,
        sample_stride=25, initial=(0.0, 0.0, 1.0))
    sig2 = result.mean_sigma_sq()
    target = params.sigma_inf_sq
    final_rel = abs(float(sig2[-1]) / target - 1.0)
    tail_rel = float(np.max(np.abs(sig2[result.times >= 3.5] / target - 1.0)))
    # the printed closed form differs from the fixed point by exactly 4;
    # reported here, deliberately not asserted
    printed = 2.0 * params.hbar / (params.M * params.omega_G * math.sqrt(params.lam))
    ratio = printed / float(sig2[-1])
    passed = final_rel <= 0.01 and tail_rel <= 0.01
    _verdict(3, "grid pointer width reaches the Riccati fixed point", passed,
             f"final rel {final_rel:.2e}, tail rel {tail_rel:.2e}, "
             f"printed-form ratio {ratio:.3f} (reported, not asserted)")
    assert final_rel <= 0.01
    assert tail_rel <= 0.01


def test_criterion_04_ansatz_grid_pathwise(params):
    """Shared-noise ansatz and grid centroids stay within 10 dt w sigma_inf."""
    dt = 0.002
    n_steps = 5000
    scale = math.sqrt(params.D_p * dt)
    stream = NoiseStream(10)
    state = pointer.equilibrium_state(params, xbar=(0.0,), pbar=(0.0,))
    wf = pointer.gaussian_on_grid(params, n_points=1024, domain_width=20.0)
    bound = 10.0 * dt * params.omega_G * math.sqrt(params.sigma_inf_sq)
    worst = 0.0
    for step in range(1, n_steps + 1):
        dW = stream.standard_normal(1) * scale
        state = pointer.evolve_gaussian(state, dt, dW, params)
        wf = pointer.evolve_grid_sse(wf, dt, float(dW[0]), params)
        if step % 100 == 0:
            grid = pointer.moments(wf, params.hbar)
            worst = max(worst, abs(grid.xbar - float(state.xbar[0])))
    _verdict(4, "ansatz and grid agree pathwise under shared noise",
             worst <= bound, f"max |dxbar| {worst:.5f}, bound {bound:.5f} over t <= 10")
    assert worst <= bound


def test_criterion_05_unraveling_equivalence(params):
    """Jump vs diffusive ensembles: moment agreement and exponential waits.

    The two unravelings share the density-matrix second moment but split
    it differently between packet width and centroid spread: the jump
    operator preserves the initial parity, so its Var[xbar] stays frozen
    while the diffusive centroid wanders, and E[sigma^2] compensates.
    The per-component clauses therefore fail by design; the verdict
    records the density-level agreement alongside the honest gap.
    """
    n = 1000
    diffusive = pointer.run_grid_ensemble(
        n, 3.0, 0.002, 101, params, n_points=512, sample_stride=500)
    jump, _jump_stats = jumps.run_jump_ensemble(
        n, 3.0, 0.002, 102, params, n_points=512, domain_width=120.0,
        sample_stride=500)

    sig_d, sig_j = diffusive.mean_sigma_sq(), jump.mean_sigma_sq()
    se_sig = np.hypot(diffusive.sigma_sq_stderr(), jump.sigma_sq_stderr())
    sig_dev = np.abs(sig_d - sig_j) / se_sig

    var_d, var_j = diffusive.var_xbar(), jump.var_xbar()
    se_var = np.hypot(diffusive.var_xbar_stderr(), jump.var_xbar_stderr())
    var_dev = np.abs(var_d - var_j) / se_var

    # unraveling-independent check: <x^2> of the average state
    mean_d, mean_j = diffusive.mean_xbar(), jump.mean_xbar()
    m2_d = sig_d + var_d + mean_d**2
    m2_j = sig_j + var_j + mean_j**2
    se_m2_d = np.sqrt(diffusive.sigma_sq_stderr()**2 + diffusive.var_xbar_stderr()**2
                      + (2.0 * np.abs(mean_d) * np.sqrt(var_d / n))**2)
    se_m2_j = np.sqrt(jump.sigma_sq_stderr()**2 + jump.var_xbar_stderr()**2
                      + (2.0 * np.abs(mean_j) * np.sqrt(var_j / n))**2)
    m2_dev = np.abs(m2_d - m2_j) / np.hypot(se_m2_d, se_m2_j)

    waits, count, intensity = jumps.waiting_time_survey(30, 10.0, 0.002, 104, params)
    ks = stats.kstest(waits, "expon")
    balance = count / intensity

    sigma_ok = bool(np.all(sig_dev <= 3.0))
    var_ok = bool(np.all(var_dev <= 3.0))
    waits_ok = ks.pvalue > 0.01 and 0.9 <= balance <= 1.1 and count >= 500
    _verdict(5, "jump and diffusive unravelings match at the moment level",
             sigma_ok and var_ok and waits_ok,
             f"E[sig^2] dev/SE {np.round(sig_dev, 1)}, Var[xbar] dev/SE "
             f"{np.round(var_dev, 1)} at t=1,2,3; density-level <x^2> agrees to "
             f"{float(np.max(m2_dev)):.2f} SE; waits KS p {ks.pvalue:.3f}, "
             f"count/intensity {balance:.3f} over {count} jumps")

    assert count >= 500
    assert ks.pvalue > 0.01
    assert 0.9 <= balance <= 1.1
    assert sigma_ok and var_ok, (
        "per-component moments split differently between the unravelings "
        f"(E[sig^2] {np.max(sig_dev):.1f} SE, Var[xbar] {np.max(var_dev):.1f} SE) "
        f"although the density-level <x^2> agrees to {float(np.max(m2_dev)):.2f} SE")


def test_criterion_06_decoherence_rate(params, heavy_params):
    """Lattice quadrature matches the shell form; overlap decay matches Gamma."""
    worst = 0.0
    for d in (2.0, 2.5, 3.0, 4.0):
        a = MassDensity.uniform_ball(params.M, params.R)
        b = MassDensity.uniform_ball(params.M, params.R, center=(d, 0.0, 0.0))
        lattice = dp_norm_sq(a, b, params.G, method="lattice", resolution=24)
        analytic = dp_norm_sq(a, b, params.G, method="analytic")
        worst = max(worst, abs(lattice / analytic - 1.0))

    gamma = decoherence_rate(2.0, heavy_params)
    result = pointer.run_grid_ensemble(
        500, 0.02, 2e-5, 404, heavy_params, n_points=2048, domain_width=12.0,
        sample_stride=40, coherence_points=(-1.0, 1.0), recenter=False,
        initial=two_gaussian_superposition(2.0, a=100.0))
    coh = np.abs(result.coherence)
    fit = coh > 0.2 * coh[0]
    slope = np.polyfit(result.times[fit], np.log(coh[fit]), 1)[0]
    decay_rel = abs(-slope / gamma - 1.0)

    passed = worst <= 0.005 and decay_rel <= 0.10
    _verdict(6, "decoherence rate: lattice vs shell analytic and overlap decay",
             passed, f"worst lattice rel {worst:.2e} at res 24; "
             f"fitted decay {-slope:.2f} vs Gamma {gamma:.2f}, rel {decay_rel:.4f}")
    assert worst <= 0.005
    assert decay_rel <= 0.10


def test_criterion_07_force_covariance(params):
    """Ball-averaged field force covariance vs D_p/dt across refinements.

    The exact continuum self-covariance is entirely the contact part of
    the kernel, so the lattice ratio is a pure capture constant: with
    the cell-averaged diagonal, point-value off-diagonals, and the
    central-difference ball average it converges like 0.93 h/R from
    below.  At 16 nodes per diameter that leaves an 11.7% deficit, just
    outside the demanded 10%; asserted honestly rather than widened.
    """
    dt = 0.01
    target = params.D_p / dt
    deviations = {}
    for res in (8, 12, 16):
        h = 2.0 * params.R / res
        lattice = Lattice.covering_ball((0.0, 0.0, 0.0), params.R, h)
        cov = force_covariance(lattice, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), params, dt)
        diag = np.diag(cov)
        deviations[res] = float(np.max(np.abs(diag / target - 1.0)))
    devs = [deviations[r] for r in (8, 12, 16)]
    monotone = devs[0] > devs[1] > devs[2]
    passed = monotone and deviations[16] <= 0.10
    _verdict(7, "lattice field force covariance reproduces D_p", passed,
             f"ratio deficits {devs[0]:.4f} @8, {devs[1]:.4f} @12, "
             f"{devs[2]:.4f} @16 nodes/diameter, first order in h")
    assert monotone
    assert deviations[16] <= 0.10, (
        f"capture deficit {deviations[16]:.4f} at 16 nodes/diameter exceeds 0.10; "
        "the pinned quadrature scheme converges too slowly to meet the band here")


def test_criterion_08_emergent_newton(params):
    """Quasi-static pair runs recover G_eff = 2 lam G and conserve momentum."""
    details = []
    passed = True
    for lam in (0.5, 1.0):
        p = make_probe_params(params.M, params.R, lam)
        config = emergent.two_probe_config(p, 6.0)
        records = emergent.simulate_two_probe(
            config, 15.0, 0.01, 21, n_pairs=20_000, window=1.0,
            separations=(3.0, 4.0, 5.0))
        report = emergent.estimate_effective_G(records, config)
        target = 2.0 * lam * p.G
        rel = abs(report.strength / target - 1.0)
        drift = abs(float(records.total_momentum_drift))
        drift_bound = 3.0 * float(records.total_momentum_stderr)
        passed = passed and rel <= 0.07 and drift <= drift_bound
        details.append(f"lam {lam}: strength {report.strength:.3f} vs {target:.1f} "
                       f"(rel {rel:.3f}), |dp| {drift:.4f} <= {drift_bound:.4f}")
        assert rel <= 0.07, details[-1]
        assert drift <= drift_bound, details[-1]
    _verdict(8, "two-probe runs recover G_eff = 2 lam G and conserve momentum",
             passed, "; ".join(details))


def test_criterion_09_pressure_analogue():
    """Kinetic pressure estimate within 3% of nT, converging as 1/sqrt(N)."""
    gas = pressure.GasConfig(n=1e-3, m=1e-3, T_gas=1.0, M=1.0, R=1.0,
                             duration=7.0e5)
    with warnings.catch_warnings():
        # speed tails of the equilibrated ball graze the regime threshold
        warnings.simplefilter("ignore", RegimeViolationWarning)
        _traj, collisions = pressure.simulate_gas_brownian(gas, 42)
    nT = gas.n * gas.T_gas
    estimate = pressure.pressure_estimator(collisions, gas)
    ratio = estimate.pressure / nT

    stderrs, counts = [], []
    for k in (1000, 10_000, 100_000):
        cut = pressure.CollisionSet(
            collisions.times[:k], collisions.normals[:k],
            collisions.v_molecules[:k], collisions.dv[:k])
        sub = pressure.pressure_estimator(
            cut, dataclasses.replace(gas, duration=collisions.times[k - 1]))
        stderrs.append(sub.stderr / nT)
        counts.append(k)
    slope = float(np.polyfit(np.log(counts), np.log(stderrs), 1)[0])

    passed = (len(collisions) >= 100_000 and 0.97 <= ratio <= 1.03
              and -0.7 <= slope <= -0.3)
    _verdict(9, "gas pressure matches nT with 1/sqrt(N) convergence", passed,
             f"P/nT {ratio:.4f} over {len(collisions)} collisions; "
             f"stderr slope {slope:.3f} across N = 1e3..1e5")
    assert len(collisions) >= 100_000
    assert 0.97 <= ratio <= 1.03
    assert -0.7 <= slope <= -0.3


_CLI_RUNS = {
    "pointer": ["-o", "n_traj=2", "-o", "T=0.2", "-o", "stride=25",
                "--seed", "5"],
    "jump": ["-o", "n_traj=2", "-o", "T=0.5", "-o", "n_points=256",
             "--seed", "7"],
    "trajectory": ["-o", "n_traj=200", "-o", "T=1.0", "-o", "n_axes=1",
                   "--seed", "5"],
    "two-probe": ["-o", "n_pairs=150", "-o", "T=3.0", "-o", "dt=0.02",
                  "--seed", "6"],
    "decoherence": ["-o", "d_min=2.2", "-o", "d_max=4.2", "-o", "n_d=3",
                    "-o", "resolution=12", "-o", "method=lattice",
                    "--seed", "1"],
    "pressure": ["-o", "duration=8000", "--seed", "3"],
    "noise-check": ["-o", "n_samples=1200", "--seed", "2"],
}


def test_criterion_10_reproducibility(tmp_path):
    """Every subcommand is byte-identical across reruns and worker counts."""
    env = {k: v for k, v in os.environ.items() if k != "COLLAPSE_LAB_WORKERS"}

    def run(name, extra, out):
        cmd = [sys.executable, "-m", "collapselab.cli", name,
               *extra, "--out", str(tmp_path / out)]
        proc = subprocess.run(cmd, cwd=tmp_path, env=env,
                              capture_output=True, text=True)
        assert proc.returncode == 0, f"{name}: {proc.stderr}"
        return (tmp_path / out).read_bytes()

    mismatches = []
    for name, extra in _CLI_RUNS.items():
        base = run(name, extra, f"{name}-a.csv")
        again = run(name, extra, f"{name}-b.csv")
        if again != base:
            mismatches.append(f"{name}: rerun differs")
        two = run(name, extra + ["--workers", "2"], f"{name}-w2.csv")
        if two != base:
            mismatches.append(f"{name}: workers=2 differs")
    passed = not mismatches
    _verdict(10, "subcommands byte-identical across reruns and worker counts",
             passed, f"{len(_CLI_RUNS)} subcommands x (rerun, 2 workers)"
             + ("" if passed else "; " + "; ".join(mismatches)))
    assert not mismatches, mismatches
