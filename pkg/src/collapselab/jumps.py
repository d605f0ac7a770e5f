"""Jump-process unraveling: frictional flow broken by localizing jumps.

Between events the state follows the deterministic nonlinear flow (half
the diffusive damping, norm-compensated); jumps apply the real
multiplier (x - <x>)/sigma at the state-dependent rate
lam*M*omega_G^2*sigma^2/hbar.  Events are generated by the
integrated-rate method: cumulative intensity from a trapezoid rule
crosses pre-drawn unit-exponential thresholds, which removes the O(dt)
event-count bias of per-step Bernoulli sampling.  Event times are placed
by linear interpolation in intensity; the post-event state change lands
on the following step boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._splitstep import SplitStepEngine
from .core import characteristic_scales
from .errors import InvalidParameterError, ResolutionError
from .noise import NoiseStream
from .parallel import deterministic_map
from .pointer import (
    GridWavefunction,
    _check_dt,
    _chunk_ranges,
    _merge_moment_chunks,
    _new_sums,
    _sample_layout,
    _accumulate,
    _build_initial_row,
    moments,
)

__all__ = [
    "JumpTrajectory",
    "JumpStats",
    "drift_step",
    "jump_rate",
    "apply_jump",
    "simulate_jump_trajectory",
    "run_jump_ensemble",
    "waiting_time_survey",
    "flow_riccati_rhs",
    "flow_stationary_width",
]


def drift_step(wf, dt, params):
    """One Strang step of the deterministic frictional flow.

    Kinetic half step, multiplicative update
    exp[-(lam/2 hbar) M omega_G^2 ((x-xbar)^2 - sigma^2) dt] with exact
    renormalization, kinetic half step.  The sigma^2 counterterm cancels
    the damping's norm loss at linear order, leaving a positive residual
    drift of order (lam M omega_G^2 dt / 2 hbar)^2 (m4 - sigma^4).
    """
    _check_dt(dt, params)
    engine = SplitStepEngine(len(wf.psi), wf.x0, wf.dx, dt, params)
    psi = wf.psi[None, :].astype(complex)
    _, _, drift = engine.step_flow(psi)
    return GridWavefunction(psi=psi[0], x0=wf.x0, dx=wf.dx, norm_drift=float(drift[0]))


def jump_rate(wf, params):
    """State-dependent localization rate lam*M*omega_G^2*sigma^2/hbar."""
    if isinstance(wf, GridWavefunction):
        sigma_sq = moments(wf, hbar=params.hbar).sigma_sq
    else:
        sigma_sq = float(wf)
    return params.lam * params.M * params.omega_G**2 * sigma_sq / params.hbar


def apply_jump(wf):
    """Localizing jump psi -> (x - xbar) psi / sigma, renormalized.

    The pre-renormalization norm equals <(x-xbar)^2>/sigma^2 = 1 up to
    discretization, recorded on the result as norm_drift.
    """
    x = wf.x
    rho = wf.psi.real**2 + wf.psi.imag**2
    m0 = float(rho.sum() * wf.dx)
    xbar = float((rho @ x) * wf.dx / m0)
    sigma_sq = float((rho @ (x * x)) * wf.dx / m0 - xbar * xbar)
    sigma = math.sqrt(max(sigma_sq, 0.0))
    if sigma < 2.0 * wf.dx:
        raise ResolutionError(
            f"state width {sigma:.3g} below twice the grid spacing "
            f"{wf.dx:.3g}; the jump multiplier cannot be resolved"
        )
    psi = (x - xbar) * wf.psi / sigma
    norm = float(np.sum(psi.real**2 + psi.imag**2) * wf.dx)
    psi /= math.sqrt(norm)
    return GridWavefunction(psi=psi, x0=wf.x0, dx=wf.dx, norm_drift=norm / m0 - 1.0)


@dataclass
class JumpTrajectory:
    """One piecewise-deterministic trajectory with its event log.

    ``rate_path`` holds the jump rate after every integrator step (length
    n_steps), which lets the integrated intensity between events be
    reconstructed independently of the thresholds that generated them.
    """

    times: np.ndarray
    xbar: np.ndarray
    pbar: np.ndarray
    sigma_sq: np.ndarray
    jump_times: np.ndarray
    dt: float
    rate_path: np.ndarray
    rate_initial: float
    final: GridWavefunction

    @property
    def jump_count(self):
        return len(self.jump_times)

    @property
    def mean_interjump_time(self):
        if len(self.jump_times) < 2:
            return math.nan
        return float(np.mean(np.diff(self.jump_times)))

    def transformed_waiting_times(self):
        """Integrated rate between consecutive events, from rate_path.

        Under correct event generation these are standard-exponential.
        Trapezoid cumulative intensity on the step grid, linearly
        interpolated to the recorded event times.
        """
        rates = np.concatenate(([self.rate_initial], self.rate_path))
        cumulative = np.concatenate(
            ([0.0], np.cumsum(0.5 * (rates[1:] + rates[:-1]) * self.dt))
        )
        grid = self.dt * np.arange(len(cumulative))
        at_jumps = np.interp(self.jump_times, grid, cumulative)
        return np.diff(np.concatenate(([0.0], at_jumps)))


def _jump_rows(psi, x, dx, rows, sigma_sq):
    """Apply the localizing jump to the given rows of a batch in place."""
    for i in rows:
        sigma = math.sqrt(max(float(sigma_sq[i]), 0.0))
        if sigma < 2.0 * dx:
            raise ResolutionError(
                f"state width {sigma:.3g} below twice the grid spacing "
                f"{dx:.3g}; the jump multiplier cannot be resolved"
            )
        rho = psi[i].real**2 + psi[i].imag**2
        m0 = float(rho.sum() * dx)
        xbar = float((rho @ x) * dx / m0)
        row = (x - xbar) * psi[i] / sigma
        norm = float(np.sum(row.real**2 + row.imag**2) * dx)
        psi[i] = row / math.sqrt(norm)


def simulate_jump_trajectory(initial, T, dt, stream, params, sample_stride=None):
    """Integrate the jump unraveling from a GridWavefunction.

    Thresholds are drawn from ``stream`` one at a time as they are
    consumed, so trajectories with disjoint streams are independent and
    a trajectory is reproducible from (seed, stream_index) alone.
    """
    if not isinstance(initial, GridWavefunction):
        raise InvalidParameterError("initial", "expected a GridWavefunction")
    _check_dt(dt, params)
    n_steps, stride, times = _sample_layout(T, dt, sample_stride)
    engine = SplitStepEngine(len(initial.psi), initial.x0, initial.dx, dt, params)
    psi = initial.psi[None, :].astype(complex)

    rate_coeff = params.lam * params.M * params.omega_G**2 / params.hbar
    rho = psi[0].real**2 + psi[0].imag**2
    m0 = float(rho.sum() * engine.dx)
    xb = float((rho @ engine.x) * engine.dx / m0)
    sigma_sq = float((rho @ (engine.x * engine.x)) * engine.dx / m0 - xb * xb)
    rate_prev = rate_coeff * sigma_sq
    rate_initial = rate_prev

    intensity = 0.0
    threshold = float(stream.standard_exponential())
    jump_times = []
    rate_path = np.empty(n_steps)
    n_samples = n_steps // stride
    samp_x = np.empty(n_samples)
    samp_p = np.empty(n_samples)
    samp_s = np.empty(n_samples)

    for i in range(n_steps):
        _, sigma_arr, _ = engine.step_flow(psi)
        rate_new = rate_coeff * float(sigma_arr[0])
        increment = 0.5 * (rate_prev + rate_new) * dt
        while intensity + increment >= threshold and increment > 0.0:
            frac = (threshold - intensity) / increment
            jump_times.append(dt * i + frac * dt)
            _jump_rows(psi, engine.x, engine.dx, [0], sigma_arr)
            # re-measure the post-jump width; remaining step intensity
            # accrues at the new rate
            rho = psi[0].real**2 + psi[0].imag**2
            m0 = float(rho.sum() * engine.dx)
            xb = float((rho @ engine.x) * engine.dx / m0)
            s2 = float((rho @ (engine.x * engine.x)) * engine.dx / m0 - xb * xb)
            rate_new = rate_coeff * s2
            sigma_arr = np.array([s2])
            intensity = 0.0
            increment = (1.0 - frac) * dt * rate_new
            threshold = float(stream.standard_exponential())
        intensity += increment
        rate_prev = rate_new
        rate_path[i] = rate_new
        if (i + 1) % stride == 0:
            j = (i + 1) // stride - 1
            xbar, pbar, s2m, _ = engine.moments(psi)
            samp_x[j] = xbar[0]
            samp_p[j] = pbar[0]
            samp_s[j] = s2m[0]
            engine.check_domain(xbar, s2m)
    final = GridWavefunction(psi=psi[0], x0=initial.x0, dx=initial.dx)
    return JumpTrajectory(
        times=times,
        xbar=samp_x,
        pbar=samp_p,
        sigma_sq=samp_s,
        jump_times=np.asarray(jump_times),
        dt=dt,
        rate_path=rate_path,
        rate_initial=rate_initial,
        final=final,
    )


@dataclass
class JumpStats:
    """Ensemble-level event summary."""

    total_jumps: int
    n_traj: int
    duration: float

    @property
    def mean_rate(self):
        return self.total_jumps / (self.n_traj * self.duration)

    @property
    def mean_interjump_time(self):
        if self.total_jumps == 0:
            return math.nan
        return self.n_traj * self.duration / self.total_jumps


def _jump_chunk_task(args):
    (start, stop, seed, stream_offset, dt, n_steps, stride, params, n_points,
     domain_width, init_spec, keep_paths) = args
    b = stop - start
    n_samples = n_steps // stride
    engine = SplitStepEngine(n_points, -0.5 * domain_width, domain_width / n_points, dt, params)
    row = _build_initial_row(init_spec, engine.x, params)
    psi = np.tile(row, (b, 1))
    sums = _new_sums(n_samples)
    paths_x = np.empty((b, n_samples)) if keep_paths else None
    paths_p = np.empty((b, n_samples)) if keep_paths else None
    paths_s = np.empty((b, n_samples)) if keep_paths else None
    streams = [NoiseStream(seed, stream_offset + i) for i in range(start, stop)]

    rate_coeff = params.lam * params.M * params.omega_G**2 / params.hbar
    rho = psi.real**2 + psi.imag**2
    m0 = rho.sum(axis=1) * engine.dx
    xb = (rho @ engine.x) * engine.dx / m0
    s2 = (rho @ (engine.x * engine.x)) * engine.dx / m0 - xb * xb
    rate_prev = rate_coeff * s2
    intensity = np.zeros(b)
    thresholds = np.array([float(st.standard_exponential()) for st in streams])
    n_jumps = 0

    for i in range(n_steps):
        _, sigma_arr, drift = engine.step_flow(psi)
        rate_new = rate_coeff * sigma_arr
        increment = 0.5 * (rate_prev + rate_new) * dt
        crossing = np.nonzero(intensity + increment >= thresholds)[0]
        if len(crossing):
            _jump_rows(psi, engine.x, engine.dx, crossing, sigma_arr)
            n_jumps += len(crossing)
            rho = psi[crossing].real**2 + psi[crossing].imag**2
            m0 = rho.sum(axis=1) * engine.dx
            xb = (rho @ engine.x) * engine.dx / m0
            s2 = (rho @ (engine.x * engine.x)) * engine.dx / m0 - xb * xb
            sigma_arr = sigma_arr.copy()
            sigma_arr[crossing] = s2
            rate_new = rate_coeff * sigma_arr
            frac = (thresholds[crossing] - intensity[crossing]) / increment[crossing]
            increment = increment.copy()
            increment[crossing] = (1.0 - frac) * dt * rate_new[crossing]
            intensity[crossing] = 0.0
            for i_row in crossing:
                thresholds[i_row] = float(streams[i_row].standard_exponential())
        intensity += increment
        rate_prev = rate_new
        if (i + 1) % stride == 0:
            j = (i + 1) // stride - 1
            xbar, pbar, s2m, _ = engine.moments(psi)
            _accumulate(sums, j, xbar, pbar, s2m, drift)
            if keep_paths:
                paths_x[:, j] = xbar
                paths_p[:, j] = pbar
                paths_s[:, j] = s2m
            engine.check_domain(xbar, s2m)
    out = {"sums": sums, "extra": n_jumps}
    if keep_paths:
        out["paths_x"] = paths_x
        out["paths_p"] = paths_p
        out["paths_s"] = paths_s
    return out


def run_jump_ensemble(n_traj, T, dt, seed, params, *, n_points=1024,
                      domain_width=None, initial=None, sample_stride=None,
                      workers=1, chunk_size=128, stream_offset=0,
                      keep_paths=False):
    """Ensemble of jump trajectories; returns (EnsembleMoments, JumpStats).

    Same chunking, stream assignment and merge order as the diffusive
    grid ensemble, so results are worker-count independent.  A stream
    here only supplies the exponential thresholds (the flow between
    events is deterministic).
    """
    _check_dt(dt, params)
    if domain_width is None:
        domain_width = characteristic_scales(params).L_recommended
    n_steps, stride, times = _sample_layout(T, dt, sample_stride)
    tasks = [
        (s, e, seed, stream_offset, dt, n_steps, stride, params, int(n_points),
         float(domain_width), initial, keep_paths)
        for s, e in _chunk_ranges(n_traj, chunk_size)
    ]
    chunks = deterministic_map(_jump_chunk_task, tasks, workers)
    result, extras = _merge_moment_chunks(chunks, times, n_traj, keep_paths)
    stats = JumpStats(total_jumps=int(sum(extras)), n_traj=n_traj, duration=float(T))
    return result, stats


def _waits_task(args):
    seed, idx, T, dt, params, n_points, domain_width, sample_stride = args
    from .pointer import gaussian_on_grid

    wf = gaussian_on_grid(params, n_points=n_points, domain_width=domain_width)
    tr = simulate_jump_trajectory(
        wf, T, dt, NoiseStream(seed, idx), params, sample_stride=sample_stride
    )
    rates = np.concatenate(([tr.rate_initial], tr.rate_path))
    total_intensity = float(np.sum(0.5 * (rates[1:] + rates[:-1]) * dt))
    return tr.transformed_waiting_times(), tr.jump_count, total_intensity


def waiting_time_survey(n_traj, T, dt, seed, params, *, n_points=2048,
                        domain_width=None, workers=1, stream_offset=0):
    """Pooled event statistics over independent jump trajectories.

    Returns (waits, total_jumps, total_intensity): the rate-transformed
    waiting times of all events (standard-exponential under correct
    event generation), the pooled count, and the pooled integrated rate
    (count/intensity should be 1 within Monte Carlo error).
    """
    if domain_width is None:
        # Jump trajectories localize onto one peak and their centroid
        # then wanders far beyond the diffusive envelope; give them room.
        domain_width = 7.0 * characteristic_scales(params).L_recommended
    tasks = [
        (seed, stream_offset + i, T, dt, params, int(n_points),
         float(domain_width), None)
        for i in range(n_traj)
    ]
    outs = deterministic_map(_waits_task, tasks, workers)
    waits = np.concatenate([o[0] for o in outs]) if outs else np.empty(0)
    return waits, int(sum(o[1] for o in outs)), float(sum(o[2] for o in outs))


def flow_riccati_rhs(a, params):
    """Width flow of the frictional equation alone (no jumps, no noise).

    Half the diffusive constant term: the flow carries the bare damping
    lam M omega_G^2 / (2 hbar) without the Ito noise contribution.
    """
    a = np.asarray(a, dtype=complex)
    return (
        -2.0j * params.hbar / params.M * a * a
        + 0.5 * params.lam * params.M * params.omega_G**2 / params.hbar
    )


def flow_stationary_width(params):
    """Squared width where the frictional flow alone is stationary.

    Attracting root of flow_riccati_rhs: sqrt(2) times the equilibrium
    width of the full diffusive dynamics.
    """
    a = (params.M * params.omega_G / params.hbar) * np.sqrt(-0.25j * params.lam)
    return float(1.0 / (4.0 * a.real))
