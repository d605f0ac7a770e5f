"""Equilibrium-regime centroid trajectories and their moment laws.

Once the width has settled at sigma_inf, the centroid decouples into an
exactly linear drift-kick system per axis:

    xbar += (pbar/M) dt + (2 sigma_inf^2/hbar) dW,    pbar += dW,

with independent kicks dW ~ N(0, D_p dt) per axis.  Momentum performs a
free random walk and position inherits both the integrated walk and the
direct kick, giving the closed second moments implemented by
:func:`analytic_moments`:

    Var[p](t)    = D_p t
    Var[x](t)    = D_p (t^3/(3 M^2) + c t^2/M + c^2 t),    c = 2 sigma_inf^2/hbar
    Cov[x, p](t) = D_p (t^2/(2 M) + c t).

The c^2 t term is the direct signature of kick-correlated coordinate
noise: position gains variance linearly even before the integrated
momentum walk takes over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CapacityError, InvalidParameterError, InvalidStepError
from .noise import NoiseStream
from .parallel import deterministic_map

__all__ = [
    "CentroidState",
    "MomentReport",
    "step_centroid",
    "analytic_moments",
    "ensemble_run",
    "increment_anomaly_scaling",
]

# ensemble_run refuses jobs above this many trajectory-axis steps
DEFAULT_STEP_BUDGET = 5e9


@dataclass(frozen=True)
class CentroidState:
    """Centroid phase-space point, one entry per simulated axis."""

    xbar: np.ndarray
    pbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xbar", np.atleast_1d(np.asarray(self.xbar, dtype=float)))
        object.__setattr__(self, "pbar", np.atleast_1d(np.asarray(self.pbar, dtype=float)))
        if self.xbar.shape != self.pbar.shape:
            raise InvalidParameterError("state", "xbar and pbar must share one shape")


@dataclass(frozen=True)
class MomentReport:
    """Second moments of the centroid ensemble at one time."""

    t: float
    n_traj: int
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray
    stderr_var_x: np.ndarray
    stderr_var_p: np.ndarray
    stderr_cov_xp: np.ndarray


def step_centroid(state, dt, dW, params):
    """One Euler step of the equilibrium-regime centroid map.

    The coordinate update uses the pre-step momentum; both lines share
    the same kick vector dW.
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise InvalidStepError(f"dt must be positive and finite, got {dt!r}")
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape != state.xbar.shape:
        raise InvalidParameterError("dW", f"shape {dW.shape} does not match state {state.xbar.shape}")
    kick = 2.0 * params.sigma_inf_sq / params.hbar
    xbar = state.xbar + state.pbar / params.M * dt + kick * dW
    pbar = state.pbar + dW
    return CentroidState(xbar=xbar, pbar=pbar)


def analytic_moments(params, t, n_axes=3):
    """Exact second moments at time t from a point start at the origin."""
    if not (isinstance(t, (int, float)) and math.isfinite(t) and t >= 0):
        raise InvalidParameterError("t", f"must be nonnegative and finite, got {t!r}")
    c = 2.0 * params.sigma_inf_sq / params.hbar
    M = params.M
    var_p = params.D_p * t
    var_x = params.D_p * (t**3 / (3.0 * M * M) + c * t * t / M + c * c * t)
    cov_xp = params.D_p * (t * t / (2.0 * M) + c * t)
    zeros = np.zeros(n_axes)
    return MomentReport(
        t=float(t),
        n_traj=0,
        mean_x=zeros.copy(),
        mean_p=zeros.copy(),
        var_x=np.full(n_axes, var_x),
        var_p=np.full(n_axes, var_p),
        cov_xp=np.full(n_axes, cov_xp),
        stderr_var_x=zeros.copy(),
        stderr_var_p=zeros.copy(),
        stderr_cov_xp=zeros.copy(),
    )


def _centroid_chunk_task(args):
    (start, stop, seed, stream_offset, n_axes, n_steps, stride, dtm, kick,
     noise_scale, x0, p0) = args
    n_samples = n_steps // stride
    keys = ("x", "x2", "p", "p2", "xp")
    sums = {k: np.zeros((n_axes, n_samples)) for k in keys}
    for i in range(start, stop):
        for a in range(n_axes):
            stream = NoiseStream(seed, stream_offset + n_axes * i + a)
            xs, ps = _kernels.centroid_chain(
                stream, x0, p0, n_steps, dtm, kick, noise_scale, stride
            )
            sums["x"][a] += xs
            sums["x2"][a] += xs * xs
            sums["p"][a] += ps
            sums["p2"][a] += ps * ps
            sums["xp"][a] += xs * ps
    return sums


def ensemble_run(n_traj, T, dt, seed, params, *, n_axes=3, sample_stride=None,
                 workers=1, chunk_size=256, stream_offset=0,
                 step_budget=DEFAULT_STEP_BUDGET):
    """Moment reports of an equilibrium-regime centroid ensemble.

    Trajectory i, axis a consumes stream ``stream_offset + n_axes*i + a``
    exclusively, so any sub-ensemble reproduces exactly regardless of
    chunking or worker count.  Returns a list of :class:`MomentReport`
    at times stride*dt, 2*stride*dt, ..., T.
    """
    if n_traj < 2:
        raise InvalidParameterError("n_traj", f"need at least 2 trajectories, got {n_traj}")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise InvalidStepError(f"T={T!r} is not a positive integer number of steps of dt={dt!r}")
    if n_traj * n_steps * n_axes > step_budget:
        raise CapacityError(
            f"{n_traj} trajectories x {n_steps} steps x {n_axes} axes exceeds "
            f"the step budget {step_budget:.0f}"
        )
    if sample_stride is None:
        sample_stride = max(1, n_steps // 50)
    sample_stride = int(sample_stride)
    if n_steps % sample_stride:
        raise InvalidStepError(f"sample_stride={sample_stride} must divide n_steps={n_steps}")
    n_samples = n_steps // sample_stride
    kick = 2.0 * params.sigma_inf_sq / params.hbar
    noise_scale = math.sqrt(params.D_p * dt)
    tasks = [
        (s, e, seed, stream_offset, n_axes, n_steps, sample_stride,
         dt / params.M, kick, noise_scale, 0.0, 0.0)
        for s, e in [(s, min(s + chunk_size, n_traj)) for s in range(0, n_traj, chunk_size)]
    ]
    chunks = deterministic_map(_centroid_chunk_task, tasks, workers)
    total = {k: np.zeros((n_axes, n_samples)) for k in ("x", "x2", "p", "p2", "xp")}
    for out in chunks:
        for k in total:
            total[k] += out[k]
    n = n_traj
    reports = []
    for j in range(n_samples):
        t = (j + 1) * sample_stride * dt
        mean_x = total["x"][:, j] / n
        mean_p = total["p"][:, j] / n
        var_x = (total["x2"][:, j] / n - mean_x**2) * n / (n - 1)
        var_p = (total["p2"][:, j] / n - mean_p**2) * n / (n - 1)
        cov_xp = (total["xp"][:, j] / n - mean_x * mean_p) * n / (n - 1)
        # Gaussian-ensemble standard errors
        stderr_var_x = var_x * math.sqrt(2.0 / (n - 1))
        stderr_var_p = var_p * math.sqrt(2.0 / (n - 1))
        stderr_cov = np.sqrt((var_x * var_p + cov_xp**2) / (n - 1))
        reports.append(
            MomentReport(
                t=t, n_traj=n, mean_x=mean_x, mean_p=mean_p, var_x=var_x,
                var_p=var_p, cov_xp=cov_xp, stderr_var_x=stderr_var_x,
                stderr_var_p=stderr_var_p, stderr_cov_xp=stderr_cov,
            )
        )
    return reports


def increment_anomaly_scaling(params, dts, n_traj=100, T=1.0, seed=0):
    """Mean coordinate-increment anomaly |dx - (p/M) dt| versus dt.

    The anomaly is exactly |kick * dW|, so its ensemble mean scales as
    sqrt(dt); returns (means, fitted log-log exponent).
    """
    means = []
    for idx, dt in enumerate(dts):
        n_steps = int(round(T / dt))
        kick = 2.0 * params.sigma_inf_sq / params.hbar
        noise_scale = math.sqrt(params.D_p * dt)
        acc = 0.0
        count = 0
        for i in range(n_traj):
            stream = NoiseStream(seed, idx * n_traj + i)
            xs, ps = _kernels.centroid_chain(
                stream, 0.0, 0.0, n_steps, dt / params.M, kick, noise_scale, 1
            )
            dx = np.diff(np.concatenate(([0.0], xs)))
            p_prev = np.concatenate(([0.0], ps[:-1]))
            acc += np.abs(dx - p_prev * dt / params.M).sum()
            count += n_steps
        means.append(acc / count)
    slope = np.polyfit(np.log(np.asarray(dts, dtype=float)), np.log(means), 1)[0]
    return np.asarray(means), float(slope)
