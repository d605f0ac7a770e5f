"""Emergent Newtonian attraction between collapsing probes.

Promoting the observable field (noise plus twice-lambda the mean-field
potential) to a classical potential makes two independent probes fall
toward each other with the pair force -2*lam*G*M^2/d^2: standard
Newtonian strength exactly at lam = 1/2.  This module implements the
mean-field potential, the analytic pair force, a two-probe Monte Carlo
in which each centroid follows its own collapse dynamics plus the
feedback force, and the least-squares extraction of the emergent
coupling from ensemble momentum drifts.

The default experiment is quasi-static: probe positions are re-pinned
to the configured separation at the start of every measurement window
and the feedback force is held at its pinned value, so the ensemble
mean of the relative momentum drift estimates the force directly while
the noise contributes only variance.  The free-fall mode recomputes the
force from the instantaneous centroids and aborts pairs that touch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParameterError,
    InvalidStepError,
    LowStatisticsError,
    OverlapError,
)
from .noise import FieldKernel, Lattice, ball_gradient_weights
from .parallel import deterministic_map
from .pointer import _chunk_ranges
from .noise import NoiseStream
from .trajectories import CentroidState

__all__ = [
    "ProbeEnsembleConfig",
    "TwoProbeRecords",
    "EffectiveCouplingReport",
    "mean_field_potential",
    "pair_force",
    "two_probe_config",
    "simulate_two_probe",
    "estimate_effective_G",
]

_NOISE_MODES = ("independent", "field_kernel")
_FEEDBACK_MODES = ("none", "mean_field")


@dataclass(frozen=True)
class ProbeEnsembleConfig:
    """Probe list with separation and the coupling switches."""

    probes: tuple
    d: float
    noise_correlation: str = "independent"
    feedback: str = "mean_field"

    def __post_init__(self):
        if len(self.probes) < 1:
            raise InvalidParameterError("probes", "need at least one probe")
        if self.noise_correlation not in _NOISE_MODES:
            raise InvalidParameterError(
                "noise_correlation", f"expected one of {_NOISE_MODES}, got {self.noise_correlation!r}"
            )
        if self.feedback not in _FEEDBACK_MODES:
            raise InvalidParameterError(
                "feedback", f"expected one of {_FEEDBACK_MODES}, got {self.feedback!r}"
            )
        if not (isinstance(self.d, (int, float)) and math.isfinite(self.d) and self.d > 0):
            raise InvalidParameterError("d", f"separation must be positive and finite, got {self.d!r}")
        if self.feedback == "mean_field":
            R = max(p.R for p, _ in self.probes)
            if self.d < 2.0 * R:
                raise InvalidParameterError(
                    "d", f"mean-field feedback needs d >= 2R, got d={self.d:g} with R={R:g}"
                )


def two_probe_config(params, d, *, noise_correlation="independent", feedback="mean_field"):
    """Standard two-probe setup: balls at rest, separated by d along x."""
    half = 0.5 * float(d)
    probes = (
        (params, CentroidState(xbar=(-half, 0.0, 0.0), pbar=(0.0, 0.0, 0.0))),
        (params, CentroidState(xbar=(half, 0.0, 0.0), pbar=(0.0, 0.0, 0.0))),
    )
    return ProbeEnsembleConfig(
        probes=probes, d=float(d), noise_correlation=noise_correlation, feedback=feedback
    )


def _ball_potential(s, M, R, G):
    """Uniform-ball potential profile, vectorized in the radius s."""
    s = np.asarray(s, dtype=float)
    outside = np.where(s > R, s, R)  # dummy radius inside, masked below
    phi = np.where(
        s >= R,
        -G * M / outside,
        -G * M * (3.0 * R * R - s * s) / (2.0 * R**3),
    )
    return phi


def mean_field_potential(probes, r):
    """Semi-classical potential of point-sharp probe centroids at r.

    ``probes`` is a :class:`ProbeEnsembleConfig` or an iterable of
    (params, center) pairs; ``r`` is one 3-vector or an (n, 3) array.
    Each probe contributes the exact uniform-ball potential around its
    centroid; contributions add linearly.
    """
    if isinstance(probes, ProbeEnsembleConfig):
        pairs = [(p, s.xbar) for p, s in probes.probes]
    else:
        pairs = [(p, np.asarray(c, dtype=float)) for p, c in probes]
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    points = r.reshape(1, 3) if single else r
    if points.ndim != 2 or points.shape[1] != 3:
        raise InvalidParameterError("r", f"expected a 3-vector or (n, 3) array, got shape {r.shape}")
    phi = np.zeros(len(points))
    for params, center in pairs:
        s = np.linalg.norm(points - np.asarray(center, dtype=float).reshape(3), axis=1)
        phi += _ball_potential(s, params.M, params.R, params.G)
    return float(phi[0]) if single else phi


def pair_force(x1, x2, params):
    """Emergent force on probe 1 from probe 2: -2*lam*G*M^2/d^2 toward 2.

    Exact by the shell theorem for d >= 2R; the overlapping branch is
    out of scope and raises.
    """
    x1 = np.asarray(x1, dtype=float).reshape(3)
    x2 = np.asarray(x2, dtype=float).reshape(3)
    diff = x1 - x2
    d = float(np.linalg.norm(diff))
    if not math.isfinite(d):
        raise InvalidParameterError("x1", "positions must be finite")
    if d < 2.0 * params.R:
        raise OverlapError(
            f"separation {d:g} below ball contact 2R={2.0 * params.R:g}; "
            "no analytic pair force for overlapping balls"
        )
    k = 2.0 * params.lam * params.G * params.M**2 / d**2
    return -k * diff / d


@dataclass
class TwoProbeRecords:
    """Per-window drift statistics of a two-probe ensemble.

    ``drift_mean[w]`` is the ensemble mean rate of change of the
    relative momentum component along the pair axis over window w
    (negative means attraction); ``separations[w]`` the pinned (or
    window-start) distance.  ``total_momentum_drift`` is the full-run
    mean drift rate of the total momentum along the axis, a
    conservation check.
    """

    times: np.ndarray
    separations: np.ndarray
    drift_mean: np.ndarray
    drift_stderr: np.ndarray
    n_pairs: int
    window: float
    total_momentum_drift: float
    total_momentum_stderr: float
    noise_correlation: str
    feedback: str
    lam: float
    M: float
    G: float
    aborts: tuple = ()
    force_samples: np.ndarray | None = None


@dataclass(frozen=True)
class EffectiveCouplingReport:
    """Fitted emergent coupling and the analytic target.

    ``strength`` is the measured pair-force coefficient divided by M^2
    (the directly observable coupling, 2*lam*G for the exact force);
    ``G_eff = strength / (2*lam)`` compares against the input G.
    """

    G_eff: float
    stderr: float
    n_trajectories: int
    fit_window: tuple
    strength: float
    target_strength: float


def _pair_chunk_task(args):
    (start, stop, seed, stream_offset, dt, n_steps_w, schedule, params, mode,
     noise_correlation, feedback, ehat, midpoint, p_init, kernel_h,
     record_forces) = args
    b = stop - start
    n_windows = len(schedule)
    streams = [NoiseStream(seed, stream_offset + i) for i in range(start, stop)]
    M, lam, G, hbar = params.M, params.lam, params.G, params.hbar
    kick = 2.0 * params.sigma_inf_sq / hbar
    noise_scale = math.sqrt(params.D_p * dt)
    coeff = 2.0 * lam * G * M * M if feedback == "mean_field" else 0.0
    ehat = np.asarray(ehat)
    midpoint = np.asarray(midpoint)

    x1 = np.empty((b, 3))
    x2 = np.empty((b, 3))
    p1 = np.tile(np.asarray(p_init[0]), (b, 1))
    p2 = np.tile(np.asarray(p_init[1]), (b, 1))
    alive = np.ones(b, dtype=bool)
    abort_times = {}

    kernel = None
    weights = None
    forces = None
    if noise_correlation == "field_kernel":
        kernel, weights = _pair_field_kernel(params, schedule[0], ehat, midpoint, kernel_h)
        if record_forces:
            forces = np.empty((b * n_windows * n_steps_w, 6))

    sums = {
        "rel": np.zeros(n_windows), "rel2": np.zeros(n_windows),
        "tot": np.zeros(n_windows), "tot2": np.zeros(n_windows),
        "n": np.zeros(n_windows, dtype=np.int64),
    }
    if mode == "quasi-static":
        free_running = False
    elif mode == "free":
        free_running = True
        x1[:] = midpoint + 0.5 * schedule[0] * ehat
        x2[:] = midpoint - 0.5 * schedule[0] * ehat
    else:
        raise InvalidParameterError("mode", f"unknown mode {mode!r}")

    sample_row = 0
    for w, d_w in enumerate(schedule):
        if not free_running:
            x1[:] = midpoint + 0.5 * d_w * ehat
            x2[:] = midpoint - 0.5 * d_w * ehat
            force_1 = -(coeff / d_w**2) * ehat
        rel_start = (p1 - p2) @ ehat
        tot_start = (p1 + p2) @ ehat
        if noise_correlation == "independent":
            # one block draw per pair per window; the per-step loop
            # below only slices it
            block = np.empty((b, 2, n_steps_w, 3))
            for i, st in enumerate(streams):
                block[i] = st.standard_normal((2, n_steps_w, 3))
            block *= noise_scale
        for j in range(n_steps_w):
            if noise_correlation == "field_kernel":
                # one field draw per pair, applied as a single matrix
                # product; column i matches kernel.sample on stream i
                n_nodes = len(kernel.nodes)
                z = np.empty((n_nodes, b))
                for i, st in enumerate(streams):
                    z[:, i] = st.standard_normal(n_nodes)
                scale = math.sqrt(lam * hbar * G / dt)
                f_all = weights @ (kernel.cholesky @ z) * scale
                dw1 = f_all[:3].T * dt
                dw2 = f_all[3:].T * dt
                if forces is not None:
                    forces[sample_row : sample_row + b] = f_all.T
                    sample_row += b
            else:
                dw1 = block[:, 0, j]
                dw2 = block[:, 1, j]
            if free_running:
                diff = x1 - x2
                dist = np.linalg.norm(diff, axis=1)
                touch = alive & (dist < 2.0 * params.R)
                if np.any(touch):
                    t_now = w * n_steps_w * dt  # window-resolution abort stamp
                    for i in np.nonzero(touch)[0]:
                        abort_times[start + i] = t_now
                    alive &= ~touch
                with np.errstate(invalid="ignore"):
                    f1 = -(coeff / dist**2)[:, None] * (diff / dist[:, None])
                f1[~alive] = 0.0
            else:
                f1 = force_1
            x1 += (p1 / M) * dt + kick * dw1
            x2 += (p2 / M) * dt + kick * dw2
            p1 += dw1 + f1 * dt
            p2 += dw2 - f1 * dt
        rel = (p1 - p2) @ ehat - rel_start
        tot = (p1 + p2) @ ehat - tot_start
        sums["rel"][w] = rel[alive].sum()
        sums["rel2"][w] = (rel[alive] ** 2).sum()
        sums["tot"][w] = tot[alive].sum()
        sums["tot2"][w] = (tot[alive] ** 2).sum()
        sums["n"][w] = int(alive.sum())
    out = {"sums": sums, "aborts": sorted(abort_times.items())}
    if forces is not None:
        out["forces"] = forces
    return out


def _pair_field_kernel(params, d, ehat, midpoint, h):
    """Kernel and force functionals on the union support of both balls."""
    c1 = midpoint + 0.5 * d * ehat
    c2 = midpoint - 0.5 * d * ehat
    span = 0.5 * d + params.R + 3.0 * h
    origin = tuple(midpoint[i] - span for i in range(3))
    n = [int(math.ceil(2.0 * span / h)) + 1] * 3
    lattice = Lattice(origin=origin, h=h, shape=tuple(n))
    w1 = ball_gradient_weights(lattice, c1, params)
    w2 = ball_gradient_weights(lattice, c2, params)
    support = np.nonzero(np.any(w1 != 0, axis=0) | np.any(w2 != 0, axis=0))[0]
    kernel = FieldKernel(lattice.nodes()[support], h)
    weights = np.vstack([w1[:, support], w2[:, support]])
    return kernel, weights


def simulate_two_probe(config, T, dt, seed, *, n_pairs=1, window=1.0,
                       mode="quasi-static", separations=None, workers=1,
                       chunk_size=2048, stream_offset=0, record_forces=False,
                       kernel_resolution=8):
    """Monte Carlo of independent probe pairs under the collapse dynamics.

    Each pair advances both centroids by the shared-noise Euler map
    (coordinate kick 2*sigma_inf^2/hbar times the momentum increment)
    plus the feedback force.  ``separations`` cycles a per-window
    pinning schedule in quasi-static mode (default: the configured d).
    Field-kernel noise draws both probes' forces from one lattice field
    sample per step and stores them when ``record_forces`` is set.
    """
    if len(config.probes) != 2:
        raise InvalidParameterError("probes", "the two-probe experiment needs exactly two probes")
    (params_a, state_a), (params_b, state_b) = config.probes
    if params_a is not params_b and params_a != params_b:
        raise InvalidParameterError("probes", "both probes must share one ProbeParams")
    params = params_a
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise InvalidStepError(f"dt must be positive and finite, got {dt!r}")
    if not (isinstance(T, (int, float)) and math.isfinite(T) and T > 0):
        raise InvalidParameterError("T", f"duration must be positive and finite, got {T!r}")
    if n_pairs < 1:
        raise InvalidParameterError("n_pairs", f"need at least one pair, got {n_pairs}")
    n_steps_w = max(1, int(round(window / dt)))
    window_actual = n_steps_w * dt
    n_windows = max(1, int(round(T / window_actual)))
    if separations is None:
        separations = (config.d,)
    schedule = tuple(float(separations[w % len(separations)]) for w in range(n_windows))
    if config.feedback == "mean_field":
        for d_w in schedule:
            if d_w < 2.0 * params.R:
                raise OverlapError(
                    f"pinned separation {d_w:g} below ball contact 2R={2.0 * params.R:g}"
                )
    if config.noise_correlation == "field_kernel":
        if mode != "quasi-static" or len(set(schedule)) != 1:
            raise InvalidParameterError(
                "noise_correlation",
                "field_kernel noise needs quasi-static mode and a single pinned separation",
            )
    diff = state_a.xbar - state_b.xbar
    d0 = float(np.linalg.norm(diff))
    if d0 <= 0:
        raise InvalidParameterError("probes", "initial centroids must be distinct")
    ehat = diff / d0
    midpoint = 0.5 * (state_a.xbar + state_b.xbar)
    kernel_h = 2.0 * params.R / kernel_resolution

    tasks = [
        (s, e, seed, stream_offset, dt, n_steps_w, schedule, params, mode,
         config.noise_correlation, config.feedback, ehat, midpoint,
         (state_a.pbar, state_b.pbar), kernel_h, bool(record_forces))
        for s, e in _chunk_ranges(n_pairs, chunk_size)
    ]
    outs = deterministic_map(_pair_chunk_task, tasks, workers)

    keys = ("rel", "rel2", "tot", "tot2", "n")
    total = {k: sum(o["sums"][k] for o in outs) for k in keys}
    n_w = total["n"]
    if np.any(n_w < 1):
        raise LowStatisticsError("every pair aborted before the last window")
    mean_rel = total["rel"] / n_w
    var_rel = np.maximum(total["rel2"] / n_w - mean_rel**2, 0.0)
    stderr_rel = np.sqrt(var_rel / n_w)
    mean_tot = total["tot"] / n_w
    var_tot = np.maximum(total["tot2"] / n_w - mean_tot**2, 0.0)
    # windows are independent: full-run drift pools window increments
    run_tot = float(mean_tot.sum() / (n_windows * window_actual))
    run_tot_stderr = float(math.sqrt(np.sum(var_tot / n_w)) / (n_windows * window_actual))
    aborts = tuple(ab for o in outs for ab in o["aborts"])
    force_samples = None
    if record_forces and config.noise_correlation == "field_kernel":
        force_samples = np.concatenate([o["forces"] for o in outs], axis=0)
    return TwoProbeRecords(
        times=window_actual * (1.0 + np.arange(n_windows)),
        separations=np.asarray(schedule),
        drift_mean=mean_rel / window_actual,
        drift_stderr=stderr_rel / window_actual,
        n_pairs=n_pairs,
        window=window_actual,
        total_momentum_drift=run_tot,
        total_momentum_stderr=run_tot_stderr,
        noise_correlation=config.noise_correlation,
        feedback=config.feedback,
        lam=params.lam,
        M=params.M,
        G=params.G,
        aborts=aborts,
        force_samples=force_samples,
    )


def estimate_effective_G(records, config=None):
    """Weighted least squares of the drift records against -2c/d^2.

    The relative momentum of a pair drifts at -2c/d^2 when each probe
    feels c/d^2; the fitted c gives strength = c/M^2 (target 2*lam*G)
    and G_eff = c / (2*lam*M^2) for direct comparison with G.  Window
    weights are 1/stderr^2; uniform when all stderr are equal.
    """
    if records.n_pairs < 100:
        raise LowStatisticsError(
            f"need at least 100 pairs for a coupling estimate, got {records.n_pairs}"
        )
    d = np.asarray(records.separations, dtype=float)
    m = np.asarray(records.drift_mean, dtype=float)
    s = np.asarray(records.drift_stderr, dtype=float)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InvalidParameterError("records", "drift stderr must be finite and positive")
    wts = np.ones_like(s) if np.all(s == s[0]) else 1.0 / s**2
    g = -2.0 / d**2
    denom = float(np.sum(wts * g * g))
    c_hat = float(np.sum(wts * g * m)) / denom
    if np.all(s == s[0]):
        c_var = float(s[0] ** 2) / denom if s[0] > 0 else 0.0
    else:
        c_var = 1.0 / denom
    c_sd = math.sqrt(c_var)
    lam, M, G = records.lam, records.M, records.G
    g_eff = c_hat / (2.0 * lam * M * M)
    g_sd = c_sd / (2.0 * lam * M * M)
    if g_eff == 0.0 or g_sd > 0.5 * abs(g_eff):
        raise LowStatisticsError(
            f"coupling fit is ill-conditioned: c = {c_hat:.3g} +- {c_sd:.3g}"
        )
    return EffectiveCouplingReport(
        G_eff=g_eff,
        stderr=g_sd,
        n_trajectories=records.n_pairs,
        fit_window=(float(d.min()), float(d.max())),
        strength=c_hat / (M * M),
        target_strength=2.0 * lam * G,
    )
