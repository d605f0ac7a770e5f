"""Localized pointer states of a single ball and their stochastic dynamics.

Two representations of the same reduced 1D dynamics per axis:

* a Gaussian ansatz ``psi ~ exp(-a (x-xbar)^2 + i pbar (x-xbar)/hbar)``
  whose complex width parameter ``a`` obeys a closed Riccati flow while
  the centroid performs a stochastic drift-kick motion, and
* a direct grid solver (split-step spectral) for the full wave function.

Width flow.  Substituting the ansatz into the collapse equation and
collecting the deterministic part of the induced width dynamics under
the Ito reading (the squared noise term contributes a mean drift equal
to the bare damping) gives

    da/dt = -(2 i hbar / M) a^2 + lam * M * omega_G^2 / hbar .

Its attracting root has phase (1 - i)/sqrt(2), giving the squared
equilibrium width sigma_inf^2 = hbar / (2 M omega_G sqrt(lam)).  A
commonly quoted closed form is 2 hbar / (M omega_G sqrt(lam)); the two
differ by an O(1) factor (exactly 4), which
:func:`equilibrium_width_report` reports without asserting.

Centroid flow.  At the attracting width the centroid obeys

    dxbar = (pbar/M) dt + (2 sigma_inf^2 / hbar) dW
    dpbar = dW

with the same momentum increment dW (variance D_p dt) in both lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._splitstep import SplitStepEngine
from .core import characteristic_scales
from .errors import (
    CollapsedWidthError,
    DomainEscapeError,
    InvalidParameterError,
    InvalidStepError,
)
from .noise import NoiseStream
from .parallel import deterministic_map

__all__ = [
    "GaussianPointerState",
    "GridWavefunction",
    "Moments",
    "WidthReport",
    "riccati_rhs",
    "equilibrium_width",
    "equilibrium_width_report",
    "equilibrium_state",
    "evolve_gaussian",
    "gaussian_on_grid",
    "moments",
    "evolve_grid_sse",
    "EnsembleMoments",
    "run_gaussian_ensemble",
    "run_grid_ensemble",
]


# ---------------------------------------------------------------------------
# Gaussian ansatz


@dataclass(frozen=True)
class GaussianPointerState:
    """Per-axis Gaussian state: centroids and complex width parameters."""

    xbar: np.ndarray
    pbar: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xbar", np.atleast_1d(np.asarray(self.xbar, dtype=float)))
        object.__setattr__(self, "pbar", np.atleast_1d(np.asarray(self.pbar, dtype=float)))
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=complex)))
        if not (self.xbar.shape == self.pbar.shape == self.a.shape):
            raise InvalidParameterError("state", "xbar, pbar and a must share one shape")
        if np.any(self.a.real <= 0):
            raise CollapsedWidthError(f"Re(a) must be positive, got {self.a!r}")

    @property
    def sigma_sq(self):
        return 1.0 / (4.0 * self.a.real)


def riccati_rhs(a, params):
    """Deterministic width flow da/dt of the Gaussian ansatz.

    da/dt = -(2 i hbar/M) a^2 + lam M omega_G^2 / hbar.  The constant
    term carries a factor 2 relative to the bare damping coefficient
    lam M omega_G^2 / (2 hbar): in the Ito reading the mean of the
    squared noise term drives the width exactly as strongly as the
    damping itself.
    """
    a = np.asarray(a, dtype=complex)
    if np.any(a.real <= 0):
        raise CollapsedWidthError(f"Re(a) must be positive, got {a!r}")
    return (
        -2.0j * params.hbar / params.M * a * a
        + params.lam * params.M * params.omega_G**2 / params.hbar
    )


def _equilibrium_width_from_scales(M, lam, hbar, omega):
    """Attracting Riccati root -> squared width; used by core at build time."""
    a_inf = (M * omega / hbar) * np.sqrt(-0.5j * lam)
    # stationarity of the closed form, checked numerically
    residual = -2.0j * hbar / M * a_inf * a_inf + lam * M * omega**2 / hbar
    if abs(residual) > 1e-10 * abs(a_inf) * omega:
        raise AssertionError(f"fixed-point residual {abs(residual):.3e}")
    return float(1.0 / (4.0 * a_inf.real))


def _a_inf(params):
    return complex((params.M * params.omega_G / params.hbar) * np.sqrt(-0.5j * params.lam))


def equilibrium_width(params):
    """sigma_inf^2 = 1/(4 Re a_inf) at the attracting root of riccati_rhs."""
    return _equilibrium_width_from_scales(
        params.M, params.lam, params.hbar, params.omega_G
    )


@dataclass(frozen=True)
class WidthReport:
    """Equilibrium width next to the commonly quoted closed form."""

    sigma_inf_sq: float
    printed_form: float
    ratio_printed_to_fixed_point: float


def equilibrium_width_report(params):
    value = equilibrium_width(params)
    printed = 2.0 * params.hbar / (params.M * params.omega_G * math.sqrt(params.lam))
    return WidthReport(
        sigma_inf_sq=value,
        printed_form=printed,
        ratio_printed_to_fixed_point=printed / value,
    )


def equilibrium_state(params, xbar=(0.0, 0.0, 0.0), pbar=(0.0, 0.0, 0.0)):
    """Localized pointer state with all axes at the attracting width."""
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    a = np.full(xbar.shape, _a_inf(params))
    return GaussianPointerState(xbar=xbar, pbar=np.asarray(pbar, dtype=float), a=a)


def _check_dt(dt, params):
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise InvalidStepError(f"dt must be positive and finite, got {dt!r}")
    ceiling = characteristic_scales(params).dt_recommended
    if dt > ceiling * (1.0 + 1e-12):
        raise InvalidStepError(
            f"dt={dt:g} exceeds the recommended ceiling {ceiling:g} "
            "for this probe; see characteristic_scales"
        )


def evolve_gaussian(state, dt, dW, params):
    """One midpoint step of the ansatz dynamics with supplied kicks dW.

    The width advances by a deterministic midpoint Riccati step; centroid
    coefficients are evaluated at the midpoint width, so at a = a_inf the
    update is exactly dpbar = dW, dxbar = (pbar/M) dt + (2 sigma_inf^2 /
    hbar) dW with the pre-step pbar in the drift.
    """
    _check_dt(dt, params)
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape != state.a.shape:
        raise InvalidParameterError("dW", f"shape {dW.shape} does not match state {state.a.shape}")
    a_half = state.a + 0.5 * dt * riccati_rhs(state.a, params)
    if np.any(a_half.real <= 0):
        raise CollapsedWidthError("width left the stable half-plane at midpoint; reduce dt")
    a_new = state.a + dt * riccati_rhs(a_half, params)
    if np.any(a_new.real <= 0):
        raise CollapsedWidthError("width left the stable half-plane; reduce dt")
    sigma_sq_mid = 1.0 / (4.0 * a_half.real)
    slope_mid = -a_half.imag / a_half.real
    xbar = state.xbar + state.pbar / params.M * dt + (2.0 * sigma_sq_mid / params.hbar) * dW
    pbar = state.pbar + slope_mid * dW
    return replace(state, xbar=xbar, pbar=pbar, a=a_new)


# ---------------------------------------------------------------------------
# Grid representation


@dataclass
class GridWavefunction:
    """1D complex amplitudes on a uniform grid, unit discrete norm."""

    psi: np.ndarray
    x0: float
    dx: float
    norm_drift: float = 0.0

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(len(self.psi))

    @property
    def norm(self):
        return float(np.sum(self.psi.real**2 + self.psi.imag**2) * self.dx)


@dataclass(frozen=True)
class Moments:
    xbar: float
    pbar: float
    sigma_sq: float
    norm: float


def gaussian_on_grid(params, n_points=1024, domain_width=None, xbar=0.0, pbar=0.0, a=None):
    """Sample a Gaussian pointer state on a centered grid.

    Default width parameter is the attracting root a_inf; the default
    domain is the recommended 40 sigma_inf box.  The amplitude vector is
    normalized exactly in the discrete norm.
    """
    if domain_width is None:
        domain_width = characteristic_scales(params).L_recommended
    if a is None:
        a = _a_inf(params)
    a = complex(a)
    if a.real <= 0:
        raise CollapsedWidthError(f"Re(a) must be positive, got {a!r}")
    n = int(n_points)
    dx = domain_width / n
    x0 = xbar - 0.5 * domain_width
    x = x0 + dx * np.arange(n)
    X = x - xbar
    psi = np.exp(-a * X * X + 1j * pbar * X / params.hbar).astype(complex)
    psi /= math.sqrt(float(np.sum(psi.real**2 + psi.imag**2) * dx))
    return GridWavefunction(psi=psi, x0=x0, dx=dx)


def moments(wf, hbar=1.0):
    """(xbar, pbar, sigma_sq, norm) with pbar from the spectral derivative."""
    x = wf.x
    rho = wf.psi.real**2 + wf.psi.imag**2
    norm = float(rho.sum() * wf.dx)
    xbar = float((rho @ x) * wf.dx / norm)
    sigma_sq = float((rho @ (x * x)) * wf.dx / norm - xbar * xbar)
    spec = np.fft.fft(wf.psi)
    w = spec.real**2 + spec.imag**2
    k = 2.0 * math.pi * np.fft.fftfreq(len(wf.psi), d=wf.dx)
    pbar = hbar * float((w @ k) / w.sum())
    return Moments(xbar=xbar, pbar=pbar, sigma_sq=sigma_sq, norm=norm)


def evolve_grid_sse(wf, dt, dW, params):
    """One Strang step of the diffusive unraveling on the grid.

    Half kinetic, multiplicative collapse update
    exp[(dW/hbar)(x - xbar) - (D_p dt/hbar^2)(x - xbar)^2] with exact
    renormalization, half kinetic.  The pre-renormalization norm change
    is recorded on the returned state as ``norm_drift``.
    """
    _check_dt(dt, params)
    engine = SplitStepEngine(len(wf.psi), wf.x0, wf.dx, dt, params)
    psi = wf.psi[None, :].astype(complex)
    _, _, drift = engine.step_diffusive(psi, np.array([float(dW)]))
    out = GridWavefunction(psi=psi[0], x0=wf.x0, dx=wf.dx, norm_drift=float(drift[0]))
    m = moments(out, hbar=params.hbar)
    margin = 5.0 * math.sqrt(max(m.sigma_sq, 0.0))
    if m.xbar - wf.x0 < margin or (wf.x0 + wf.dx * (len(wf.psi) - 1)) - m.xbar < margin:
        raise DomainEscapeError(
            f"centroid {m.xbar:.4g} within 5 sigma of the grid edge; "
            "enlarge the domain or recenter"
        )
    return out


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class EnsembleMoments:
    """Per-sample-time ensemble accumulators over trajectories.

    Sums are accumulated in trajectory order within fixed-size chunks
    and merged in chunk order, so results are byte-stable for a given
    chunk layout regardless of worker count.
    """

    times: np.ndarray
    n_traj: int
    sum_x: np.ndarray
    sum_x2: np.ndarray
    sum_x3: np.ndarray
    sum_x4: np.ndarray
    sum_p: np.ndarray
    sum_p2: np.ndarray
    sum_sigma: np.ndarray
    sum_sigma2: np.ndarray
    sum_drift: np.ndarray
    paths_xbar: np.ndarray | None = None
    paths_pbar: np.ndarray | None = None
    paths_sigma: np.ndarray | None = None
    coherence: np.ndarray | None = None

    def mean_xbar(self):
        return self.sum_x / self.n_traj

    def mean_pbar(self):
        return self.sum_p / self.n_traj

    def mean_sigma_sq(self):
        return self.sum_sigma / self.n_traj

    def sigma_sq_stderr(self):
        n = self.n_traj
        var = self.sum_sigma2 / n - (self.sum_sigma / n) ** 2
        return np.sqrt(np.maximum(var, 0.0) / n)

    def var_xbar(self):
        n = self.n_traj
        m = self.sum_x / n
        return (self.sum_x2 / n - m * m) * n / (n - 1)

    def var_xbar_stderr(self):
        """Standard error of the sample variance, from the fourth moment."""
        n = self.n_traj
        m1 = self.sum_x / n
        m2 = np.maximum(self.sum_x2 / n - m1**2, 0.0)
        m4 = (
            self.sum_x4 / n
            - 4.0 * m1 * self.sum_x3 / n
            + 6.0 * m1**2 * self.sum_x2 / n
            - 3.0 * m1**4
        )
        var_of_var = np.maximum(m4 - (n - 3.0) / (n - 1.0) * m2**2, 0.0) / n
        return np.sqrt(var_of_var)

    def var_pbar(self):
        n = self.n_traj
        m = self.sum_p / n
        return (self.sum_p2 / n - m * m) * n / (n - 1)

    def mean_norm_drift(self):
        return self.sum_drift / self.n_traj


_SUM_KEYS = ("x", "x2", "x3", "x4", "p", "p2", "s", "s2", "d")


def _new_sums(n_samples):
    return {k: np.zeros(n_samples) for k in _SUM_KEYS}


def _accumulate(sums, j, xbar, pbar, sigma_sq, drift):
    sums["x"][j] += xbar.sum()
    sums["x2"][j] += (xbar**2).sum()
    sums["x3"][j] += (xbar**3).sum()
    sums["x4"][j] += (xbar**4).sum()
    sums["p"][j] += pbar.sum()
    sums["p2"][j] += (pbar**2).sum()
    sums["s"][j] += sigma_sq.sum()
    sums["s2"][j] += (sigma_sq**2).sum()
    sums["d"][j] += drift.sum()


def _merge_moment_chunks(chunks, times, n_traj, keep_paths):
    total = _new_sums(len(times))
    paths = {"x": [], "p": [], "s": []} if keep_paths else None
    coherence = None
    extras = []
    for out in chunks:
        for k in total:
            total[k] += out["sums"][k]
        if keep_paths:
            paths["x"].append(out["paths_x"])
            paths["p"].append(out["paths_p"])
            paths["s"].append(out["paths_s"])
        if out.get("coherence") is not None:
            coherence = out["coherence"] if coherence is None else coherence + out["coherence"]
        if "extra" in out:
            extras.append(out["extra"])
    result = EnsembleMoments(
        times=times,
        n_traj=n_traj,
        sum_x=total["x"],
        sum_x2=total["x2"],
        sum_x3=total["x3"],
        sum_x4=total["x4"],
        sum_p=total["p"],
        sum_p2=total["p2"],
        sum_sigma=total["s"],
        sum_sigma2=total["s2"],
        sum_drift=total["d"],
    )
    if keep_paths:
        result.paths_xbar = np.concatenate(paths["x"], axis=0)
        result.paths_pbar = np.concatenate(paths["p"], axis=0)
        result.paths_sigma = np.concatenate(paths["s"], axis=0)
    if coherence is not None:
        result.coherence = coherence / n_traj
    return result, extras


def _sample_layout(T, dt, sample_stride):
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise InvalidStepError(f"T={T!r} is not a positive integer number of steps of dt={dt!r}")
    if sample_stride is None:
        sample_stride = max(1, n_steps // 50)
    sample_stride = int(sample_stride)
    if n_steps % sample_stride:
        raise InvalidStepError(f"sample_stride={sample_stride} must divide n_steps={n_steps}")
    n_samples = n_steps // sample_stride
    times = dt * sample_stride * np.arange(1, n_samples + 1)
    return n_steps, sample_stride, times


def _chunk_ranges(n, chunk_size):
    return [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


# --- Gaussian-ansatz ensemble ----------------------------------------------


def _gaussian_chunk_task(args):
    (start, stop, seed, stream_offset, dt, n_steps, stride, kick, slope,
     sigma_samples, noise_scale, M, keep_paths, x0, p0) = args
    b = stop - start
    n_samples = n_steps // stride
    x = np.full(b, float(x0))
    p = np.full(b, float(p0))
    sums = _new_sums(n_samples)
    paths_x = np.empty((b, n_samples)) if keep_paths else None
    paths_p = np.empty((b, n_samples)) if keep_paths else None
    streams = [NoiseStream(seed, stream_offset + i) for i in range(start, stop)]
    zero = np.zeros(b)
    for j in range(n_samples):
        block = np.empty((b, stride))
        for i, st in enumerate(streams):
            block[i] = st.standard_normal(stride)
        block *= noise_scale
        base = j * stride
        for s in range(stride):
            dw = block[:, s]
            x += p * (dt / M) + kick[base + s] * dw
            p += slope[base + s] * dw
        _accumulate(sums, j, x, p, np.full(b, sigma_samples[j]), zero)
        if keep_paths:
            paths_x[:, j] = x
            paths_p[:, j] = p
    out = {"sums": sums}
    if keep_paths:
        out["paths_x"] = paths_x
        out["paths_p"] = paths_p
        out["paths_s"] = np.broadcast_to(sigma_samples, (b, n_samples)).copy()
    return out


def run_gaussian_ensemble(n_traj, T, dt, seed, params, *, initial=None,
                          sample_stride=None, workers=1, chunk_size=256,
                          stream_offset=0, keep_paths=False):
    """Ensemble of 1-axis Gaussian-ansatz trajectories.

    The width flow is deterministic and shared, so it is integrated once
    (midpoint rule) and only the centroids are simulated per trajectory.
    Trajectory i draws its kicks from stream ``stream_offset + i`` in
    blocks of ``sample_stride``, the same layout the grid ensemble uses,
    so matched runs see identical noise.
    """
    _check_dt(dt, params)
    n_steps, stride, times = _sample_layout(T, dt, sample_stride)
    if initial is None:
        initial = equilibrium_state(params, xbar=[0.0], pbar=[0.0])
    a = complex(initial.a[0])
    x0 = float(initial.xbar[0])
    p0 = float(initial.pbar[0])
    kick = np.empty(n_steps)
    slope = np.empty(n_steps)
    sigma_samples = np.empty(n_steps // stride)
    for i in range(n_steps):
        rhs = complex(riccati_rhs(a, params))
        a_half = a + 0.5 * dt * rhs
        if a_half.real <= 0:
            raise CollapsedWidthError("width left the stable half-plane; reduce dt")
        kick[i] = 2.0 / (4.0 * a_half.real) / params.hbar
        slope[i] = -a_half.imag / a_half.real
        a = a + dt * complex(riccati_rhs(a_half, params))
        if a.real <= 0:
            raise CollapsedWidthError("width left the stable half-plane; reduce dt")
        if (i + 1) % stride == 0:
            sigma_samples[(i + 1) // stride - 1] = 1.0 / (4.0 * a.real)
    noise_scale = math.sqrt(params.D_p * dt)
    tasks = [
        (s, e, seed, stream_offset, dt, n_steps, stride, kick, slope,
         sigma_samples, noise_scale, params.M, keep_paths, x0, p0)
        for s, e in _chunk_ranges(n_traj, chunk_size)
    ]
    chunks = deterministic_map(_gaussian_chunk_task, tasks, workers)
    result, _ = _merge_moment_chunks(chunks, times, n_traj, keep_paths)
    return result


# --- Grid ensemble ---------------------------------------------------------


def _build_initial_row(init_spec, x, params):
    """Normalized initial amplitudes from a state tuple or a callable."""
    if init_spec is None:
        a = _a_inf(params)
        psi = np.exp(-a * x * x)
    elif callable(init_spec):
        psi = np.asarray(init_spec(x, params), dtype=complex)
    else:
        xbar, pbar, a = init_spec
        X = x - xbar
        psi = np.exp(-complex(a) * X * X + 1j * pbar * X / params.hbar)
    psi = psi.astype(complex)
    dx = x[1] - x[0]
    norm = float(np.sum(psi.real**2 + psi.imag**2) * dx)
    if not (norm > 0 and math.isfinite(norm)):
        raise InvalidParameterError("initial", "initial state has nonpositive or nonfinite norm")
    return psi / math.sqrt(norm)


def _grid_chunk_task(args):
    (start, stop, seed, stream_offset, dt, n_steps, stride, params, n_points,
     domain_width, init_spec, keep_paths, recenter, coherence_points) = args
    b = stop - start
    n_samples = n_steps // stride
    engine = SplitStepEngine(n_points, -0.5 * domain_width, domain_width / n_points, dt, params)
    row = _build_initial_row(init_spec, engine.x, params)
    psi = np.tile(row, (b, 1))
    origin = np.zeros(b)
    sums = _new_sums(n_samples)
    paths_x = np.empty((b, n_samples)) if keep_paths else None
    paths_p = np.empty((b, n_samples)) if keep_paths else None
    paths_s = np.empty((b, n_samples)) if keep_paths else None
    coherence = np.zeros(n_samples, dtype=complex) if coherence_points is not None else None
    if coherence_points is not None:
        ia = int(np.argmin(np.abs(engine.x - coherence_points[0])))
        ib = int(np.argmin(np.abs(engine.x - coherence_points[1])))
    streams = [NoiseStream(seed, stream_offset + i) for i in range(start, stop)]
    noise_scale = math.sqrt(params.D_p * dt)
    for j in range(n_samples):
        block = np.empty((b, stride))
        for i, st in enumerate(streams):
            block[i] = st.standard_normal(stride)
        block *= noise_scale
        _, _, drift = engine.run_diffusive_window(psi, block)
        xbar_lab, pbar, sigma_sq, _ = engine.moments(psi, origin)
        _accumulate(sums, j, xbar_lab, pbar, sigma_sq, drift)
        if coherence is not None:
            coherence[j] = np.sum(psi[:, ia] * np.conj(psi[:, ib]))
        if keep_paths:
            paths_x[:, j] = xbar_lab
            paths_p[:, j] = pbar
            paths_s[:, j] = sigma_sq
        if recenter:
            origin = engine.recenter(psi, origin)
        engine.check_domain(xbar_lab - origin, sigma_sq)
    out = {"sums": sums}
    if keep_paths:
        out["paths_x"] = paths_x
        out["paths_p"] = paths_p
        out["paths_s"] = paths_s
    if coherence is not None:
        out["coherence"] = coherence
    return out


def run_grid_ensemble(n_traj, T, dt, seed, params, *, n_points=1024,
                      domain_width=None, initial=None, sample_stride=None,
                      workers=1, chunk_size=128, stream_offset=0,
                      keep_paths=False, recenter=True, coherence_points=None):
    """Ensemble of grid trajectories of the diffusive unraveling.

    ``initial`` is None (equilibrium pointer state at the origin), an
    ``(xbar, pbar, a)`` tuple, or a picklable callable
    ``f(x, params) -> psi``.  With ``coherence_points=(xa, xb)`` the
    ensemble mean of psi(xa) conj(psi(xb)) is recorded at sample times
    (requires ``recenter=False`` so grid points keep their lab meaning).
    """
    _check_dt(dt, params)
    if domain_width is None:
        domain_width = characteristic_scales(params).L_recommended
    if coherence_points is not None and recenter:
        raise InvalidParameterError("coherence_points", "coherence recording requires recenter=False")
    n_steps, stride, times = _sample_layout(T, dt, sample_stride)
    tasks = [
        (s, e, seed, stream_offset, dt, n_steps, stride, params, int(n_points),
         float(domain_width), initial, keep_paths, recenter, coherence_points)
        for s, e in _chunk_ranges(n_traj, chunk_size)
    ]
    chunks = deterministic_map(_grid_chunk_task, tasks, workers)
    result, _ = _merge_moment_chunks(chunks, times, n_traj, keep_paths)
    return result
