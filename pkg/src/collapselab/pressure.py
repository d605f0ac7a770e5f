"""Event-driven Monte Carlo of a rigid ball suspended in a thin ideal gas.

A heavy ball sits in a dilute gas of light molecules.  Collisions arrive
as a Poisson process at the stationary-ball flux rate; each event is an
elastic hard-sphere reflection that kicks the ball along the impact
normal, so the trajectory is a random broken line.  Summing the impulse
magnitudes over a long window recovers the ambient pressure:

    P_hat = M / (4 pi R^2 T) * sum_k |dv_k|

The molecule velocities are sampled as seen by a resting ball (uniform
impact point, flux-weighted Maxwell normal component, thermal tangential
components) while the recoil is retained, which is consistent in the
enforced m << M regime; a post-hoc check warns when the ball speed grows
beyond a tenth of the molecular mean speed.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import InvalidParameterError, LowStatisticsError, RegimeViolationWarning
from .noise import NoiseStream

__all__ = [
    "GasConfig",
    "CollisionRecord",
    "CollisionSet",
    "GasTrajectory",
    "PressureEstimate",
    "sample_collision",
    "simulate_gas_brownian",
    "pressure_estimator",
]

_MASS_RATIO_MAX = 1e-3
_SLOW_BALL_FACTOR = 0.1
_MIN_COLLISIONS = 1000
_PARALLEL_TOL = 1e-12


@dataclass(frozen=True)
class GasConfig:
    """Thin-gas environment for one rigid ball.

    ``n`` is the molecule number density, ``m`` the molecule mass,
    ``T_gas`` the temperature (k_B = 1), ``M`` and ``R`` the ball mass
    and radius, and ``duration`` the simulated window.  The molecule
    radius is absorbed into ``R``, so the collision cross section is
    pi R^2.  ``n = 0`` is allowed and means no gas at all.
    """

    n: float
    m: float
    T_gas: float
    M: float
    R: float
    duration: float

    def __post_init__(self):
        for name in ("n", "m", "T_gas", "M", "R", "duration"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParameterError(name, f"must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.n < 0:
            raise InvalidParameterError("n", f"must be nonnegative, got {self.n}")
        for name in ("m", "T_gas", "M", "R", "duration"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(name, f"must be positive, got {getattr(self, name)}")
        if self.m / self.M > _MASS_RATIO_MAX:
            raise InvalidParameterError(
                "m", f"mass ratio m/M = {self.m / self.M:.3g} exceeds {_MASS_RATIO_MAX:g}; "
                "the stationary-flux sampling needs light molecules")

    @property
    def mean_speed(self):
        """Mean molecular speed <v> = sqrt(8 T / pi m)."""
        return math.sqrt(8.0 * self.T_gas / (math.pi * self.m))

    @property
    def collision_rate(self):
        """Poisson rate Lambda = n * 4 pi R^2 * <v> / 4 on a resting ball."""
        return self.n * math.pi * self.R**2 * self.mean_speed

    @property
    def v_thermal_normal(self):
        # flux-weighted Maxwell: |v_n| = v_thermal_normal * sqrt(Exp(1))
        return math.sqrt(2.0 * self.T_gas / self.m)

    @property
    def v_thermal_tangent(self):
        return math.sqrt(self.T_gas / self.m)

    @property
    def reduced_mass(self):
        return self.m * self.M / (self.m + self.M)


def _frozen_vector(record, name, value):
    vec = np.ascontiguousarray(value, dtype=float)
    if vec.shape != (3,):
        raise InvalidParameterError(name, f"must be a 3-vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise InvalidParameterError(name, "must be finite")
    vec.flags.writeable = False
    object.__setattr__(record, name, vec)
    return vec


@dataclass(frozen=True)
class CollisionRecord:
    """One wall event: arrival time, impact normal, and the ball's kick.

    ``normal`` is the outward unit normal at the impact point,
    ``v_molecule`` the incoming molecule velocity, and ``dv`` the ball
    velocity jump.  Hard-sphere forces act along the surface normal, so
    ``dv`` is parallel to ``normal`` (checked to 1e-12) and never zero.
    """

    time: float
    normal: np.ndarray
    v_molecule: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        normal = _frozen_vector(self, "normal", self.normal)
        _frozen_vector(self, "v_molecule", self.v_molecule)
        dv = _frozen_vector(self, "dv", self.dv)
        if abs(np.linalg.norm(normal) - 1.0) > _PARALLEL_TOL:
            raise InvalidParameterError("normal", "must be a unit vector")
        magnitude = np.linalg.norm(dv)
        if magnitude == 0.0:
            raise InvalidParameterError("dv", "must be a nonzero kick")
        residual = np.linalg.norm(dv - (dv @ normal) * normal)
        if residual > _PARALLEL_TOL * magnitude:
            raise InvalidParameterError(
                "dv", f"must be parallel to the impact normal; transverse residual {residual:.3g}")


@dataclass(frozen=True)
class CollisionSet:
    """Columnar collision log; indexes like a list of ``CollisionRecord``."""

    times: np.ndarray       # (N,) absolute event times, nondecreasing
    normals: np.ndarray     # (N, 3) outward unit impact normals
    v_molecules: np.ndarray  # (N, 3) incoming molecule velocities
    dv: np.ndarray          # (N, 3) ball velocity jumps

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        n = times.shape[0]
        for name in ("normals", "v_molecules", "dv"):
            block = np.ascontiguousarray(getattr(self, name), dtype=float)
            if block.shape != (n, 3):
                raise InvalidParameterError(name, f"must have shape ({n}, 3), got {block.shape}")
            object.__setattr__(self, name, block)

    def __len__(self):
        return self.times.shape[0]

    def __getitem__(self, index):
        i = int(index)
        return CollisionRecord(
            time=self.times[i], normal=self.normals[i],
            v_molecule=self.v_molecules[i], dv=self.dv[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dv_magnitudes(self):
        return np.linalg.norm(self.dv, axis=1)


@dataclass(frozen=True)
class GasTrajectory:
    """Broken-line ball trajectory over one run.

    ``times`` holds the window endpoints plus every event time;
    ``positions`` the ball position at each of those knots; and
    ``velocities`` the constant velocity on each inter-knot segment
    (one row fewer than ``times``).  ``regime_ok`` is False when the
    ball speed exceeded a tenth of the molecular mean speed at any
    point, invalidating the stationary-flux sampling.
    """

    times: np.ndarray       # (K + 2,)
    positions: np.ndarray   # (K + 2, 3)
    velocities: np.ndarray  # (K + 1, 3)
    max_speed: float
    regime_ok: bool

    @property
    def n_collisions(self):
        return self.times.shape[0] - 2

    def time_averaged_velocity_sq(self):
        """Time average of each squared velocity component, shape (3,)."""
        dt_seg = np.diff(self.times)
        span = self.times[-1] - self.times[0]
        return (self.velocities**2 * dt_seg[:, None]).sum(axis=0) / span


@dataclass(frozen=True)
class PressureEstimate:
    pressure: float
    stderr: float
    n_collisions: int
    batches: int


def sample_collision(gas, ball_velocity, stream):
    """Draw one collision on a ball moving at ``ball_velocity``.

    The impact point is uniform on the sphere and the molecule velocity
    is flux-weighted Maxwell as seen by a resting ball; the recoil uses
    the actual relative velocity, so two-body momentum and energy are
    conserved exactly.  ``time`` in the returned record is the waiting
    time drawn at rate ``gas.collision_rate``.
    """
    if gas.collision_rate <= 0.0:
        raise InvalidParameterError("n", "collision rate is zero; no collisions to sample")
    v0 = np.ascontiguousarray(ball_velocity, dtype=float)
    if v0.shape != (3,):
        raise InvalidParameterError("ball_velocity", f"must be a 3-vector, got shape {v0.shape}")
    waits, normals, v_mol, dv, _ = kernels.gas_chain(
        stream, v0, 1, gas.collision_rate,
        gas.v_thermal_normal, gas.v_thermal_tangent,
        2.0 * gas.reduced_mass / gas.M)
    return CollisionRecord(time=waits[0], normal=normals[0], v_molecule=v_mol[0], dv=dv[0])


def simulate_gas_brownian(gas, seed, *, v0=None):
    """Run one gas-kicked trajectory; returns ``(GasTrajectory, CollisionSet)``.

    Collisions arrive as a Poisson process at the stationary-ball rate;
    between events the ball flies inertially and every recoil is kept.
    Events are drawn in bulk through the kernel backend and truncated to
    ``gas.duration``, so a given seed yields identical output regardless
    of how many top-up draws were needed.
    """
    stream = NoiseStream(seed)
    duration = gas.duration
    v_start = np.zeros(3) if v0 is None else np.ascontiguousarray(v0, dtype=float)
    if v_start.shape != (3,):
        raise InvalidParameterError("v0", f"must be a 3-vector, got shape {v_start.shape}")

    rate = gas.collision_rate
    parts = []
    if rate > 0.0:
        expected = rate * duration
        n_next = int(expected + 6.0 * math.sqrt(expected)) + 16
        v_current = v_start
        total_wait = 0.0
        while True:
            chunk = kernels.gas_chain(
                stream, v_current, n_next, rate,
                gas.v_thermal_normal, gas.v_thermal_tangent,
                2.0 * gas.reduced_mass / gas.M)
            parts.append(chunk[:4])
            total_wait += chunk[0].sum()
            v_current = chunk[4]
            if total_wait > duration:
                break
            n_next = max(16, int(0.1 * expected))

    if parts:
        waits = np.concatenate([p[0] for p in parts])
        event_times = np.cumsum(waits)
        keep = int(np.searchsorted(event_times, duration, side="right"))
        event_times = event_times[:keep]
        normals = np.concatenate([p[1] for p in parts])[:keep]
        v_molecules = np.concatenate([p[2] for p in parts])[:keep]
        dv = np.concatenate([p[3] for p in parts])[:keep]
    else:
        event_times = np.empty(0)
        normals = np.empty((0, 3))
        v_molecules = np.empty((0, 3))
        dv = np.empty((0, 3))

    records = CollisionSet(times=event_times, normals=normals, v_molecules=v_molecules, dv=dv)

    velocities = np.vstack([v_start, v_start + np.cumsum(dv, axis=0)])
    knots = np.concatenate(([0.0], event_times, [duration]))
    segments = np.diff(knots)
    positions = np.vstack([np.zeros(3), np.cumsum(velocities * segments[:, None], axis=0)])
    max_speed = float(np.linalg.norm(velocities, axis=1).max())
    regime_ok = max_speed <= _SLOW_BALL_FACTOR * gas.mean_speed
    if not regime_ok:
        warnings.warn(
            f"ball speed reached {max_speed:.3g}, above {_SLOW_BALL_FACTOR:g} of the "
            f"molecular mean speed {gas.mean_speed:.3g}; stationary-flux sampling "
            "is unreliable for this run", RegimeViolationWarning)
    trajectory = GasTrajectory(
        times=knots, positions=positions, velocities=velocities,
        max_speed=max_speed, regime_ok=regime_ok)
    return trajectory, records


def pressure_estimator(records, gas, *, batches=32):
    """Price the ambient pressure from the collision log.

    P_hat = M / (4 pi R^2 T) * sum |dv| with T = ``gas.duration``; the
    derivation averages the perpendicular surface forces over the whole
    window, hence the 1/T.  The standard error comes from batch means
    over equal time slices of the window, which absorbs the Poisson
    fluctuation of the event count as well as the kick-size spread.
    """
    if isinstance(records, CollisionSet):
        times = records.times
        magnitudes = records.dv_magnitudes
    else:
        items = list(records)
        times = np.array([r.time for r in items], dtype=float)
        magnitudes = np.array([np.linalg.norm(r.dv) for r in items], dtype=float)
    n = times.shape[0]
    if n < _MIN_COLLISIONS:
        raise LowStatisticsError(
            f"pressure estimate needs at least {_MIN_COLLISIONS} collisions, got {n}")
    if batches < 2:
        raise InvalidParameterError("batches", f"must be at least 2, got {batches}")

    duration = gas.duration
    prefactor = gas.M / (4.0 * math.pi * gas.R**2 * duration)
    pressure = prefactor * magnitudes.sum()

    slot = np.minimum((times / duration * batches).astype(int), batches - 1)
    batch_sums = np.bincount(slot, weights=magnitudes, minlength=batches)
    batch_means = prefactor * batches * batch_sums
    stderr = float(np.std(batch_means, ddof=1) / math.sqrt(batches))
    return PressureEstimate(
        pressure=float(pressure), stderr=stderr, n_collisions=int(n), batches=int(batches))
