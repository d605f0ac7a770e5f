"""Spatially correlated white-noise field and its lattice discretization.

The fluctuating potential increment dphi has covariance

    E[dphi(r) dphi(s)] = lam * hbar * G / |r - s| * dt

per time step dt.  On a lattice the kernel needs a diagonal
regularization; we use the average of 1/|r_c - s| over the cubic cell
centered at r_c, which is c0/h with c0 computed once by quadrature
(c0 ~ 2.38).  Ball-averaged gradients of a sampled field reproduce, node
density permitting, the isotropic momentum kicks with per-axis variance
D_p * dt used by the reduced single-ball dynamics.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    CoverageError,
    DegenerateKernelError,
    InvalidParameterError,
    InvalidStepError,
    KernelRegularizationError,
)

__all__ = [
    "NoiseStream",
    "force_increment",
    "Lattice",
    "LatticeField",
    "FieldKernel",
    "sample_field_lattice",
    "ball_weights",
    "ball_gradient_weights",
    "ball_averaged_force",
    "force_covariance",
    "cell_self_average",
]


class NoiseStream:
    """Counter-based random stream, reproducible by (seed, stream_index).

    Wraps a Philox generator keyed through numpy's SeedSequence spawn
    mechanism, so any stream of a run can be reconstructed in isolation:
    trajectories (and axes within a trajectory) get consecutive stream
    indices and never share draws.  ``counter`` records how many variates
    have been delivered, which makes draw accounting auditable when the
    compiled kernels consume the stream.
    """

    def __init__(self, seed, stream_index=0):
        if not isinstance(stream_index, (int, np.integer)) or stream_index < 0:
            raise InvalidParameterError("stream_index", f"must be a nonnegative int, got {stream_index!r}")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        self.counter = 0
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self.bit_generator = np.random.Philox(seq)
        self.generator = np.random.Generator(self.bit_generator)

    def standard_normal(self, size=None):
        self.counter += 1 if size is None else int(np.prod(size))
        return self.generator.standard_normal(size)

    def standard_exponential(self, size=None):
        self.counter += 1 if size is None else int(np.prod(size))
        return self.generator.standard_exponential(size)

    def uniform(self, size=None):
        self.counter += 1 if size is None else int(np.prod(size))
        return self.generator.random(size)

    def advance_counter(self, n):
        """Record ``n`` variates drawn externally (compiled kernels)."""
        self.counter += int(n)

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, stream_index={self.stream_index}, counter={self.counter})"


def force_increment(params, dt, stream):
    """One isotropic momentum kick dW with per-axis variance D_p*dt."""
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise InvalidStepError(f"dt must be positive and finite, got {dt!r}")
    return math.sqrt(params.D_p * dt) * stream.standard_normal(3)


@functools.lru_cache(maxsize=None)
def _unit_cube_self_average(n_base=64):
    """Average of 1/|r| over the unit cube centered at the origin.

    Midpoint rule on an even grid (no node hits the singularity) at two
    resolutions, Richardson-extrapolated; the integrable 1/r singularity
    leaves an O(h^2) error, so the extrapolation is reliable.
    """
    estimates = []
    for n in (n_base, 2 * n_base):
        c = (np.arange(n) + 0.5) / n - 0.5
        x, y, z = np.meshgrid(c, c, c, indexing="ij", sparse=True)
        r = np.sqrt(x * x + y * y + z * z)
        estimates.append(float(np.mean(1.0 / r)))
    coarse, fine = estimates
    return fine + (fine - coarse) / 3.0


def cell_self_average(h):
    """Diagonal regularization: cell average of 1/|r_c - s|, equals c0/h."""
    if not (h > 0 and math.isfinite(h)):
        raise InvalidParameterError("h", f"must be positive and finite, got {h!r}")
    return _unit_cube_self_average() / h


@dataclass(frozen=True)
class Lattice:
    """Regular cubic lattice: origin node, spacing h, shape (nx, ny, nz)."""

    origin: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidParameterError("h", f"must be positive and finite, got {self.h!r}")
        if len(self.shape) != 3 or any(int(n) < 1 for n in self.shape):
            raise InvalidParameterError("shape", f"need three positive extents, got {self.shape!r}")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    @property
    def n_nodes(self):
        nx, ny, nz = self.shape
        return nx * ny * nz

    def axes(self):
        return tuple(
            self.origin[i] + self.h * np.arange(self.shape[i]) for i in range(3)
        )

    def nodes(self):
        """All node coordinates, shape (n_nodes, 3), flat C order."""
        ax, ay, az = self.axes()
        x, y, z = np.meshgrid(ax, ay, az, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    @classmethod
    def covering_ball(cls, center, R, h, halo=2):
        """Smallest lattice covering the ball plus ``halo`` extra cells."""
        center = np.asarray(center, dtype=float)
        lo = center - R - halo * h
        n = [int(math.ceil((2 * R + 2 * halo * h) / h)) + 1] * 3
        return cls(origin=tuple(lo), h=h, shape=tuple(n))


@dataclass
class LatticeField:
    """One sampled potential increment dphi on a node set."""

    values: np.ndarray
    dt: float
    lattice: Lattice | None = None
    nodes_array: np.ndarray | None = None

    def nodes(self):
        if self.lattice is not None:
            return self.lattice.nodes()
        return self.nodes_array


class FieldKernel:
    """Cholesky factorization of the regularized 1/|r-s| kernel matrix.

    The matrix is built in unit scale (no lam*hbar*G/dt prefactor);
    sampling applies the physical scale.  ``h`` sets the diagonal
    regularization cell size.
    """

    def __init__(self, nodes, h):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float))
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise InvalidParameterError("nodes", f"expected (n, 3) array, got shape {nodes.shape}")
        if len(np.unique(nodes, axis=0)) != len(nodes):
            raise DegenerateKernelError("duplicate lattice nodes make the kernel singular")
        self.nodes = nodes
        self.h = float(h)
        diff = nodes[:, None, :] - nodes[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.fill_diagonal(dist, 1.0)
        matrix = 1.0 / dist
        np.fill_diagonal(matrix, cell_self_average(self.h))
        self.matrix = matrix
        try:
            self.cholesky = scipy.linalg.cholesky(matrix, lower=True)
        except scipy.linalg.LinAlgError:
            eigenvalues = scipy.linalg.eigvalsh(matrix)
            raise KernelRegularizationError(float(eigenvalues.min())) from None

    def sample(self, params, dt, stream, size=None):
        """Draw node values of dphi for one step of length dt.

        The white field averaged over a step has covariance
        Cov = (lam*hbar*G/dt) * K, so a force computed from the sample
        and applied for dt accumulates variance linearly in time.  With
        ``size`` given, returns (n_nodes, size) independent samples.
        """
        if not (dt > 0 and math.isfinite(dt)):
            raise InvalidStepError(f"dt must be positive and finite, got {dt!r}")
        n = len(self.nodes)
        scale = math.sqrt(params.lam * params.hbar * params.G / dt)
        if size is None:
            z = stream.standard_normal(n)
        else:
            z = stream.standard_normal((n, size))
        return scale * (self.cholesky @ z)

    def quadratic_form(self, u, v):
        """u^T K v in unit scale."""
        return float(u @ self.matrix @ v)


def sample_field_lattice(lattice, params, dt, stream, kernel=None):
    """Sample one potential increment on a lattice (or raw node set).

    Accepts a :class:`Lattice` or an (n, 3) node array.  Passing a
    prebuilt :class:`FieldKernel` skips refactorization; per-step loops
    should always do so.
    """
    if isinstance(lattice, Lattice):
        nodes = lattice.nodes()
        h = lattice.h
        grid = lattice
    else:
        nodes = np.asarray(lattice, dtype=float)
        diff = nodes[:, None, :] - nodes[None, :, :]
        off = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        off = off[~np.eye(len(nodes), dtype=bool)]
        h = float(off.min()) if len(off) else 1.0
        grid = None
    if kernel is None:
        kernel = FieldKernel(nodes, h)
    values = kernel.sample(params, dt, stream)
    if grid is not None:
        return LatticeField(values=values, dt=dt, lattice=grid)
    return LatticeField(values=values, dt=dt, nodes_array=nodes)


def _fraction_inside(centers, center, R, h, subdiv=4):
    """Fraction of each cubic cell inside the ball, by midpoint subsampling."""
    offsets = (np.arange(subdiv) + 0.5) / subdiv - 0.5
    ox, oy, oz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    sub = np.column_stack([ox.ravel(), oy.ravel(), oz.ravel()]) * h
    # (n_cells, subdiv^3, 3)
    pts = centers[:, None, :] + sub[None, :, :]
    d2 = np.sum((pts - center) ** 2, axis=2)
    return np.mean(d2 <= R * R, axis=1)


def ball_weights(lattice, center, R, subdiv=4):
    """Partial-volume quadrature weights of a ball on the lattice.

    Returns a flat (n_nodes,) array w with sum(w) ~ V_R; cells fully
    inside get h^3, boundary cells the covered fraction.  Raises
    :class:`CoverageError` when the ball (plus one cell of stencil halo)
    is not contained in the lattice or the node density is below 8 per
    diameter.
    """
    center = np.asarray(center, dtype=float)
    h = lattice.h
    if 2.0 * R / h < 8.0 - 1e-9:
        raise CoverageError(
            f"need at least 8 nodes per ball diameter, got {2.0 * R / h:.2f} "
            f"(spacing {h:g} for R={R:g})"
        )
    ax = lattice.axes()
    lo = [a[0] for a in ax]
    hi = [a[-1] for a in ax]
    # one-cell halo so the gradient stencil of every weighted node exists
    for i in range(3):
        if center[i] - R < lo[i] + h * (1 - 1e-9) or center[i] + R > hi[i] - h * (1 - 1e-9):
            raise CoverageError(
                "ball plus stencil halo exceeds the lattice along axis "
                f"{i}: center {center[i]:g}, R {R:g}, lattice [{lo[i]:g}, {hi[i]:g}]"
            )
    nx, ny, nz = lattice.shape
    w = np.zeros(lattice.n_nodes)
    # candidate cells: centers within R + half cell diagonal
    reach = R + 0.5 * h * math.sqrt(3.0)
    idx = []
    for i in range(3):
        a = ax[i]
        sel = np.nonzero(np.abs(a - center[i]) <= reach)[0]
        idx.append(sel)
    ix, iy, iz = np.meshgrid(idx[0], idx[1], idx[2], indexing="ij")
    flat = (ix * ny + iy) * nz + iz
    flat = flat.ravel()
    centers = np.column_stack([ax[0][ix.ravel()], ax[1][iy.ravel()], ax[2][iz.ravel()]])
    frac = _fraction_inside(centers, center, R, h)
    keep = frac > 0
    w[flat[keep]] = frac[keep] * h**3
    return w


def ball_gradient_weights(lattice, center, params):
    """Linear functionals c_i with F_i = c_i . values for the ball force.

    Central differences of the sampled potential, volume-averaged over
    the ball with partial-volume weights, normalized by -(M/V_R):
    F = -(M/V_R) * sum_a w_a grad_phi(r_a).  Shape (3, n_nodes).
    """
    w = ball_weights(lattice, center, params.R)
    nx, ny, nz = lattice.shape
    w3 = w.reshape(nx, ny, nz)
    h = lattice.h
    pref = -params.M / params.V_R / (2.0 * h)
    c = np.zeros((3, nx, ny, nz))
    # sum_a w_a (phi[a+e]-phi[a-e]) = sum_b phi_b (w[b-e]-w[b+e])
    c[0, 1:, :, :] += w3[:-1, :, :]
    c[0, :-1, :, :] -= w3[1:, :, :]
    c[1, :, 1:, :] += w3[:, :-1, :]
    c[1, :, :-1, :] -= w3[:, 1:, :]
    c[2, :, :, 1:] += w3[:, :, :-1]
    c[2, :, :, :-1] -= w3[:, :, 1:]
    return pref * c.reshape(3, -1)


def ball_averaged_force(field, center, params):
    """Ball-averaged gradient force on a probe at ``center``.

    F = -(M/V_R) * int_ball grad dphi, evaluated with central differences
    and partial-volume cell weights on the field's lattice.
    """
    if field.lattice is None:
        raise InvalidParameterError("field", "ball averaging needs a regular Lattice field")
    c = ball_gradient_weights(field.lattice, center, params)
    return c @ field.values


def _kernel_rows(nodes_a, nodes_b, h):
    """Regularized kernel block K[a, b] for two node sets of one lattice."""
    diff = nodes_a[:, None, :] - nodes_b[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    block = np.empty_like(dist)
    np.divide(1.0, dist, out=block, where=dist > 0)
    block[dist == 0] = cell_self_average(h)
    return block


def force_covariance(lattice, center_a, center_b, params, dt, block_rows=2048):
    """Exact lattice covariance matrix Cov[F_a, F_b], shape (3, 3).

    Evaluates c_a^T K c_b without materializing the full kernel matrix;
    rows of K are generated in blocks over the union support of the two
    weight sets.  With center_a == center_b this is the self-covariance
    whose diagonal should approach D_p/dt as the lattice refines.
    """
    ca = ball_gradient_weights(lattice, center_a, params)
    cb = ball_gradient_weights(lattice, center_b, params)
    support_a = np.nonzero(np.any(ca != 0, axis=0))[0]
    support_b = np.nonzero(np.any(cb != 0, axis=0))[0]
    nodes = lattice.nodes()
    na = nodes[support_a]
    nb = nodes[support_b]
    ca = ca[:, support_a]
    cb = cb[:, support_b]
    scale = params.lam * params.hbar * params.G / dt
    cov = np.zeros((3, 3))
    for start in range(0, len(support_a), block_rows):
        stop = min(start + block_rows, len(support_a))
        block = _kernel_rows(na[start:stop], nb, lattice.h)
        cov += ca[:, start:stop] @ (block @ cb.T)
    return scale * cov
