"""Numpy reference implementations of the hot-loop kernels.

Arithmetic is arranged so the compiled twin can reproduce it bit for bit
where that is feasible: sequential accumulations map to
``np.add.accumulate`` (strictly left-to-right for float64) and fused
expressions keep the same operation order.  The grid step uses
vectorized transcendentals, so cross-backend agreement there is at
rounding level rather than bit level.
"""

from __future__ import annotations

import math

import numpy as np


def centroid_chain(stream, x0, p0, n_steps, dt_over_m, kick, noise_scale, stride):
    """Advance one centroid axis by n_steps Euler steps; sample each stride.

    Per step: dW = noise_scale * N(0,1); x += p*dt_over_m + kick*dW;
    p += dW (x update uses the pre-step p).  Returns (x_samples,
    p_samples) holding the state after steps stride, 2*stride, ...
    """
    gen = stream.generator
    dw = gen.standard_normal(n_steps)
    stream.advance_counter(n_steps)
    dw *= noise_scale
    p_path = np.add.accumulate(np.concatenate(([p0], dw)))
    incr = p_path[:-1] * dt_over_m + kick * dw
    x_path = np.add.accumulate(np.concatenate(([x0], incr)))
    return x_path[stride::stride].copy(), p_path[stride::stride].copy()


def _tangent_basis(normals):
    """Deterministic orthonormal tangent pair for each unit normal."""
    n = normals
    # partner axis: z unless the normal is nearly axial, then x
    ref = np.zeros_like(n)
    axial = np.abs(n[:, 2]) > 0.9
    ref[~axial, 2] = 1.0
    ref[axial, 0] = 1.0
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n, t1)
    return t1, t2


def _collision_prelude(stream, n_events, rate, v_thermal_normal, v_thermal_tangent):
    """Blocked draws and molecule velocities for a collision chain.

    Draw order per call: waiting-time exponentials, impact u_z, impact
    u_phi, flux-weighted speed exponentials, two tangential normals.
    Shared by both backends so their draw streams stay identical; only
    the sequential recoil loop differs.
    """
    gen = stream.generator
    waits = gen.standard_exponential(n_events) / rate
    u_z = gen.random(n_events)
    u_phi = gen.random(n_events)
    e_speed = gen.standard_exponential(n_events)
    g_tan = gen.standard_normal((n_events, 2))
    stream.advance_counter(6 * n_events)

    # inward surface point drawn uniformly: outward unit normal at impact
    cz = 1.0 - 2.0 * u_z
    sz = np.sqrt(np.maximum(0.0, 1.0 - cz * cz))
    phi = 2.0 * math.pi * u_phi
    normals = np.column_stack([sz * np.cos(phi), sz * np.sin(phi), cz])
    speeds = v_thermal_normal * np.sqrt(e_speed)
    t1, t2 = _tangent_basis(normals)
    v_mol = (
        -speeds[:, None] * normals
        + v_thermal_tangent * (g_tan[:, 0][:, None] * t1 + g_tan[:, 1][:, None] * t2)
    )
    return waits, normals, v_mol


def gas_chain(stream, v0, n_events, rate, v_thermal_normal, v_thermal_tangent, two_mu_over_M):
    """Sequential hard-sphere collision chain against a thermal gas.

    Returns (dts, normals, v_mol, dv, v_final); see _collision_prelude
    for the draw contract.
    """
    waits, normals, v_mol = _collision_prelude(
        stream, n_events, rate, v_thermal_normal, v_thermal_tangent
    )
    v = np.array(v0, dtype=float)
    dv = np.empty((n_events, 3))
    for k in range(n_events):
        nk = normals[k]
        v_rel_n = (v_mol[k, 0] - v[0]) * nk[0] + (v_mol[k, 1] - v[1]) * nk[1] + (v_mol[k, 2] - v[2]) * nk[2]
        kick = two_mu_over_M * v_rel_n
        dv[k, 0] = kick * nk[0]
        dv[k, 1] = kick * nk[1]
        dv[k, 2] = kick * nk[2]
        v[0] += dv[k, 0]
        v[1] += dv[k, 1]
        v[2] += dv[k, 2]
    return waits, normals, v_mol, dv, v


def sse_local_step(psi, x, dx, u, g, compensate):
    """Multiplicative local update of a batch of grid wave functions.

    psi : (B, N) complex, modified in place and renormalized to 1.
    For each row: X = x - <x>; psi *= exp(u*X - g*X**2 [+ g*sigma_sq]).
    Returns (xbar, sigma_sq, norm_drift) with moments taken before the
    update and drift the relative norm change before renormalization.
    """
    rho = psi.real**2 + psi.imag**2
    m0 = rho.sum(axis=1) * dx
    xbar = (rho @ x) * dx / m0
    x2 = (rho @ (x * x)) * dx / m0
    sigma_sq = x2 - xbar * xbar
    X = x[None, :] - xbar[:, None]
    exponent = u[:, None] * X - g * (X * X)
    if compensate:
        exponent += (g * sigma_sq)[:, None]
    psi *= np.exp(exponent)
    norm = (psi.real**2 + psi.imag**2).sum(axis=1) * dx
    drift = norm / m0 - 1.0
    psi *= (1.0 / np.sqrt(norm))[:, None]
    return xbar, sigma_sq, drift
