# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the fallback kernels.

centroid_chain and gas_chain reproduce the numpy reference bit for bit:
they keep the same draw order and floating-point operation order, and
the extension is built with FMA contraction disabled.  gas_chain reuses
the fallback's vectorized prelude outright and only compiles the
sequential recoil loop.  The grid update (sse_local_step) uses libm
transcendentals and plain sequential sums, so it matches the vectorized
fallback to rounding accuracy rather than bitwise.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()


cdef bitgen_t *_bitgen(object stream) except NULL:
    capsule = stream.generator.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def centroid_chain(stream, double x0, double p0, Py_ssize_t n_steps,
                   double dt_over_m, double kick, double noise_scale,
                   Py_ssize_t stride):
    """See fallback.centroid_chain; identical contract and arithmetic."""
    cdef bitgen_t *rng = _bitgen(stream)
    cdef Py_ssize_t n_samples = n_steps // stride
    xs = np.empty(n_samples)
    ps = np.empty(n_samples)
    cdef double[::1] xv = xs
    cdef double[::1] pv = ps
    cdef double x = x0
    cdef double p = p0
    cdef double dw, incr
    cdef Py_ssize_t i, j = 0
    with nogil:
        for i in range(n_steps):
            dw = random_standard_normal(rng)
            dw = dw * noise_scale
            incr = p * dt_over_m + kick * dw
            x = x + incr
            p = p + dw
            if (i + 1) % stride == 0:
                xv[j] = x
                pv[j] = p
                j += 1
    stream.advance_counter(n_steps)
    return xs, ps


def gas_chain(stream, v0, Py_ssize_t n_events, double rate,
              double v_thermal_normal, double v_thermal_tangent,
              double two_mu_over_M):
    """See fallback.gas_chain; identical contract and arithmetic."""
    from collapselab._kernels.fallback import _collision_prelude
    waits, normals, v_mol = _collision_prelude(
        stream, n_events, rate, v_thermal_normal, v_thermal_tangent
    )
    dv = np.empty((n_events, 3))
    cdef double[:, ::1] nv = normals
    cdef double[:, ::1] vm = v_mol
    cdef double[:, ::1] dvv = dv
    cdef double vx = v0[0], vy = v0[1], vz = v0[2]
    cdef double v_rel_n, kick
    cdef Py_ssize_t k
    with nogil:
        for k in range(n_events):
            v_rel_n = (
                (vm[k, 0] - vx) * nv[k, 0]
                + (vm[k, 1] - vy) * nv[k, 1]
                + (vm[k, 2] - vz) * nv[k, 2]
            )
            kick = two_mu_over_M * v_rel_n
            dvv[k, 0] = kick * nv[k, 0]
            dvv[k, 1] = kick * nv[k, 1]
            dvv[k, 2] = kick * nv[k, 2]
            vx += dvv[k, 0]
            vy += dvv[k, 1]
            vz += dvv[k, 2]
    return waits, normals, v_mol, dv, np.array([vx, vy, vz])


def sse_local_step(psi, x, double dx, u, double g, bint compensate):
    """See fallback.sse_local_step; agreement at rounding accuracy."""
    # complex128 rows viewed as (re, im) double pairs; edits land in psi
    cdef double[:, ::1] pd = psi.view(np.float64)
    cdef const double[::1] xv = x
    cdef const double[::1] uv = u
    cdef Py_ssize_t b = pd.shape[0]
    cdef Py_ssize_t n = pd.shape[1] // 2
    xbar = np.empty(b)
    sigma_sq = np.empty(b)
    drift = np.empty(b)
    cdef double[::1] xbv = xbar
    cdef double[::1] sgv = sigma_sq
    cdef double[::1] drv = drift
    cdef Py_ssize_t i, j
    cdef double s0, s1, s2, rho, m0, xb, sg, comp, xc, f, nrm, scale
    cdef double re, im
    with nogil:
        for i in range(b):
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            for j in range(n):
                re = pd[i, 2 * j]
                im = pd[i, 2 * j + 1]
                rho = re * re + im * im
                s0 += rho
                s1 += rho * xv[j]
                s2 += rho * xv[j] * xv[j]
            m0 = s0 * dx
            xb = s1 * dx / m0
            sg = s2 * dx / m0 - xb * xb
            xbv[i] = xb
            sgv[i] = sg
            comp = g * sg if compensate else 0.0
            nrm = 0.0
            for j in range(n):
                xc = xv[j] - xb
                f = exp(uv[i] * xc - g * (xc * xc) + comp)
                re = pd[i, 2 * j] * f
                im = pd[i, 2 * j + 1] * f
                pd[i, 2 * j] = re
                pd[i, 2 * j + 1] = im
                nrm += re * re + im * im
            nrm = nrm * dx
            drv[i] = nrm / m0 - 1.0
            scale = 1.0 / sqrt(nrm)
            for j in range(2 * n):
                pd[i, j] = pd[i, j] * scale
    return xbar, sigma_sq, drift
