"""Unit conventions, probe-ball parameters, and derived dynamical scales.

Everything downstream works in an internal unit system with hbar = G = 1
by default.  A rigid ball of mass M and radius R carries one intrinsic
frequency

    omega_G = sqrt(G M / R**3)

and the collapse rate parameter lam (dimensionless, 1/2 by default) sets
the momentum diffusion coefficient D_p = lam * hbar * M * omega_G**2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError

__all__ = [
    "UnitSystem",
    "ProbeParams",
    "ScaleReport",
    "make_probe_params",
    "characteristic_scales",
]


@dataclass(frozen=True)
class UnitSystem:
    """Internal unit system; only hbar and G are adjustable."""

    hbar: float = 1.0
    G: float = 1.0

    def __post_init__(self):
        for field in ("hbar", "G"):
            value = getattr(self, field)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidParameterError(field, f"must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class ProbeParams:
    """A probe ball together with its derived collapse scales.

    Attributes
    ----------
    M, R : float
        Ball mass and radius.
    lam : float
        Dimensionless collapse rate parameter.
    hbar, G : float
        Unit constants, copied from the :class:`UnitSystem`.
    omega_G : float
        sqrt(G*M/R**3), the frequency of the harmonic well a point mass
        would feel at the center of the ball.
    V_R : float
        Ball volume 4*pi*R**3/3.
    D_p : float
        Momentum diffusion coefficient lam*hbar*M*omega_G**2 per axis.
    sigma_inf_sq : float
        Squared equilibrium width of the localized pointer state, i.e.
        the attracting fixed point of the width flow (see
        :func:`collapselab.pointer.equilibrium_width`).
    """

    M: float
    R: float
    lam: float
    hbar: float
    G: float
    omega_G: float
    V_R: float
    D_p: float
    sigma_inf_sq: float


@dataclass(frozen=True)
class ScaleReport:
    """Characteristic times and lengths plus discretization hints."""

    t_collapse: float
    t_osc: float
    dt_recommended: float
    L_recommended: float


def make_probe_params(M, R, lam=0.5, units=None):
    """Validate raw inputs and derive all dependent probe scales.

    Parameters
    ----------
    M, R : float
        Mass and radius of the ball; both must be positive and finite.
    lam : float, optional
        Collapse rate parameter (default 1/2).
    units : UnitSystem, optional
        Defaults to hbar = G = 1.
    """
    if units is None:
        units = UnitSystem()
    for field, value in (("M", M), ("R", R), ("lam", lam)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise InvalidParameterError(field, f"must be positive and finite, got {value!r}")
    M = float(M)
    R = float(R)
    lam = float(lam)
    omega_G = math.sqrt(units.G * M / R**3)
    V_R = 4.0 * math.pi * R**3 / 3.0
    D_p = lam * units.hbar * M * omega_G**2

    # Import here: pointer needs ProbeParams at module level.
    from .pointer import _equilibrium_width_from_scales

    sigma_inf_sq = _equilibrium_width_from_scales(M, lam, units.hbar, omega_G)
    return ProbeParams(
        M=M,
        R=R,
        lam=lam,
        hbar=units.hbar,
        G=units.G,
        omega_G=omega_G,
        V_R=V_R,
        D_p=D_p,
        sigma_inf_sq=sigma_inf_sq,
    )


def characteristic_scales(params):
    """Characteristic times/lengths and safe discretization hints.

    t_collapse is the e-folding time of width relaxation (linearized
    width flow around its fixed point), t_osc = 1/omega_G.  The step
    hint stays a factor 2 below the documented 0.01*min(...) ceiling;
    the box hint doubles the documented 20 sigma_inf floor.
    """
    omega = params.omega_G
    t_osc = 1.0 / omega
    # Linearization of the width flow around a_inf decays at 2*omega*sqrt(lam).
    t_collapse = 1.0 / (2.0 * omega * math.sqrt(params.lam))
    dt_recommended = 0.005 * min(t_collapse, t_osc)
    L_recommended = 40.0 * math.sqrt(params.sigma_inf_sq)
    return ScaleReport(
        t_collapse=t_collapse,
        t_osc=t_osc,
        dt_recommended=dt_recommended,
        L_recommended=L_recommended,
    )
