"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when built; ``set_backend`` forces a
choice (benchmarks, equivalence tests).  Both backends consume the same
counter-based streams in the same draw order, so results agree across
backends to floating-point accuracy (bit-exact for the centroid and gas
chains, which avoid transcendental library differences).
"""

from . import fallback

try:
    from . import _compiled
except ImportError:  # built without the extension
    _compiled = None

DEFAULT_BACKEND = "fallback" if _compiled is None else "compiled"
_active_name = DEFAULT_BACKEND


def available_backends():
    names = ["fallback"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return tuple(names)


def backend_name():
    return _active_name


def set_backend(name):
    """Select the kernel backend; returns the previous name."""
    global _active_name
    if name not in available_backends():
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}")
    previous = _active_name
    _active_name = name
    return previous


def _active():
    return _compiled if _active_name == "compiled" else fallback


def centroid_chain(stream, x0, p0, n_steps, dt_over_m, kick, noise_scale, stride):
    return _active().centroid_chain(stream, x0, p0, n_steps, dt_over_m, kick, noise_scale, stride)


def gas_chain(stream, v0, n_events, rate, v_thermal_normal, v_thermal_tangent, two_mu_over_M):
    return _active().gas_chain(stream, v0, n_events, rate, v_thermal_normal, v_thermal_tangent, two_mu_over_M)


def sse_local_step(psi, x, dx, u, g, compensate):
    return _active().sse_local_step(psi, x, dx, u, g, compensate)
