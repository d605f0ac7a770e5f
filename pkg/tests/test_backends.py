import numpy as np
import pytest

from collapselab import _kernels
from collapselab.noise import NoiseStream

needs_compiled = pytest.mark.skipif(
    "compiled" not in _kernels.available_backends(),
    reason="compiled extension not built",
)


@pytest.fixture
def force_backend():
    """Switch backend for a test body, then restore."""
    saved = _kernels.backend_name()

    def switch(name):
        _kernels.set_backend(name)

    yield switch
    _kernels.set_backend(saved)


def test_default_backend_is_listed():
    assert _kernels.backend_name() in _kernels.available_backends()
    assert "fallback" in _kernels.available_backends()


def test_set_backend_returns_previous(force_backend):
    previous = _kernels.set_backend("fallback")
    assert previous in _kernels.available_backends()
    assert _kernels.backend_name() == "fallback"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.set_backend("gpu")


@needs_compiled
def test_centroid_chain_bit_identical(force_backend):
    results = {}
    for name in ("compiled", "fallback"):
        force_backend(name)
        stream = NoiseStream(17, 2)
        results[name] = _kernels.centroid_chain(
            stream, 0.1, -0.2, 20_000, 1e-3, 1.2, 0.05, 100
        )
        assert stream.counter == 20_000
    for a, b in zip(results["compiled"], results["fallback"]):
        assert np.array_equal(a, b)


@needs_compiled
def test_gas_chain_bit_identical(force_backend):
    results = {}
    for name in ("compiled", "fallback"):
        force_backend(name)
        stream = NoiseStream(23)
        results[name] = _kernels.gas_chain(
            stream, (0.01, -0.02, 0.0), 5_000, 0.16, 44.7, 31.6, 2e-3
        )
        assert stream.counter == 30_000
    for a, b in zip(results["compiled"], results["fallback"]):
        assert np.array_equal(a, b)


@needs_compiled
def test_sse_local_step_agrees_to_rounding(force_backend):
    x = np.linspace(-8.0, 8.0, 512)
    dx = x[1] - x[0]
    base = np.exp(-0.5 * (x - 0.3) ** 2 + 0.4j * x)
    psi0 = np.tile(base / np.sqrt(np.sum(np.abs(base) ** 2) * dx), (4, 1))
    u = np.array([0.01, -0.02, 0.0, 0.05])
    out = {}
    for name in ("compiled", "fallback"):
        force_backend(name)
        psi = psi0.astype(np.complex128).copy()
        out[name] = (_kernels.sse_local_step(psi, x, dx, u, 0.005, True), psi)
    (mom_c, psi_c), (mom_f, psi_f) = out["compiled"], out["fallback"]
    for a, b in zip(mom_c, mom_f):
        assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert np.max(np.abs(psi_c - psi_f)) < 1e-12
