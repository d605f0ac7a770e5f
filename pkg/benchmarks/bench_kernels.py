"""Timing comparison of the compiled kernels against the numpy fallback.

Run as a script::

    python3 benchmarks/bench_kernels.py [--repeat N]

Each hot loop is executed on both backends with identical streams; the
report shows per-call time and the speedup factor.  Numerical agreement
is asserted along the way (bitwise for the chains, 1e-12 for the SSE
step) so the benchmark doubles as an equivalence smoke test.
"""

import argparse
import time

import numpy as np

from collapselab import _kernels
from collapselab.core import make_probe_params
from collapselab.noise import NoiseStream


def _time_call(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_centroid():
    params = make_probe_params(1.0, 1.0, 0.5)
    dt = 0.01
    n_steps = 200_000
    kick = 2.0 * params.sigma_inf_sq / params.hbar
    noise_scale = (params.D_p * dt) ** 0.5

    def run():
        stream = NoiseStream(7)
        return _kernels._active().centroid_chain(
            stream, 0.0, 0.0, n_steps, dt / params.M, kick, noise_scale, 100)

    return "centroid_chain (2e5 steps)", run


def bench_gas():
    rate = 0.16
    v_tn, v_tt = (2.0 / 1e-3) ** 0.5, (1.0 / 1e-3) ** 0.5
    two_mu_over_M = 2.0 * (1e-3 * 1.0 / (1e-3 + 1.0))

    def run():
        stream = NoiseStream(11)
        return _kernels._active().gas_chain(
            stream, np.zeros(3), 100_000, rate, v_tn, v_tt, two_mu_over_M)

    return "gas_chain (1e5 events)", run


def bench_sse():
    n, batch = 2048, 16
    x = np.linspace(-16.0, 16.0, n, endpoint=False)
    dx = x[1] - x[0]
    row = np.exp(-0.5 * x**2) * (1.0 + 0.1j)
    row /= np.sqrt((np.abs(row) ** 2).sum() * dx)
    psi0 = np.tile(row, (batch, 1))
    u = np.full(batch, 0.01)
    g = 0.5 * 0.01

    def run():
        psi = psi0.copy()
        out = None
        for _ in range(100):
            out = _kernels._active().sse_local_step(psi, x, dx, u, g, True)
        return out

    return "sse_local_step (100 x 16 x 2048)", run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    available = _kernels.available_backends()
    print(f"backends: {', '.join(available)}")
    if len(available) < 2:
        print("compiled extension not built; nothing to compare")

    benches = [bench_centroid(), bench_gas(), bench_sse()]
    for label, fn in benches:
        times = {}
        results = {}
        for backend in available:
            previous = _kernels.set_backend(backend)
            try:
                times[backend], results[backend] = _time_call(fn, args.repeat)
            finally:
                _kernels.set_backend(previous)
        line = f"{label:30s}"
        for backend in available:
            line += f"  {backend}: {times[backend] * 1e3:9.2f} ms"
        if len(available) == 2:
            ratio = times["fallback"] / times["compiled"]
            line += f"  speedup: {ratio:5.1f}x"
            a, b = results["compiled"], results["fallback"]
            worst = max(
                float(np.max(np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))))
                for u, v in zip(a, b)
            )
            line += f"  max|diff|: {worst:.2e}"
        print(line)


if __name__ == "__main__":
    main()
