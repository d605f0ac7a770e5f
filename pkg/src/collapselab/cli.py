"""Command line front end: configured runs, data files, and run manifests.

Every subcommand reads a flat ``key=value`` config (defaults, then an
optional config file, then ``-o`` overrides, then ``--seed``), runs one
experiment, and writes a data file plus a JSON manifest that echoes the
effective configuration.  Data files are deterministic: the same config
and seed produce byte-identical output for any worker count.  ``--check``
replaces the normal run with a reduced version of the module's
acceptance checks and records pass/fail in the manifest.

Exit codes: 0 success, 2 validation error, 3 numerical-regime error
(domain escape, instability, regime violation), 64 usage error.
"""

import argparse
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, decoherence, emergent, jumps, noise, pointer, pressure, trajectories
from .core import characteristic_scales, make_probe_params
from .errors import (
    CollapseLabError,
    InvalidParameterError,
    LowStatisticsError,
    NumericalRegimeError,
    RegimeViolationWarning,
    ValidationError,
)
from .noise import NoiseStream
from .parallel import resolve_workers

__all__ = ["main"]

EX_OK = 0
EX_VALIDATION = 2
EX_REGIME = 3
EX_USAGE = 64

_PROBE_KEYS = {"M": 1.0, "R": 1.0, "lam": 0.5}

_DEFAULTS = {
    "pointer": {
        **_PROBE_KEYS, "n_traj": 50, "T": 10.0, "dt": 0.002, "n_points": 1024,
        "domain_width": 0.0, "stride": 0, "seed": 1,
    },
    "jump": {
        **_PROBE_KEYS, "n_traj": 50, "T": 5.0, "dt": 0.002, "n_points": 1024,
        "domain_width": 0.0, "stride": 0, "seed": 1,
    },
    "trajectory": {
        **_PROBE_KEYS, "n_traj": 2000, "T": 10.0, "dt": 0.01, "n_axes": 3,
        "stride": 0, "seed": 1,
    },
    "two-probe": {
        **_PROBE_KEYS, "d": 6.0, "separations": "3.0,4.0,5.0", "n_pairs": 2000,
        "T": 15.0, "window": 1.0, "dt": 0.01, "noise_correlation": "independent",
        "feedback": "mean_field", "mode": "quasi-static", "seed": 1,
    },
    "decoherence": {
        **_PROBE_KEYS, "d_min": 0.0, "d_max": 6.0, "n_d": 25, "resolution": 24,
        "method": "auto", "seed": 1,
    },
    "pressure": {
        "n": 1e-3, "m": 1e-3, "T_gas": 1.0, "M": 1.0, "R": 1.0,
        "duration": 2.0e4, "batches": 32, "seed": 1,
    },
    "noise-check": {
        **_PROBE_KEYS, "resolution": 8, "dt": 0.01, "n_samples": 3000, "seed": 1,
    },
}


# ---------------------------------------------------------------------------
# configuration


def _coerce(key, raw, default):
    """Cast a config string to the type of its default value."""
    if isinstance(default, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, int):
            try:
                return int(text)
            except ValueError:
                value = float(text)
                if value != int(value):
                    raise InvalidParameterError(key, f"must be an integer, got {raw!r}")
                return int(value)
        return float(text)
    except InvalidParameterError:
        raise
    except ValueError:
        kind = "an integer" if isinstance(default, int) else "a number"
        raise InvalidParameterError(key, f"must be {kind}, got {raw!r}") from None


def _read_config_file(path):
    pairs = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise InvalidParameterError(
                        "config", f"{path}:{lineno}: expected key=value, got {text!r}")
                key, _, value = text.partition("=")
                pairs.append((key.strip(), value.strip()))
    except OSError as exc:
        raise InvalidParameterError("config", f"cannot read {path!r}: {exc}") from None
    return pairs


def _effective_config(name, args):
    cfg = dict(_DEFAULTS[name])
    pairs = []
    if args.config:
        pairs.extend(_read_config_file(args.config))
    for item in args.override or ():
        if "=" not in item:
            raise InvalidParameterError("override", f"expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        pairs.append((key.strip(), value.strip()))
    for key, raw in pairs:
        if key not in cfg:
            known = ", ".join(sorted(cfg))
            raise InvalidParameterError(key, f"unknown key for {name!r}; known keys: {known}")
        cfg[key] = _coerce(key, raw, _DEFAULTS[name][key])
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    return cfg


# ---------------------------------------------------------------------------
# output writers


def _format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _write_csv(path, columns, units, rows):
    header = ",".join(f"{c} ({u})" if u else c for c, u in zip(columns, units))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_format_value(v) for v in row) + "\n")


def _write_json_lines(path, columns, units, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        head = {"columns": list(columns), "units": list(units)}
        fh.write(json.dumps(head, separators=(",", ":")) + "\n")
        for row in rows:
            record = {c: _json_value(v) for c, v in zip(columns, row)}
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def _write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# shared helpers


def _probe(cfg):
    return make_probe_params(cfg["M"], cfg["R"], cfg["lam"])


def _require_positive(cfg, *keys):
    for key in keys:
        value = cfg[key]
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise InvalidParameterError(key, f"must be positive and finite, got {value!r}")


def _check_rows(criteria):
    columns = ("criterion", "measured", "target", "tolerance", "passed")
    units = ("", "value", "value", "bound", "bool")
    clean = [{k: _json_value(v) for k, v in c.items()} for c in criteria]
    rows = [(c["name"], c["measured"], c["target"], c["tolerance"], int(c["passed"]))
            for c in clean]
    block = {"passed": all(c["passed"] for c in clean), "criteria": clean}
    return {"columns": columns, "units": units, "rows": rows, "summary": {}, "check": block}


_MOMENT_COLUMNS = (
    "time", "mean_xbar", "var_xbar", "var_xbar_stderr", "mean_pbar", "var_pbar",
    "mean_sigma_sq", "sigma_sq_stderr", "norm_drift",
)
_MOMENT_UNITS = (
    "time", "length", "length^2", "length^2", "momentum", "momentum^2",
    "length^2", "length^2", "dimensionless",
)


def _moment_rows(result):
    return list(zip(
        result.times, result.mean_xbar(), result.var_xbar(), result.var_xbar_stderr(),
        result.mean_pbar(), result.var_pbar(), result.mean_sigma_sq(),
        result.sigma_sq_stderr(), result.mean_norm_drift(),
    ))


# ---------------------------------------------------------------------------
# subcommand runners


def _run_pointer(cfg, seed, workers, check):
    params = _probe(cfg)
    if check:
        scales = characteristic_scales(params)
        dt = min(scales.t_collapse / 500.0, 0.9 * scales.dt_recommended)
        n_steps = 50 * max(1, int(math.ceil(5.0 * scales.t_collapse / dt / 50.0)))
        result = pointer.run_grid_ensemble(
            4, n_steps * dt, dt, seed, params, n_points=512,
            sample_stride=n_steps // 50, workers=workers)
        measured = float(result.mean_sigma_sq()[-1])
        target = params.sigma_inf_sq
        deviation = abs(measured / target - 1.0)
        return _check_rows([{
            "name": "pointer-equilibrium-width", "measured": measured,
            "target": target, "tolerance": 0.02, "passed": deviation <= 0.02,
        }])
    _require_positive(cfg, "T", "dt")
    result = pointer.run_grid_ensemble(
        cfg["n_traj"], cfg["T"], cfg["dt"], seed, params,
        n_points=cfg["n_points"], domain_width=cfg["domain_width"] or None,
        sample_stride=cfg["stride"] or None, workers=workers)
    summary = {
        "n_traj": cfg["n_traj"],
        "sigma_sq_final": float(result.mean_sigma_sq()[-1]),
        "sigma_inf_sq": params.sigma_inf_sq,
    }
    return {"columns": _MOMENT_COLUMNS, "units": _MOMENT_UNITS,
            "rows": _moment_rows(result), "summary": summary, "check": None}


def _run_jump(cfg, seed, workers, check):
    params = _probe(cfg)
    scales = characteristic_scales(params)
    if check:
        from scipy import stats as sstats

        T_target = 8.5 * scales.t_collapse
        n_steps = 50 * int(math.ceil(T_target / (0.8 * scales.dt_recommended) / 50.0))
        dt = T_target / n_steps
        waits, total_jumps, total_intensity = jumps.waiting_time_survey(
            5, T_target, dt, seed, params, workers=workers)
        p_value = float(sstats.kstest(waits, "expon").pvalue)
        mean_wait = float(np.mean(waits)) if len(waits) else math.nan
        balance = total_jumps / total_intensity if total_intensity > 0 else math.nan
        return _check_rows([
            {"name": "jump-waiting-times-exponential", "measured": p_value,
             "target": 1.0, "tolerance": 0.01, "passed": p_value > 0.01},
            {"name": "jump-mean-transformed-wait", "measured": mean_wait,
             "target": 1.0, "tolerance": 0.35, "passed": abs(mean_wait - 1.0) <= 0.35},
            {"name": "jump-rate-balance", "measured": float(balance),
             "target": 1.0, "tolerance": 0.35, "passed": abs(balance - 1.0) <= 0.35},
        ])
    _require_positive(cfg, "T", "dt")
    domain = cfg["domain_width"] or 2.0 * scales.L_recommended
    result, stats = jumps.run_jump_ensemble(
        cfg["n_traj"], cfg["T"], cfg["dt"], seed, params,
        n_points=cfg["n_points"], domain_width=domain,
        sample_stride=cfg["stride"] or None, workers=workers)
    summary = {
        "n_traj": cfg["n_traj"],
        "total_jumps": stats.total_jumps,
        "mean_rate": stats.mean_rate,
        "mean_interjump_time": stats.mean_interjump_time,
        "flow_stationary_width": jumps.flow_stationary_width(params),
    }
    return {"columns": _MOMENT_COLUMNS, "units": _MOMENT_UNITS,
            "rows": _moment_rows(result), "summary": summary, "check": None}


def _run_trajectory(cfg, seed, workers, check):
    params = _probe(cfg)
    if check:
        reports = trajectories.ensemble_run(
            2000, 10.0, 0.01, seed, params, n_axes=1, workers=workers)
        final = reports[-1]
        target = params.D_p * final.t
        measured = float(final.var_p[0])
        deviation = abs(measured / target - 1.0)
        return _check_rows([{
            "name": "trajectory-momentum-diffusion", "measured": measured,
            "target": target, "tolerance": 0.10, "passed": deviation <= 0.10,
        }])
    _require_positive(cfg, "T", "dt")
    reports = trajectories.ensemble_run(
        cfg["n_traj"], cfg["T"], cfg["dt"], seed, params, n_axes=cfg["n_axes"],
        sample_stride=cfg["stride"] or None, workers=workers)
    columns = ("time", "axis", "mean_x", "var_x", "var_x_analytic", "var_p",
               "var_p_analytic", "cov_xp", "cov_xp_analytic", "stderr_var_x",
               "stderr_var_p", "stderr_cov_xp")
    units = ("time", "index", "length", "length^2", "length^2", "momentum^2",
             "momentum^2", "length*momentum", "length*momentum", "length^2",
             "momentum^2", "length*momentum")
    rows = []
    for rep in reports:
        exact = trajectories.analytic_moments(params, rep.t, n_axes=1)
        for axis in range(cfg["n_axes"]):
            rows.append((
                rep.t, axis, rep.mean_x[axis], rep.var_x[axis], exact.var_x[0],
                rep.var_p[axis], exact.var_p[0], rep.cov_xp[axis], exact.cov_xp[0],
                rep.stderr_var_x[axis], rep.stderr_var_p[axis], rep.stderr_cov_xp[axis],
            ))
    final = reports[-1]
    exact = trajectories.analytic_moments(params, final.t, n_axes=1)
    summary = {
        "n_traj": cfg["n_traj"],
        "var_p_final_over_analytic": float(np.mean(final.var_p) / exact.var_p[0]),
        "var_x_final_over_analytic": float(np.mean(final.var_x) / exact.var_x[0]),
    }
    return {"columns": columns, "units": units, "rows": rows,
            "summary": summary, "check": None}


def _parse_separations(text):
    if not text:
        return None
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise InvalidParameterError(
            "separations", f"must be comma-separated numbers, got {text!r}") from None


def _run_two_probe(cfg, seed, workers, check):
    params = _probe(cfg)
    config = emergent.two_probe_config(
        params, cfg["d"], noise_correlation=cfg["noise_correlation"],
        feedback=cfg["feedback"])
    if check:
        records = emergent.simulate_two_probe(
            config, 15.0, 0.01, seed, n_pairs=2000, window=1.0,
            separations=(3.0, 4.0, 5.0), workers=workers)
        report = emergent.estimate_effective_G(records, config)
        target = 2.0 * params.lam * params.G
        ratio_dev = abs(report.strength / target - 1.0)
        drift = abs(float(records.total_momentum_drift))
        bound = 3.0 * float(records.total_momentum_stderr)
        return _check_rows([
            {"name": "two-probe-effective-coupling", "measured": report.strength,
             "target": target, "tolerance": 0.15, "passed": ratio_dev <= 0.15},
            {"name": "two-probe-momentum-drift", "measured": drift,
             "target": 0.0, "tolerance": bound, "passed": drift <= bound},
        ])
    _require_positive(cfg, "T", "dt", "window")
    records = emergent.simulate_two_probe(
        config, cfg["T"], cfg["dt"], seed, n_pairs=cfg["n_pairs"],
        window=cfg["window"], mode=cfg["mode"],
        separations=_parse_separations(cfg["separations"]), workers=workers)
    report = emergent.estimate_effective_G(records, config)
    columns = ("time", "separation", "drift_mean", "drift_stderr")
    units = ("time", "length", "momentum", "momentum")
    rows = list(zip(records.times, records.separations,
                    records.drift_mean, records.drift_stderr))
    summary = {
        "n_pairs": cfg["n_pairs"],
        "G_eff": report.G_eff,
        "G_eff_stderr": report.stderr,
        "strength": report.strength,
        "target_strength": report.target_strength,
        "total_momentum_drift": float(records.total_momentum_drift),
        "total_momentum_stderr": float(records.total_momentum_stderr),
        "aborted_pairs": len(records.aborts),
    }
    return {"columns": columns, "units": units, "rows": rows,
            "summary": summary, "check": None}


def _run_decoherence(cfg, seed, workers, check):
    params = _probe(cfg)
    ball_at = lambda d: decoherence.MassDensity.uniform_ball(
        params.M, params.R, center=(d, 0.0, 0.0))
    if check:
        criteria = []
        for label, sep_over_R, tol in (
            ("decoherence-shell-vs-lattice", (2.5, 4.0), 0.015),
            ("decoherence-overlap-vs-lattice", (1.0,), 0.02),
        ):
            worst = 0.0
            for ratio in sep_over_R:
                d = ratio * params.R
                exact = decoherence.dp_norm_sq(
                    ball_at(0.0), ball_at(d), params.G, method="analytic")
                quad = decoherence.dp_norm_sq(
                    ball_at(0.0), ball_at(d), params.G, method="lattice", resolution=16)
                worst = max(worst, abs(quad / exact - 1.0))
            criteria.append({"name": label, "measured": worst, "target": 0.0,
                             "tolerance": tol, "passed": worst <= tol})
        return _check_rows(criteria)
    if cfg["n_d"] < 2:
        raise InvalidParameterError("n_d", f"must be at least 2, got {cfg['n_d']}")
    if cfg["d_max"] <= cfg["d_min"]:
        raise InvalidParameterError("d_max", "must exceed d_min")
    if cfg["method"] not in ("auto", "analytic", "lattice"):
        raise InvalidParameterError("method", f"must be auto, analytic or lattice, got {cfg['method']!r}")
    ds = np.linspace(cfg["d_min"], cfg["d_max"], cfg["n_d"])
    rows = []
    for d in ds:
        potential = decoherence.ball_pair_potential(float(d), params)
        dp2 = decoherence.dp_norm_sq(
            ball_at(0.0), ball_at(float(d)), params.G,
            method=cfg["method"], resolution=cfg["resolution"])
        rate = 0.5 * params.lam / params.hbar * dp2
        rows.append((float(d), potential, dp2, rate))
    columns = ("separation", "pair_potential", "dp_norm_sq", "rate")
    units = ("length", "energy", "energy", "1/time")
    summary = {
        "rate_plateau": 0.5 * params.lam / params.hbar
        * 2.0 * decoherence.ball_pair_potential(0.0, params),
        "rate_final": rows[-1][3],
    }
    return {"columns": columns, "units": units, "rows": rows,
            "summary": summary, "check": None}


def _run_pressure(cfg, seed, workers, check):
    _require_positive(cfg, "duration")
    if check:
        gas = pressure.GasConfig(n=cfg["n"], m=cfg["m"], T_gas=cfg["T_gas"],
                                 M=cfg["M"], R=cfg["R"], duration=6.5e4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeViolationWarning)
            _, records = pressure.simulate_gas_brownian(gas, seed)
        estimate = pressure.pressure_estimator(records, gas, batches=cfg["batches"])
        ideal = gas.n * gas.T_gas
        ratio = estimate.pressure / ideal
        return _check_rows([{
            "name": "pressure-ideal-gas", "measured": estimate.pressure,
            "target": ideal, "tolerance": 0.05, "passed": abs(ratio - 1.0) <= 0.05,
        }])
    gas = pressure.GasConfig(n=cfg["n"], m=cfg["m"], T_gas=cfg["T_gas"],
                             M=cfg["M"], R=cfg["R"], duration=cfg["duration"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeViolationWarning)
        trajectory, records = pressure.simulate_gas_brownian(gas, seed)
    summary = {
        "n_collisions": len(records),
        "expected_collisions": gas.collision_rate * gas.duration,
        "regime_ok": trajectory.regime_ok,
        "max_ball_speed": trajectory.max_speed,
        "molecular_mean_speed": gas.mean_speed,
        "ideal_pressure": gas.n * gas.T_gas,
    }
    try:
        estimate = pressure.pressure_estimator(records, gas, batches=cfg["batches"])
        summary["pressure"] = estimate.pressure
        summary["pressure_stderr"] = estimate.stderr
        if gas.n > 0:
            summary["pressure_over_ideal"] = estimate.pressure / (gas.n * gas.T_gas)
    except LowStatisticsError:
        summary["pressure"] = None
        summary["pressure_stderr"] = None
    columns = ("time", "normal_x", "normal_y", "normal_z", "v_mol_x", "v_mol_y",
               "v_mol_z", "dv_x", "dv_y", "dv_z")
    units = ("time", "", "", "", "velocity", "velocity", "velocity",
             "velocity", "velocity", "velocity")
    rows = [
        (records.times[i], *records.normals[i], *records.v_molecules[i], *records.dv[i])
        for i in range(len(records))
    ]
    status = EX_OK if trajectory.regime_ok else EX_REGIME
    message = None
    if not trajectory.regime_ok:
        message = (f"regime violation: ball speed reached {trajectory.max_speed:.3g} "
                   f"(limit {0.1 * gas.mean_speed:.3g})")
    return {"columns": columns, "units": units, "rows": rows,
            "summary": summary, "check": None, "exit": status, "message": message}


def _field_force_samples(params, lattice, weights, dt, n_samples, seed):
    """Empirical ball forces from repeated field draws, (3, n_samples)."""
    support = np.nonzero(np.any(weights != 0.0, axis=0))[0]
    kernel = noise.FieldKernel(lattice.nodes()[support], lattice.h)
    reduced = weights[:, support]
    scale = math.sqrt(params.lam * params.hbar * params.G / dt)
    stream = NoiseStream(seed)
    out = np.empty((3, n_samples))
    done = 0
    while done < n_samples:
        block = min(512, n_samples - done)
        z = stream.standard_normal((kernel.nodes.shape[0], block))
        out[:, done:done + block] = reduced @ (kernel.cholesky @ z) * scale
        done += block
    return out


def _run_noise_check(cfg, seed, workers, check):
    params = _probe(cfg)
    _require_positive(cfg, "dt", "n_samples", "resolution")
    h = 2.0 * params.R / cfg["resolution"]
    lattice = noise.Lattice.covering_ball((0.0, 0.0, 0.0), params.R, h)
    center = (0.0, 0.0, 0.0)
    predicted = noise.force_covariance(lattice, center, center, params, cfg["dt"])
    weights = noise.ball_gradient_weights(lattice, center, params)
    samples = _field_force_samples(params, lattice, weights, cfg["dt"], cfg["n_samples"], seed)
    empirical = np.cov(samples)
    white = params.D_p / cfg["dt"]
    diag_dev = np.abs(np.diag(empirical) / np.diag(predicted) - 1.0)
    if check:
        measured = float(diag_dev.max())
        return _check_rows([{
            "name": "noise-force-covariance", "measured": measured,
            "target": 0.0, "tolerance": 0.10, "passed": measured <= 0.10,
        }])
    labels = (("xx", 0, 0), ("yy", 1, 1), ("zz", 2, 2),
              ("xy", 0, 1), ("xz", 0, 2), ("yz", 1, 2))
    rows = []
    for label, i, j in labels:
        emp = float(empirical[i, j])
        pred = float(predicted[i, j])
        target = white if i == j else 0.0
        deviation = emp / pred - 1.0 if i == j else (emp - pred) / white
        rows.append((label, emp, pred, target, deviation))
    columns = ("component", "empirical", "predicted", "white_target", "deviation")
    units = ("", "momentum^2/time^2", "momentum^2/time^2", "momentum^2/time^2", "relative")
    summary = {
        "n_samples": cfg["n_samples"],
        "max_diagonal_deviation": float(diag_dev.max()),
        "quadrature_ratio": float(predicted[0, 0] / white),
    }
    return {"columns": columns, "units": units, "rows": rows,
            "summary": summary, "check": None}


_RUNNERS = {
    "pointer": _run_pointer,
    "jump": _run_jump,
    "trajectory": _run_trajectory,
    "two-probe": _run_two_probe,
    "decoherence": _run_decoherence,
    "pressure": _run_pressure,
    "noise-check": _run_noise_check,
}

_EXTENSIONS = {"csv": ".csv", "json-lines": ".jsonl"}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract wants 64
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _build_parser():
    parser = _Parser(prog="collapselab",
                     description="Collapse-dynamics numerical laboratory.")
    parser.add_argument("--version", action="version", version=f"collapselab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name in _RUNNERS:
        keys = ", ".join(f"{k}={v!r}" for k, v in _DEFAULTS[name].items())
        p = sub.add_parser(name, help=f"run the {name} experiment",
                           description=f"Config keys and defaults: {keys}")
        p.add_argument("--config", metavar="FILE", help="flat key=value config file")
        p.add_argument("-o", "--override", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        p.add_argument("--out", metavar="PATH", help="data file path")
        p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
        p.add_argument("--workers", type=int, default=None,
                       help="process count (COLLAPSE_LAB_WORKERS overrides)")
        p.add_argument("--check", action="store_true",
                       help="run the reduced acceptance checks instead")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.error("a subcommand is required")
    name = args.subcommand
    started = time.perf_counter()
    try:
        cfg = _effective_config(name, args)
        seed = int(cfg["seed"])
        workers = resolve_workers(args.workers)
        result = _RUNNERS[name](cfg, seed, workers, args.check)
    except ValidationError as exc:
        print(f"collapselab {name}: error: {exc}", file=sys.stderr)
        return EX_VALIDATION
    except NumericalRegimeError as exc:
        print(f"collapselab {name}: numerical regime error: {exc}", file=sys.stderr)
        return EX_REGIME
    except CollapseLabError as exc:
        print(f"collapselab {name}: error: {exc}", file=sys.stderr)
        return EX_VALIDATION

    out_path = args.out or name + _EXTENSIONS[args.format]
    if args.format == "csv":
        _write_csv(out_path, result["columns"], result["units"], result["rows"])
    else:
        _write_json_lines(out_path, result["columns"], result["units"], result["rows"])
    manifest = {
        "artifact": "collapselab",
        "version": __version__,
        "subcommand": name,
        "seed": seed,
        "config": {k: _json_value(v) for k, v in cfg.items()},
        "workers": workers,
        "format": args.format,
        "data_file": os.path.basename(out_path),
        "rows": len(result["rows"]),
        "duration_seconds": time.perf_counter() - started,
        "summary": {k: _json_value(v) if not isinstance(v, list) else v
                    for k, v in result["summary"].items()},
        "check": result["check"],
    }
    _write_manifest(out_path + ".manifest.json", manifest)
    status = result.get("exit", EX_OK)
    if result.get("message"):
        print(f"collapselab {name}: {result['message']}", file=sys.stderr)
    if result["check"] is not None:
        verdict = "PASSED" if result["check"]["passed"] else "FAILED"
        print(f"collapselab {name}: check {verdict} "
              f"({len(result['check']['criteria'])} criteria); wrote {out_path}")
    else:
        print(f"collapselab {name}: wrote {out_path} ({len(result['rows'])} rows)")
    return status


if __name__ == "__main__":
    sys.exit(main())
