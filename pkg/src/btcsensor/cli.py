"""Command-line front end.

Every subcommand reads an optional JSON config file (flag values win over
config entries, which win over defaults), writes plot-ready CSV tables plus
a JSON run manifest (resolved configuration, seeds, wall time, residual and
failure diagnostics), and exits 0 on success, 1 on validation problems and
2 on numerical failures.  Identical configuration and seed produce
byte-identical CSV output; wall-clock metadata lives only in the manifest.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dark_state import build_dark_state, dark_state_observables
from .errors import NumericalError, ValidationError
from .holstein_primakoff import hp_deformed_eigenvalue, hp_scgf
from .liouville import (
    ModelParams,
    build_btc_generator,
    build_cascaded_generator,
)
from .sensing import fit_power_law, protocol1_error, protocol2_error
from .spectral import dominant_eigenvalue, qfi_rate, scgf_curve
from .trajectories import TrajectoryConfig, ensemble_stats, run_ensemble
from .liouville import deform


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the validation exit code."""

    def error(self, message):
        raise ValidationError(message)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def parse_grid(spec: str) -> np.ndarray:
    """Grid syntax: ``start:stop:step`` (inclusive endpoints) or a comma list."""
    spec = spec.strip()
    try:
        if ":" in spec:
            start, stop, step = (float(tok) for tok in spec.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            count = int(round((stop - start) / step)) + 1
            if count < 1 or abs(start + (count - 1) * step - stop) > 1e-9 * max(1.0, abs(stop)):
                count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(max(count, 1))
        return np.array([float(tok) for tok in spec.split(",") if tok.strip() != ""])
    except ValueError as err:
        raise ValidationError(f"bad grid {spec!r}: {err}") from None


def parse_int_list(spec: str):
    vals = parse_grid(spec)
    out = [int(round(v)) for v in vals]
    if any(abs(v - r) > 1e-9 for v, r in zip(vals, out)):
        raise ValidationError(f"size list {spec!r} must contain integers")
    return out


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(path: Path, command, config, outputs, wall_time, failures,
                    diagnostics):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall_time,
        "failures": failures,
        "diagnostics": diagnostics,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _resolve_omega(config, n, kappa, ratio_key="omega_ratio", abs_key="omega"):
    ratio = config.get(ratio_key)
    absolute = config.get(abs_key)
    if ratio is not None and absolute is not None:
        raise ValidationError(f"give either --{ratio_key.replace('_', '-')} or "
                              f"--{abs_key.replace('_', '-')}, not both")
    omega_c = kappa * n / 2.0
    if absolute is not None:
        return float(absolute)
    if ratio is not None:
        return float(ratio) * omega_c
    return None


# ---------------------------------------------------------------- subcommands

def _run_bound(config, out_dir, failures, diagnostics):
    n = config["n"]
    kappa = config["kappa"]
    outputs = []
    if config.get("omega_grid"):
        grid = parse_grid(config["omega_grid"])
        rows = []
        for ratio in grid:
            params = ModelParams.from_critical_ratio(n, float(ratio), kappa=kappa)
            try:
                res = qfi_rate(params, h=config["qfi_step"], tol=config["tol"])
                rows.append((n, ratio, params.omega, res.sensitivity,
                             res.qfi_rate, "ok"))
            except NumericalError as err:
                failures.append({"point": {"n": n, "omega_over_omega_c": float(ratio)},
                                 "error": str(err)})
                rows.append((n, ratio, params.omega, None, None, "failed"))
        path = out_dir / "sensitivity_vs_omega.csv"
        _write_csv(path, ["n", "omega_over_omega_c", "omega_over_kappa",
                          "sensitivity", "qfi_rate", "status"], rows)
        outputs.append(path)
    if config.get("n_list"):
        sizes = parse_int_list(config["n_list"])
        ratio = config.get("omega_ratio")
        if ratio is None:
            raise ValidationError("--n-list sweeps need --omega-ratio")
        rows = []
        values, fitted_sizes = [], []
        for size in sizes:
            params = ModelParams.from_critical_ratio(size, ratio, kappa=kappa)
            try:
                res = qfi_rate(params, h=config["qfi_step"], tol=config["tol"])
                rows.append((size, ratio, res.sensitivity, res.qfi_rate, "ok"))
                values.append(res.sensitivity)
                fitted_sizes.append(size)
            except NumericalError as err:
                failures.append({"point": {"n": size}, "error": str(err)})
                rows.append((size, ratio, None, None, "failed"))
        path = out_dir / "sensitivity_vs_n.csv"
        _write_csv(path, ["n", "omega_over_omega_c", "sensitivity",
                          "qfi_rate", "status"], rows)
        outputs.append(path)
        if len(fitted_sizes) >= config["fit_window"]:
            fit = fit_power_law(fitted_sizes, values, fit_window=config["fit_window"])
            diagnostics["scaling_fit"] = {"exponent": fit.exponent,
                                          "prefactor": fit.prefactor,
                                          "residual_rms": fit.residual_rms}
    if not outputs:
        raise ValidationError("bound needs --omega-grid and/or --n-list")
    return outputs


def _run_protocol1(config, out_dir, failures, diagnostics):
    n = config["n"]
    kappa = config["kappa"]
    if not config.get("omega_grid"):
        raise ValidationError("protocol1 needs --omega-grid")
    rows = []
    for ratio in parse_grid(config["omega_grid"]):
        params = ModelParams.from_critical_ratio(n, float(ratio), kappa=kappa)
        try:
            res = protocol1_error(params, omega_step=config["omega_step"],
                                  h_s=config["s_step"], tol=config["tol"])
            rows.append((n, ratio, res.delta_omega_bar, res.bound,
                         abs(res.intensity_derivative), res.sigma_prefactor, "ok"))
        except NumericalError as err:
            failures.append({"point": {"n": n, "omega_over_omega_c": float(ratio)},
                             "error": str(err)})
            rows.append((n, ratio, None, None, None, None, "failed"))
    path = out_dir / "protocol1_error.csv"
    _write_csv(path, ["n", "omega_over_omega_c", "delta_omega_bar",
                      "bound_inverse_sensitivity", "abs_intensity_derivative",
                      "sigma_prefactor", "status"], rows)
    return [path]


def _traj_cfg(config):
    return TrajectoryConfig(t_total=config["t_total"], t_burn=config["t_burn"],
                            seed=config["seed"], n_traj=config["n_traj"])


def _run_protocol2(config, out_dir, failures, diagnostics):
    kappa = config["kappa"]
    ratio_d = config.get("omega_d_ratio")
    if ratio_d is None:
        raise ValidationError("protocol2 needs --omega-d-ratio")
    outputs = []
    method = config["method"]

    def one_point(size, delta):
        omega_d = ratio_d * kappa * size / 2.0
        params = ModelParams(size, omega_d + delta, omega_d=omega_d, kappa=kappa)
        use_traj = method == "trajectories" or (
            method == "auto" and size > config["exact_cap"])
        if use_traj:
            return protocol2_error(params, method="trajectories",
                                   traj_cfg=_traj_cfg(config),
                                   d_omega=max(abs(delta) / 4, config["mc_d_omega"]),
                                   include_bound=config["bound"],
                                   n_workers=config["threads"])
        return protocol2_error(params, omega_step=config["omega_step"],
                               h_s=config["s_step"], tol=config["tol"],
                               include_bound=config["bound"])

    if config.get("delta_grid"):
        n = config["n"]
        rows = []
        for delta in parse_grid(config["delta_grid"]):
            try:
                res = one_point(n, float(delta))
                rows.append((n, ratio_d, delta, res.delta_omega_bar, res.bound,
                             abs(res.intensity_derivative), res.sigma_prefactor,
                             res.method, res.mc_error_bar, "ok"))
            except (NumericalError, ValidationError) as err:
                failures.append({"point": {"n": n, "delta_omega": float(delta)},
                                 "error": str(err)})
                rows.append((n, ratio_d, delta, None, None, None, None,
                             method, None, "failed"))
        path = out_dir / "protocol2_error_vs_delta.csv"
        _write_csv(path, ["n", "omega_d_over_omega_c", "delta_omega_over_kappa",
                          "delta_omega_bar", "bound_inverse_sensitivity",
                          "abs_intensity_derivative", "sigma_prefactor",
                          "method", "mc_error_bar", "status"], rows)
        outputs.append(path)
    if config.get("n_list"):
        delta = config.get("delta")
        if delta is None:
            raise ValidationError("protocol2 --n-list sweeps need --delta")
        rows, values, fitted = [], [], []
        for size in parse_int_list(config["n_list"]):
            try:
                res = one_point(size, delta)
                rows.append((size, ratio_d, delta, res.delta_omega_bar, res.bound,
                             res.method, res.mc_error_bar, "ok"))
                values.append(res.delta_omega_bar)
                fitted.append(size)
            except (NumericalError, ValidationError) as err:
                failures.append({"point": {"n": size, "delta_omega": delta},
                                 "error": str(err)})
                rows.append((size, ratio_d, delta, None, None, method, None, "failed"))
        path = out_dir / "protocol2_error_vs_n.csv"
        _write_csv(path, ["n", "omega_d_over_omega_c", "delta_omega_over_kappa",
                          "delta_omega_bar", "bound_inverse_sensitivity",
                          "method", "mc_error_bar", "status"], rows)
        outputs.append(path)
        if len(fitted) >= config["fit_window"]:
            fit = fit_power_law(fitted, values, fit_window=config["fit_window"])
            diagnostics["scaling_fit"] = {"exponent": fit.exponent,
                                          "prefactor": fit.prefactor,
                                          "residual_rms": fit.residual_rms}
    if not outputs:
        raise ValidationError("protocol2 needs --delta-grid and/or --n-list")
    return outputs


def _run_darkstate(config, out_dir, failures, diagnostics):
    n = config["n"]
    omega = config.get("omega")
    if omega is None:
        raise ValidationError("darkstate needs --omega (in units of kappa)")
    ds = build_dark_state(n, omega, verify=bool(config["check"]))
    rows = [(j, ds.coeffs[j].real, ds.coeffs[j].imag, ds.reduced[j])
            for j in range(len(ds.coeffs))]
    path = out_dir / "darkstate_coefficients.csv"
    _write_csv(path, ["J", "re_A_J", "im_A_J", "a_J"], rows)
    diagnostics["residual_h"] = ds.residual_h
    diagnostics["residual_jump"] = ds.residual_jm
    diagnostics["observables"] = dark_state_observables(ds)
    if config["check"]:
        print(f"residuals: |H psi| = {ds.residual_h:.3e}, "
              f"|J- psi| = {ds.residual_jm:.3e}")
    return [path]


def _run_scgf(config, out_dir, failures, diagnostics):
    n = config["n"]
    kappa = config["kappa"]
    ratio = config.get("omega_ratio")
    if ratio is None:
        raise ValidationError("scgf needs --omega-ratio")
    if config["cascaded"]:
        ratio_d = config.get("omega_d_ratio")
        if ratio_d is None:
            raise ValidationError("cascaded scgf needs --omega-d-ratio")
        params = ModelParams.from_critical_ratio(n, ratio, ratio_d, kappa=kappa)
    else:
        params = ModelParams.from_critical_ratio(n, ratio, kappa=kappa)
    grid = parse_grid(config["s_grid"]) if config.get("s_grid") else None
    res = scgf_curve(params, s_grid=grid, tol=config["tol"], h_s=config["s_step"])
    rows = []
    for s, theta in zip(res.s_grid, res.theta):
        if params.is_cascaded:
            ref = (np.exp(-s) - 1.0) * (params.omega - params.omega_d) ** 2 / kappa
        else:
            ref = hp_scgf(params.omega, kappa, s)
        rel = abs(theta - ref) / abs(theta) if theta != 0 else 0.0
        rows.append((n, ratio, config.get("omega_d_ratio"), s, theta, ref, rel, "ok"))
    path = out_dir / "scgf_curve.csv"
    _write_csv(path, ["n", "omega_over_omega_c", "omega_d_over_omega_c", "s",
                      "theta", "theta_leading_order", "relative_difference",
                      "status"], rows)
    diagnostics["theta_p0"] = res.theta_p0
    diagnostics["theta_pp0"] = res.theta_pp0
    diagnostics["intensity_check"] = res.intensity_check
    return [path]


def _run_qfi_check(config, out_dir, failures, diagnostics):
    n = config["n"]
    kappa = config["kappa"]
    omega1 = config.get("omega1")
    if omega1 is None or not config.get("omega2_grid"):
        raise ValidationError("qfi-check needs --omega1 and --omega2-grid (units of kappa)")
    base = build_btc_generator(ModelParams(n, omega1, kappa=kappa))
    rows = []
    for omega2 in parse_grid(config["omega2_grid"]):
        try:
            val = dominant_eigenvalue(deform(base, omega1, float(omega2)),
                                      tol=config["tol"])
            ref = hp_deformed_eigenvalue(omega1, float(omega2), kappa)
            rows.append((n, omega1, omega2, val.real, val.imag, ref, "ok"))
        except NumericalError as err:
            failures.append({"point": {"omega2": float(omega2)}, "error": str(err)})
            rows.append((n, omega1, omega2, None, None, None, "failed"))
    path = out_dir / "deformed_eigenvalue.csv"
    _write_csv(path, ["n", "omega1_over_kappa", "omega2_over_kappa",
                      "re_lambda", "im_lambda", "lambda_leading_order",
                      "status"], rows)
    return [path]


def _run_trajectories(config, out_dir, failures, diagnostics):
    n = config["n"]
    kappa = config["kappa"]
    omega = _resolve_omega(config, n, kappa)
    if omega is None:
        omega = 0.5 * kappa * n / 2.0
    if config["cascaded"]:
        omega_d = _resolve_omega(config, n, kappa, "omega_d_ratio", "omega_d")
        if omega_d is None:
            omega_d = 0.4 * kappa * n / 2.0
        params = ModelParams(n, omega, omega_d=omega_d, kappa=kappa)
        gen = build_cascaded_generator(params)
    else:
        omega_d = None
        params = ModelParams(n, omega, kappa=kappa)
        gen = build_btc_generator(params)
    cfg = _traj_cfg(config)
    records = run_ensemble(gen, cfg, n_workers=config["threads"],
                           keep_times=False)
    stats = ensemble_stats(records)
    path = out_dir / "trajectory_stats.csv"
    _write_csv(path, ["n", "cascaded", "omega_over_kappa", "omega_d_over_kappa",
                      "seed", "n_traj", "t_total", "t_burn", "mean_intensity",
                      "variance", "stderr_mean", "sigma_prefactor"],
               [(n, bool(config["cascaded"]), omega, omega_d, cfg.seed,
                 stats.n_traj, cfg.t_total, cfg.t_burn, stats.mean,
                 stats.variance, stats.stderr_mean, stats.sigma_prefactor)])
    outputs = [path]
    if config.get("dump"):
        dump_path = out_dir / config["dump"]
        _write_csv(dump_path, ["traj_index", "n_counts", "i_t"],
                   [(rec.traj_index, rec.n_counts, rec.i_t) for rec in records])
        outputs.append(dump_path)
    diagnostics["mean_intensity"] = stats.mean
    diagnostics["sigma_prefactor"] = stats.sigma_prefactor
    return outputs


_RUNNERS = {
    "bound": _run_bound,
    "protocol1": _run_protocol1,
    "protocol2": _run_protocol2,
    "darkstate": _run_darkstate,
    "scgf": _run_scgf,
    "qfi-check": _run_qfi_check,
    "trajectories": _run_trajectories,
}

_DEFAULTS = {
    "kappa": 1.0, "tol": 1e-9, "threads": 1, "fit_window": 6,
    "omega_step": 1e-3, "s_step": 1e-3, "qfi_step": 1e-3,
    "t_total": 440.0, "t_burn": 40.0, "seed": 0, "n_traj": 1000,
    "method": "auto", "exact_cap": 12, "mc_d_omega": 2.5e-3,
    "cascaded": False, "check": False, "bound": False,
}


def _add_common(sub):
    sub.add_argument("--config", help="JSON file with option defaults")
    sub.add_argument("--out-dir", default=".", help="output directory")
    sub.add_argument("--kappa", type=float)
    sub.add_argument("--tol", type=float)
    sub.add_argument("--threads", type=int, help="worker processes for sweeps/ensembles")


def build_parser() -> _Parser:
    parser = _Parser(prog="btcsensor",
                     description="Collective-spin continuous sensor toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("bound", parents=[], help="emission-field sensitivity bound")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--omega-grid", help="omega/omega_c grid start:stop:step")
    p.add_argument("--n-list", help="system sizes start:stop:step or comma list")
    p.add_argument("--omega-ratio", type=float, help="omega/omega_c for --n-list")
    p.add_argument("--qfi-step", type=float, help="stencil step in kappa units")
    p.add_argument("--fit-window", type=int)

    p = subs.add_parser("protocol1", help="direct photocounting estimation error")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--omega-grid", help="omega/omega_c grid")
    p.add_argument("--omega-step", type=float)
    p.add_argument("--s-step", type=float)

    p = subs.add_parser("protocol2", help="cascaded decoder estimation error")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--n-list")
    p.add_argument("--omega-d-ratio", type=float, help="omega_D/omega_c")
    p.add_argument("--delta-grid", help="delta omega grid in kappa units")
    p.add_argument("--delta", type=float, help="single delta omega for --n-list")
    p.add_argument("--omega-step", type=float)
    p.add_argument("--s-step", type=float)
    p.add_argument("--method", choices=["auto", "spectral", "trajectories"])
    p.add_argument("--exact-cap", type=int, help="largest N solved exactly in auto mode")
    p.add_argument("--bound", action="store_true", default=None,
                   help="also compute the sensitivity bound per point")
    p.add_argument("--fit-window", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--t-total", type=float)
    p.add_argument("--t-burn", type=float)
    p.add_argument("--mc-d-omega", type=float)

    p = subs.add_parser("darkstate", help="cascaded dark-state coefficients")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--omega", type=float, help="omega/kappa on the matched-drive line")
    p.add_argument("--check", action="store_true", default=None,
                   help="verify residuals against 1e-10")

    p = subs.add_parser("scgf", help="cumulant generating function curve")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--omega-ratio", type=float)
    p.add_argument("--cascaded", action="store_true", default=None)
    p.add_argument("--omega-d-ratio", type=float)
    p.add_argument("--s-grid", help="counting-field grid start:stop:step")
    p.add_argument("--s-step", type=float)

    p = subs.add_parser("qfi-check", help="deformed-generator eigenvalue sweep")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--omega1", type=float, help="left frequency, units of kappa")
    p.add_argument("--omega2-grid", help="right frequency grid, units of kappa")

    p = subs.add_parser("trajectories", help="photocount trajectory ensembles")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--cascaded", action="store_true", default=None)
    p.add_argument("--omega", type=float, help="omega/kappa")
    p.add_argument("--omega-ratio", type=float, help="omega/omega_c")
    p.add_argument("--omega-d", type=float)
    p.add_argument("--omega-d-ratio", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--t-total", type=float)
    p.add_argument("--t-burn", type=float)
    p.add_argument("--dump", help="also write per-trajectory records to this CSV")
    return parser


def _resolve_config(args) -> dict:
    """Merge precedence: explicit flags > config file > built-in defaults."""
    given = {k: v for k, v in vars(args).items()
             if k not in ("command", "config") and v is not None}
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ValidationError(f"config file {args.config}: {err}")
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        file_cfg = {str(k).replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(vars(args)) - set(_DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    config = dict(_DEFAULTS)
    config.update(file_cfg)
    config.update(given)
    if config.get("n") is None and "n_list" not in given and not config.get("n_list"):
        raise ValidationError("--n is required (field: n)")
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _resolve_config(args)
        out_dir = Path(config.get("out_dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        failures, diagnostics = [], {}
        started = time.perf_counter()
        outputs = _RUNNERS[args.command](config, out_dir, failures, diagnostics)
        wall = time.perf_counter() - started
        manifest_path = out_dir / f"{args.command.replace('-', '_')}_manifest.json"
        _write_manifest(manifest_path, args.command,
                        {k: v for k, v in sorted(config.items())},
                        outputs, wall, failures, diagnostics)
        for path in outputs:
            print(f"wrote {path}")
        print(f"wrote {manifest_path}")
        if failures:
            print(f"{len(failures)} point(s) failed; see manifest", file=sys.stderr)
            return 2
        return 0
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
