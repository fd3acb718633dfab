"""Command line front end.

Every subcommand reads an optional JSON config (``--config``), writes CSV and
JSON artifacts into ``--out`` and finishes with ``manifest.json`` holding a
sha256 per artifact.  Exit codes: 0 success, 2 config error, 3 domain or
precondition error, 4 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance, kernel, linear, spectral
from . import condensation as cond
from .errors import ConfigError, WaveKineticError

log = logging.getLogger("wavekinetic")

THETA_RANGE = (-1.0, 2.5)


def _num_list(v):
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, list) and all(isinstance(a, (int, float)) for a in v):
        return [float(a) for a in v]
    raise TypeError("expected a number or a list of numbers")


def _theta_list(v):
    out = _num_list(v)
    for th in out:
        if not (THETA_RANGE[0] < th < THETA_RANGE[1]):
            raise ConfigError(f"theta = {th} outside the valid range (-1, 5/2)")
    return out


SCHEMA = {
    "kernel-table": {"n_points": (int, 2001), "x_min": (float, -20.0), "x_max": (float, 20.0)},
    "spectral-scan": {"u_min": (float, 0.0), "u_max": (float, 20.0), "n": (int, 201),
                      "sigma": (_num_list, [0.0, 0.75])},
    "linear-evolve": {"kind": (str, "gaussian"), "params": (dict, {}), "half_width": (float, 40.0),
                      "n": (int, 2 ** 13), "times": (_num_list, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
                      "sigma": (str, "auto"), "method": (str, "spectral"),
                      "moments": (_num_list, [0.5, 1.0]), "norm_theta": (_theta_list, [0.0, 0.5]),
                      "trajectory": (bool, True), "stride": (int, 8)},
    "nonlinear-evolve": {"A": (float, 1.0), "B_cut": (float, 1.0), "n_atoms": (int, 96),
                         "omega_min": (float, 1e-4), "omega_max": (float, 1e2),
                         "t_end": (float, 0.1), "snapshot_times": (_num_list, [0.0, 0.05, 0.1]),
                         "cfl": (float, 0.1)},
    "experiment condensation-scaling": {"A_list": (_num_list, [1.0, 2.0, 4.0, 8.0]),
                                        "n_atoms": (int, 96), "omega_min": (float, 1e-4),
                                        "omega_max": (float, 1e2), "B_cut": (float, 1.0),
                                        "horizon": (float, 50.0), "cfl": (float, 0.1),
                                        "thresholds": (_num_list, [1e-3, 1e-4])},
    "acceptance": {"criteria": (_num_list, list(range(1, 14))), "determinism": (bool, True)},
}


def load_config(path, command=None):
    """Parse a JSON config and check it against the schema of ``command``.

    The file may name the command itself with a "command" key.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    named = raw.pop("command", None)
    command = command or named
    if command is None:
        raise ConfigError("no command given on the command line or in the config")
    if named is not None and named != command:
        raise ConfigError(f"config is for {named!r}, not {command!r}")
    if command not in SCHEMA:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMA[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default) in schema.items():
        if key not in raw:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(raw[key])
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    return command, cfg


# ---------------------------------------------------------------------------
# artifacts

def _f17(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _f17(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(_f17(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return Path(path)


def _rows(path):
    return max(0, len(Path(path).read_text().splitlines()) - 1) if path.suffix == ".csv" else None


def derived_constants():
    ctx = linear.default_context()
    return {"gamma": ctx.gamma, "gamma_N": ctx.gamma_N, "omega_3i/4": ctx.omega_critical,
            "W_second_3/2": float(np.real(ctx.w_derivative(1.5, 2))), "nu": ctx.nu,
            "K_l1_norm": linear.k_l1_norm()}


TIME_CONVENTION = {"t": "equation time of the rescaled equation",
                   "t_original": "time of the original equation, t_original = 2 t"}


def write_manifest(out, command, cfg, artifacts, serial):
    # paths relative to the output directory keep the manifest independent of --out
    entries = [{"file": p.name, "path": str(Path(p).relative_to(out)), "rows": _rows(p),
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest()} for p in artifacts]
    manifest = {"command": command, "config": cfg, "mode": "serial" if serial else "parallel",
                "version": __version__, "derived_constants": derived_constants(),
                "time_convention": TIME_CONVENTION, "artifacts": entries}
    return write_json(Path(out) / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# commands

def cmd_kernel_table(cfg, out, serial):
    x = np.linspace(cfg["x_min"], cfg["x_max"], cfg["n_points"])
    x = x[x != 0.0]
    csv = write_csv(out / "kernel_table.csv", ["x", "K", "K_prime", "envelope_bound"],
                    zip(x, kernel.eval_K(x), kernel.eval_Kprime(x), kernel.envelope_bound(x)))
    header = {"grid": {"x_min": cfg["x_min"], "x_max": cfg["x_max"], "n_points": cfg["n_points"],
                       "zero_dropped": bool(x.size < cfg["n_points"])},
              "l1_norm": kernel.k_norm(1.0), "weighted_l1_norm": kernel.k_norm(1.0, "e^{x/2}"),
              "singular_constant": kernel.SINGULAR_CONSTANT,
              "envelope_bound": "2 |leading tail form|, valid for |x| >= 3"}
    return [csv, write_json(out / "kernel_table.json", header)]


def cmd_spectral_scan(cfg, out, serial):
    """Scan along horizontal lines xi = u + i sigma, i.e. s = -2 i xi = 2 sigma - 2 i u.

    K^(xi) is written as 2 W_V(s) (the Mellin route; the Fourier quadrature
    agrees to 1e-6 on the strip, see acceptance criterion 4).
    """
    ctx = linear.default_context()
    u = np.linspace(cfg["u_min"], cfg["u_max"], cfg["n"])
    rows = []
    for sig in cfg["sigma"]:
        xi = u + 1j * sig
        s_val = spectral.xi_to_s(xi)
        wv = np.atleast_1d(ctx.W_V(s_val))
        w = np.atleast_1d(ctx.W(s_val))
        om = np.atleast_1d(ctx.omega(xi, route="mellin"))
        for k in range(u.size):
            rows.append((u[k], sig, s_val[k].real, s_val[k].imag, wv[k].real, wv[k].imag,
                         w[k].real, w[k].imag, 2 * wv[k].real, 2 * wv[k].imag,
                         om[k].real, om[k].imag))
    header = ["u", "sigma", "s_re", "s_im", "W_V_re", "W_V_im", "W_re", "W_im",
              "K_hat_re", "K_hat_im", "Omega_re", "Omega_im"]
    csv = write_csv(out / "spectral_scan.csv", header, rows)
    summary = {"gamma": ctx.gamma, "gamma_N": ctx.gamma_N, "gamma_consistency": ctx.gamma_consistency,
               "omega_3i/4": ctx.omega_critical, "nu": ctx.nu,
               "W_second_3/2": float(np.real(ctx.w_derivative(1.5, 2))),
               "omega_second_3i/4": linear.omega_second_derivative(ctx)}
    return [csv, write_json(out / "spectral_summary.json", summary)]


def _plateau(f, kind, params):
    """Mean of f e^{-Ax} on [-L/2, -L/4] for exp-left data."""
    if kind != "exp-left":
        return None
    x = f.x_grid
    L = f.half_width
    m = (x >= -L / 2) & (x <= -L / 4)
    return float(np.mean(f.values[m] * np.exp(-params["A"] * x[m])))


def cmd_linear_evolve(cfg, out, serial):
    ctx = linear.default_context()
    x = linear.make_grid(cfg["half_width"], cfg["n"])
    f0 = linear.initial_data(cfg["kind"], x, **cfg["params"])
    sigma = cfg["sigma"] if cfg["sigma"] == "auto" else float(cfg["sigma"])
    if cfg["method"] not in ("spectral", "timestep"):
        raise ConfigError("method must be 'spectral' or 'timestep'")
    a, b = f0.decay_tags
    bad = [r for r in cfg["moments"] if not (r + a > 0 and r + b < 0)]
    if bad:
        raise ConfigError(f"moments {bad} are not integrable against the envelope {f0.decay_tags}")
    # weights that the envelope does not absorb would integrate round-off
    thetas = [th for th in cfg["norm_theta"] if th + a > 0 and th + b < 0]
    times = [0.0] + sorted(t for t in cfg["times"] if t > 0)
    fields = []
    for t in times:
        if t == 0.0:
            fields.append(f0)
        elif cfg["method"] == "spectral":
            fields.append(linear.spectral_propagate(f0, t, sigma=sigma, context=ctx))
        else:
            fields.append(linear.timestep_propagate(f0, t, sigma=sigma, context=ctx))
    artifacts = []
    stride = max(1, cfg["stride"])
    if cfg["trajectory"]:
        rows = [(f.time, 2 * f.time, xv, fv)
                for f in fields for xv, fv in zip(x[::stride], f.values[::stride])]
        artifacts.append(write_csv(out / "linear_trajectory.csv", ["t", "t_original", "x", "f"], rows))
    led = linear.moment_ledger(f0, cfg["moments"], times, context=ctx)
    rows = [(t, 2 * t, r, led.moments[i, j])
            for i, t in enumerate(led.times) for j, r in enumerate(led.r_values)]
    artifacts.append(write_csv(out / "linear_moments.csv", ["t", "t_original", "r", "M_r"], rows))
    fits = {}
    for r in led.r_values:
        try:
            lam = linear.fit_moment_exponent(led, r)
        except WaveKineticError as exc:
            fits[f"{r:g}"] = {"error": str(exc)}
            continue
        # M_r ~ e^{lambda t} in equation time is e^{(lambda/2) t_original}
        fits[f"{r:g}"] = {"lambda": lam, "lambda_original_time": lam / 2,
                          "omega_ir": float(ctx.moment_exponent(r))}
    report = {"gamma": ctx.gamma, "moment_exponents": fits,
              "norms": [{"t": f.time, **{f"L1_theta={th:g}": linear.lp_norm(f, 1, th)
                                         for th in thetas}} for f in fields],
              "norms_skipped": [th for th in cfg["norm_theta"] if th not in thetas]}
    plateaus = [_plateau(f, cfg["kind"], cfg["params"]) for f in fields]
    if plateaus[0] is not None:
        A = cfg["params"]["A"]
        report["plateau"] = [{"t": f.time, "measured": p,
                              "target": float(np.exp(f.time * np.real(ctx.omega(-1j * A, route="mellin"))))}
                             for f, p in zip(fields, plateaus)]
    artifacts.append(write_json(out / "linear_report.json", report))
    return artifacts


def cmd_nonlinear_evolve(cfg, out, serial):
    omega = cond.geometric_grid(cfg["n_atoms"], cfg["omega_min"], cfg["omega_max"])
    s0 = cond.make_rj_truncated(cfg["A"], cfg["B_cut"], omega)
    snaps, series, final = cond.evolve(s0, cfg["t_end"], cfl=cfg["cfl"],
                                       snapshot_times=cfg["snapshot_times"])
    rows = []
    for st in snaps:
        rows.extend((st.time, w, g, st.condensate) for w, g in zip(st.omega, st.g))
    csv = write_csv(out / "nonlinear_snapshots.csv", ["t", "omega", "g", "condensate"], rows)
    ledger = dict(final.ledger)
    ledger.update({"final_time": final.time, "final_mass": final.total_mass,
                   "final_energy": final.total_energy, "condensate": final.condensate,
                   "steps": series["steps"],
                   "condensation_time_1e-3": cond.condensation_time(series, 1e-3)})
    return [csv, write_json(out / "nonlinear_ledger.json", ledger)]


def cmd_scaling(cfg, out, serial):
    res = cond.scaling_experiment(
        A_list=cfg["A_list"], n_atoms=cfg["n_atoms"], omega_min=cfg["omega_min"],
        omega_max=cfg["omega_max"], B_cut=cfg["B_cut"], horizon=cfg["horizon"],
        cfl=cfg["cfl"], thresholds=tuple(cfg["thresholds"]), workers=1 if serial else 4)
    rows = []
    for p in res["per_A"]:
        for th, ts in p["t_star"].items():
            rows.append((p["A"], th, "not condensed by t_end" if ts is None else ts))
    csv = write_csv(out / "condensation_tstar.csv", ["A", "threshold", "t_star"], rows)
    summary = {"slope": {str(k): v for k, v in res["slope"].items()}, "n_atoms": res["n_atoms"],
               "per_A": res["per_A"], "partial": any(v is None for v in res["slope"].values())}
    return [csv, write_json(out / "condensation_slope.json", summary)]


def cmd_acceptance(cfg, out, serial):
    ids = [int(c) for c in cfg["criteria"]]
    results = acceptance.run_acceptance(ids, determinism=cfg["determinism"], log=print)
    body = acceptance.results_csv([r for r in results if r.cid != 14])
    csv = out / "acceptance.csv"
    csv.write_text(body)
    summary = {str(r.cid): {"name": r.name, "passed": bool(r.passed), "target": r.target,
                            "parts": r.parts, "detail": r.detail, "measured": r.measured}
               for r in results}
    return [csv, write_json(out / "acceptance.json", summary)]


COMMANDS = {
    "kernel-table": cmd_kernel_table,
    "spectral-scan": cmd_spectral_scan,
    "linear-evolve": cmd_linear_evolve,
    "nonlinear-evolve": cmd_nonlinear_evolve,
    "experiment condensation-scaling": cmd_scaling,
    "acceptance": cmd_acceptance,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="wavekinetic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON configuration file")
    common.add_argument("--out", type=Path, default=Path("wavekinetic-out"), help="output directory")
    common.add_argument("--serial", action="store_true", help="reference serial mode")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("kernel-table", "spectral-scan", "linear-evolve", "nonlinear-evolve", "acceptance"):
        sub.add_parser(name, parents=[common])
    sub.add_parser("run", parents=[common], help="take the command from the config file")
    exp = sub.add_parser("experiment", help="named experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)
    exp_sub.add_parser("condensation-scaling", parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment":
        command = f"experiment {args.experiment}"
    elif args.command == "run":
        command = None
    else:
        command = args.command
    try:
        command, cfg = load_config(args.config, command)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        log.debug("running %s with %s", command, cfg)
        artifacts = COMMANDS[command](cfg, out, args.serial)
        manifest = write_manifest(out, command, cfg, artifacts, args.serial)
        print(manifest)
        return 0
    except WaveKineticError as exc:
        print(f"wavekinetic: {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return exc.exit_code


def _origin(exc):
    """Name of the innermost package module in the traceback."""
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("wavekinetic."):
            name = mod.split(".", 1)[1]
        tb = tb.tb_next
    return name


if __name__ == "__main__":
    sys.exit(main())
