"""Command-line entry point: config ingestion, dispatch, and run manifests.

Every subcommand resolves a config (built-in defaults, then ``--config``,
then explicit flags), runs, prints one line per check, and with ``--out``
writes report.json, config.json, series CSVs and manifest.json.
Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .acceptance import CRITERIA, criterion_4, criterion_5, lipschitz_field, run_suite
from .experiments import (
    crank_nicolson_oracle,
    run_evolution,
    run_feynman_kac,
    run_heat_check,
    run_martingale_convergence,
    run_mckean_vlasov,
)
from .hermite import TruncationScheme
from .operators import CoefficientField, PointwiseFunction
from .report import Report, check_ge, check_le, check_true, dumps
from .sde import NoiseDriver, euler_maruyama, grid_steps
from .sobolev import SpectralElement, exact_shift_norm, unit_gaussian
from .spde import (
    blowup_monitor,
    coefficients_csv,
    duality_check,
    flow_restart_check,
    fourier_identity_defect,
    frozen_record,
    solve_picard,
    solve_translation,
    spde_residual,
)


class ConfigError(ValueError):
    pass


COMMON = {"seed": 2024, "dt": 1e-3, "T": 0.5, "N": 24, "paths": 1, "field": "lipschitz", "y": "e0",
          "p": 1.0, "q": 0}

DEFAULTS = {
    "solve": {"snapshots": 11, "radius": None},
    "picard": {"T": 0.25, "paths": 64, "r": 2.0, "k_max": 6, "ratio_tol": 1e-2},
    "residual": {"tol": 5e-2, "control_factor": 10.0},
    "monotonicity": {"samples": 200, "lam": 2.0, "ladder": [16, 32, 64]},
    "adjoint": {},
    "heat": {"field": {"constant": {"sigma": [[1.0]], "b": [0.0]}}, "paths": 20000},
    "evolution": {"N": 32, "T": 0.25, "tol": 1e-3,
                  "field": {"sigma": [[{"kind": "constant", "c": 1.0}]],
                            "b": [{"kind": "dual_pairing", "w": {"basis": 0}}]}},
    "feynman-kac": {"paths": 50000, "V": {"kind": "polynomial", "params": [0.0, 0.0, -0.5]},
                    "f": {"kind": "gaussian", "params": [1.0, 0.0, 1.0]},
                    "sigma": {"kind": "polynomial", "params": [1.0]},
                    "b": {"kind": "polynomial", "params": [0.0, -1.0]},
                    "xs": [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0], "fd_points": 2048, "fd_L": 8.0},
    "mckean-vlasov": {"paths": 2000, "dt": 1e-2, "T": 1.0, "m0": 1.0},
    "mollifier": {"paths": 20000, "dt": 1e-2, "T": 1.0, "x": 0.0, "eps": [1.0, 0.5, 0.25, 0.125],
                  "sigma_bar": {"kind": "trig", "params": [1.0, 0.3, 1.0, 0.0]},
                  "b_bar": {"kind": "trig", "params": [0.0, 0.2, 1.0, math.pi / 2]}},
    "duality": {"paths": 200, "f": {"basis": 1}, "frequencies": 16, "shifts": [-0.8, 0.35, 1.2]},
    "flow-check": {"restart_times": [0.0, 0.1, 0.25], "tol": 1e-10},
    "explode": {"dt": 1e-4, "T": 1.5, "x0": 1.0, "radii": [1e3, 1e6]},
    "suite": {"N": None, "paths": None, "only": None},
}

COMMANDS = tuple(DEFAULTS)


# -- config resolution ----------------------------------------------------------------

def resolve_config(command: str, file_cfg: dict | None, flags: dict) -> dict:
    cfg = copy.deepcopy(COMMON)
    cfg.update(copy.deepcopy(DEFAULTS[command]))
    if file_cfg:
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(file_cfg)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg["command"] = command
    validate(cfg)
    return cfg


def validate(cfg: dict):
    for key in ("dt", "T"):
        v = cfg.get(key)
        if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"{key} must be a positive finite number, got {v!r}")
    for key in ("N", "paths"):
        v = cfg.get(key)
        if v is not None and not (isinstance(v, int) and v >= (0 if key == "N" else 1)):
            raise ConfigError(f"{key} must be an integer >= {0 if key == 'N' else 1}, got {v!r}")
    if not isinstance(cfg.get("seed"), int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if cfg.get("dt") and cfg.get("T"):
        try:
            grid_steps(cfg["dt"], cfg["T"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def build_scheme(cfg) -> TruncationScheme:
    return TruncationScheme(int(cfg.get("d", 1)), int(cfg["N"]))


def build_element(spec, scheme: TruncationScheme) -> SpectralElement:
    if spec in (None, "e0"):
        return unit_gaussian(scheme)
    if isinstance(spec, dict) and "basis" in spec:
        return SpectralElement.basis(scheme, spec["basis"])
    if isinstance(spec, dict) and "ordering" in spec:
        el = SpectralElement.from_json(spec)
        return el.pad(scheme.N) if el.scheme.N <= scheme.N else el.restrict(scheme.N)
    if isinstance(spec, dict) and "coeffs" in spec:
        c = np.zeros(scheme.size)
        vals = np.asarray(spec["coeffs"], dtype=float)
        if vals.size > scheme.size:
            raise ConfigError("more coefficients than the truncation holds")
        c[: vals.size] = vals
        return SpectralElement(scheme, c)
    raise ConfigError(f"unrecognized element spec {spec!r}")


def build_field(spec, scheme: TruncationScheme) -> CoefficientField:
    if spec == "lipschitz":
        return lipschitz_field(scheme)
    if isinstance(spec, dict) and "constant" in spec:
        c = spec["constant"]
        return CoefficientField.constant(c["sigma"], c["b"])
    if isinstance(spec, dict):
        return CoefficientField.from_dict(spec, scheme)
    raise ConfigError(f"unrecognized field spec {spec!r}")


def build_function(spec) -> PointwiseFunction:
    try:
        return PointwiseFunction.from_dict(spec)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad pointwise function {spec!r}") from exc


# -- commands ----------------------------------------------------------------------

def _driver(cfg, n=1):
    return NoiseDriver(cfg["seed"], 0, n, cfg["dt"])


def cmd_solve(cfg, files):
    scheme = build_scheme(cfg)
    y, fld = build_element(cfg["y"], scheme), build_field(cfg["field"], scheme)
    times = np.linspace(0.0, cfg["T"], int(cfg["snapshots"]))
    rec = solve_translation(fld, y, cfg["dt"], cfg["T"], _driver(cfg, fld.n), times, p=cfg["p"], q=cfg["q"],
                            radius=cfg["radius"])
    rep = Report("solve", metrics={"status": rec.status, "eta_hat": rec.eta_hat, "snapshots": len(rec.snapshots),
                                   "field_sha256": fld.digest()})
    rep.metrics.update(rec.diagnostics)
    rep.add(check_true("solve: path did not explode", rec.status != "exploded", f"status={rec.status}"))
    files["path.csv"] = rec.path.to_csv()
    for i, snap in enumerate(rec.snapshots):
        files[f"snapshot_{i:03d}.csv"] = coefficients_csv(snap)
    return rep


def cmd_picard(cfg, files):
    scheme = build_scheme(cfg)
    y, fld = build_element(cfg["y"], scheme), build_field(cfg["field"], scheme)
    rec = solve_picard(fld, y, cfg["r"], cfg["k_max"], cfg["dt"], cfg["T"], _driver(cfg, fld.n),
                       paths=cfg["paths"], q=int(cfg["q"]), error_times=[cfg["T"]])
    e = rec.mean_square_errors()[:, 0]
    rep = Report("picard", metrics={"e_k": e.tolist()})
    rep.series["picard"] = (["k", "e_k"], np.column_stack([np.arange(1, e.size + 1), e]))
    tail = e[1:]
    if tail.size >= 2:
        ratios = tail[1:] / tail[:-1]
        rep.add(check_true("picard: e_k strictly decreasing from k=2", np.all(ratios < 1.0),
                           f"max e_(k+1)/e_k = {ratios.max():.3g}"))
        rep.add(check_le("picard: e_kmax / e_2", tail[-1] / tail[0], cfg["ratio_tol"]))
    return rep


def cmd_residual(cfg, files):
    scheme = build_scheme(cfg)
    y, fld = build_element(cfg["y"], scheme), build_field(cfg["field"], scheme)
    rec = solve_translation(fld, y, cfg["dt"], cfg["T"], _driver(cfg, fld.n), q=cfg["q"])
    res = spde_residual(fld, rec)
    ctrl = spde_residual(fld, frozen_record(rec))
    rep = Report("residual", metrics={"residual": res.tolist(), "frozen_control": ctrl.tolist()})
    rep.series["residual"] = (["t", "residual", "frozen_control"], np.column_stack([rec.snapshot_times, res, ctrl]))
    rep.add(check_le("residual: max_t ||Y_t - y - int L - int A dB||_q", res.max(), cfg["tol"]))
    rep.add(check_ge("residual: frozen control / residual", ctrl.max() / max(res.max(), 1e-300),
                     cfg["control_factor"]))
    return rep


def cmd_monotonicity(cfg, files):
    return criterion_4(samples=cfg["samples"], seed=cfg["seed"], lam=cfg["lam"], p=cfg["p"], q=cfg["q"],
                       ladder=tuple(cfg["ladder"]))


def cmd_adjoint(cfg, files):
    return criterion_5()


def cmd_heat(cfg, files):
    scheme = build_scheme(cfg)
    try:
        return run_heat_check(build_field(cfg["field"], scheme), build_element(cfg["y"], scheme), cfg["T"],
                              cfg["paths"], cfg["seed"], dt=cfg["dt"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_evolution(cfg, files):
    scheme = build_scheme(cfg)
    try:
        return run_evolution(build_field(cfg["field"], scheme), build_element(cfg["y"], scheme), cfg["dt"],
                             cfg["T"], cfg["tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_feynman_kac(cfg, files):
    V, f, sig, b = (build_function(cfg[k]) for k in ("V", "f", "sigma", "b"))
    oracle = crank_nicolson_oracle(V, f, sig, b, cfg["T"], L=cfg["fd_L"], points=cfg["fd_points"])
    return run_feynman_kac(V, f, sig, b, cfg["xs"], cfg["T"], cfg["paths"], cfg["seed"], cfg["dt"], oracle=oracle)


def cmd_mckean_vlasov(cfg, files):
    return run_mckean_vlasov(cfg["paths"], cfg["dt"], cfg["T"], cfg["seed"], cfg["m0"])


def cmd_mollifier(cfg, files):
    try:
        return run_martingale_convergence(build_function(cfg["sigma_bar"]), build_function(cfg["b_bar"]),
                                          cfg["eps"], cfg["x"], cfg["T"], cfg["paths"], cfg["seed"], cfg["dt"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_duality(cfg, files):
    scheme = build_scheme(cfg)
    y, fld = build_element(cfg["y"], scheme), build_field(cfg["field"], scheme)
    f = build_element(cfg["f"], scheme)
    res = duality_check(fld, y, f, cfg["T"], cfg["paths"], _driver(cfg, fld.n).with_stream(1), cfg["dt"])
    xi = np.linspace(-3.0, 3.0, int(cfg["frequencies"]))
    four = max(fourier_identity_defect(y, z, xi) for z in cfg["shifts"])
    rep = Report("duality", metrics={"lhs": res.lhs, "rhs": res.rhs, "stderr": res.stderr,
                                     "max_path_defect": res.max_path_defect, "fourier_defect": four})
    rep.add(check_le("duality: per-path defect", res.max_path_defect, 1e-6))
    rep.add(check_le("duality: Fourier identity defect", four, 1e-6))
    return rep


def cmd_flow_check(cfg, files):
    scheme = build_scheme(cfg)
    y, fld = build_element(cfg["y"], scheme), build_field(cfg["field"], scheme)
    dB = _driver(cfg, fld.n).increments(grid_steps(cfg["dt"], cfg["T"]))
    rows = []
    for s in cfg["restart_times"]:
        d = flow_restart_check(fld, y, s, cfg["T"], cfg["dt"], dB=dB, q=cfg["q"])
        rows.append([s, d.z_defect, d.y_defect])
    rows = np.array(rows)
    rep = Report("flow-check", metrics={"max_defect": float((rows[:, 1] + rows[:, 2]).max())})
    rep.series["restart"] = (["s", "z_defect", "y_defect"], rows)
    rep.add(check_le("flow-check: restart defect", rep.metrics["max_defect"], cfg["tol"]))
    return rep


def cmd_explode(cfg, files):
    steps = grid_steps(cfg["dt"], cfg["T"])
    etas = {}
    for R in cfg["radii"]:
        path = euler_maruyama(lambda x: [[0.0]], lambda x: x * x, cfg["x0"], cfg["dt"], cfg["T"],
                              dB=np.zeros(steps), R_explode=float(R))
        etas[float(R)] = path
    rep = Report("explode", metrics={"eta_hat": {f"{R:g}": p.eta_hat for R, p in etas.items()}})
    exact = 1.0 / cfg["x0"]
    vals = [p.eta_hat if p.eta_hat is not None else math.inf for p in etas.values()]
    for R, v in zip(etas, vals):
        rep.add(check_le(f"explode: |eta_hat(R={R:g}) - 1/x0| / (1/x0)", abs(v - exact) / exact, 0.05))
    rep.add(check_le("explode: spread of eta_hat across radii (relative)",
                     (max(vals) - min(vals)) / max(vals), 0.02))
    last = etas[max(etas)]
    y = unit_gaussian(build_scheme(cfg))
    series = exact_shift_norm(y, last.X[: last.stop_index + 1], 1)
    rep.add(check_true("explode: norm blow-up monitor triggers", blowup_monitor(series)))
    return rep


def cmd_suite(cfg, files, echo=None):
    only = cfg.get("only")
    if only is not None:
        try:
            only = [int(k) for k in only]
        except (TypeError, ValueError):
            only = []
        if not only or any(k not in CRITERIA for k in only):
            raise ConfigError(f"only must list criteria among {sorted(CRITERIA)}, got {cfg.get('only')!r}")
    reports = run_suite(cfg.get("N"), cfg.get("paths"), cfg.get("seed"), only=only, echo=echo)
    rep = Report("suite")
    for r in reports:
        rep.checks.extend(r.checks)
        rep.metrics[r.experiment] = r.metrics
        for name, ser in r.series.items():
            rep.series[f"{r.experiment.split()[0]}_{name}"] = ser
    return rep


HANDLERS = {
    "solve": cmd_solve, "picard": cmd_picard, "residual": cmd_residual, "monotonicity": cmd_monotonicity,
    "adjoint": cmd_adjoint, "heat": cmd_heat, "evolution": cmd_evolution, "feynman-kac": cmd_feynman_kac,
    "mckean-vlasov": cmd_mckean_vlasov, "mollifier": cmd_mollifier, "duality": cmd_duality,
    "flow-check": cmd_flow_check, "explode": cmd_explode, "suite": cmd_suite,
}


# -- output -----------------------------------------------------------------------------

def checks_csv(rep: Report) -> str:
    lines = ["name,measured,relation,tolerance,passed"]
    for c in rep.checks:
        lines.append(f"\"{c.name}\",{c.value:.17g},{c.relation},{c.tolerance:.17g},{int(c.passed)}")
    return "\n".join(lines) + "\n"


def write_outputs(outdir: str, cfg: dict, rep: Report, files: dict, started: str, finished: str) -> dict:
    os.makedirs(outdir, exist_ok=True)
    files = dict(files)
    files["config.json"] = json.dumps(cfg, indent=2, sort_keys=True) + "\n"
    files["report.json"] = dumps(rep.to_dict()) + "\n"
    for name in rep.series:
        files[f"{name}.csv"] = rep.series_csv(name)
    for name, text in files.items():
        with open(os.path.join(outdir, name), "w") as fh:
            fh.write(text)
    manifest = {
        "tool": "hermspde", "version": __version__, "command": cfg["command"], "config": cfg,
        "seed": cfg.get("seed"), "started": started, "finished": finished,
        "passed": rep.passed, "checks": [c.to_dict() for c in rep.checks],
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        fh.write(dumps(manifest) + "\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--T", type=float)
    common.add_argument("--N", type=int)
    common.add_argument("--paths", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"), help="machine-readable stdout instead of check lines")
    parser = argparse.ArgumentParser(prog="hermspde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hermspde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "))
        if name == "suite":
            p.add_argument("--only", type=int, nargs="+", metavar="K", help="run only these criteria")
    return parser


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        file_cfg = None
        if args.config:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        flags = {"seed": args.seed, "dt": args.dt, "T": args.T, "N": args.N, "paths": args.paths}
        if getattr(args, "only", None) is not None:
            flags["only"] = args.only
        cfg = resolve_config(args.command, file_cfg, flags)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"hermspde {args.command}: config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    started = _now()
    files = {}
    text_mode = args.format is None
    try:
        if args.command == "suite":
            rep = cmd_suite(cfg, files, echo=print if text_mode else None)
        else:
            rep = HANDLERS[args.command](cfg, files)
    except ConfigError as exc:
        print(f"hermspde {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    finished = _now()
    if text_mode and args.command != "suite":
        for c in rep.checks:
            print(c.line())
    elif args.format == "json":
        print(dumps(rep.to_dict()))
    elif args.format == "csv":
        sys.stdout.write(checks_csv(rep))
    if args.out:
        write_outputs(args.out, cfg, rep, files, started, finished)
    if text_mode:
        print(f"{'PASS' if rep.passed else 'FAIL'}: {sum(c.passed for c in rep.checks)}/{len(rep.checks)} checks")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
