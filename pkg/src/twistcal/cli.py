"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-check failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import driver
from .approx import build_approximate, residual_order_fit
from .errors import ConfigError, MaxItersExceeded, TwistcalError
from .fixedpoint import solve_by_contraction
from .flow import run
from .geometry import KahlerPotential
from .heatkernel import KernelSpec, diagonal_table, on_diagonal_decay
from .io import atomic_write_text, export_approx, read_series, write_field, write_json, write_series
from .linearization import frechet_errors
from .norms import weighted_norm

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("jflow", "flow", "approx", "newton", "linearize", "kernel", "norms", "sweep", "nearby")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twistcal", description="Twisted Calabi flow experiments on the flat torus.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. flow.s=0.3")
        if name == "norms":
            p.add_argument("--input", help="field-dump series directory")
            p.add_argument("--k", type=int)
            p.add_argument("--gamma", type=float)
            p.add_argument("--eta", type=float)
            p.add_argument("--pairs", type=int)
            p.add_argument("--seed", type=int)
    return parser


def _out(cfg) -> Path:
    d = driver.resolve(cfg, cfg["output"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _flow(cfg, s=None) -> int:
    psi0 = driver.initial_potential(cfg)
    params = cfg.flow_params(s=s)
    state, trace = run(psi0, params)
    out = _out(cfg)
    driver.write_trace(out / "trace.csv", trace, plots=bool(cfg["output"]["plots"]))
    write_json(out / "summary.json", driver._jsonable(driver.trace_summary(trace, params)))
    if cfg["output"]["dump_fields"]:
        write_field(out / "final.cfl", state.phi.values, psi0.grid.length)
    return EXIT_OK if trace.verdict.ok else EXIT_NUMERIC


def _approx(cfg) -> int:
    psi0 = driver.initial_potential(cfg)
    a = cfg["approx"]
    approx = build_approximate(psi0, int(a["N"]), float(cfg["flow"]["T"]), float(a["dt"]))
    out = _out(cfg)
    export_approx(out / "approx", approx)
    s_values = [v for v in cfg["sweep"]["s_values"] if v > 0]
    report = {"N": approx.N}
    if len(s_values) >= 2:
        slope, _, per_s = residual_order_fit(approx, s_values)
        report.update(slope=slope, residuals={repr(s): (r if isinstance(r, float) else str(r))
                                              for s, r in per_s.items()})
    write_json(out / "approx_report.json", driver._jsonable(report))
    return EXIT_OK


def _newton(cfg) -> int:
    psi0 = driver.initial_potential(cfg)
    a = cfg["approx"]
    out = _out(cfg)
    try:
        phi, rep = solve_by_contraction(psi0, float(cfg["flow"]["s"]), float(cfg["flow"]["T"]), int(a["N"]),
                                        float(a["dt"]), float(a["fp_tol"]), int(a["max_iters"]))
    except MaxItersExceeded as exc:
        atomic_write_text(out / "iteration_report.json", exc.report.to_json() + "\n")
        raise
    atomic_write_text(out / "iteration_report.json", rep.to_json() + "\n")
    if cfg["output"]["dump_fields"]:
        write_series(out / "solution", phi, "phi")
    return EXIT_OK


def _linearize(cfg) -> int:
    psi0 = driver.initial_potential(cfg)
    grid = psi0.grid
    # unit-size direction: the central difference then sits well above rounding for eps down to 1e-5
    v = driver.random_data(grid, 1.0, int(cfg["init"]["seed"]) + 1, w_floor=-np.inf)
    eps = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5]
    errs = frechet_errors(psi0, v, float(cfg["flow"]["s"]), eps)
    slope = float(np.polyfit(np.log(eps), np.log(errs), 1)[0])
    passed = abs(slope - 2.0) <= 0.1
    write_json(_out(cfg) / "frechet.json", {"eps": eps, "errors": errs.tolist(), "slope": slope, "passed": passed})
    return EXIT_OK if passed else EXIT_CHECK


def _kernel(cfg) -> int:
    k = cfg["kernel"]
    spec = KernelSpec(cfg.grid())
    ts = np.logspace(np.log10(float(k["t_min"])), np.log10(float(k["t_max"])), int(k["count"]))
    table = diagonal_table(spec, ts)
    out = _out(cfg)
    atomic_write_text(out / "kernel_diagonal.csv",
                      "t,b\n" + "".join(f"{t!r},{b!r}\n" for t, b in table.tolist()))
    slope, r2 = on_diagonal_decay(spec, ts)
    passed = abs(slope + 0.5) <= 0.05
    write_json(out / "kernel_fit.json", {"slope": slope, "r_squared": r2, "passed": passed})
    return EXIT_OK if passed else EXIT_CHECK


def _norms(cfg, args) -> int:
    n = cfg["norms"]
    for key in ("input", "k", "gamma", "eta", "pairs", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            n[key] = val
    if not n["input"]:
        raise ConfigError("norms needs an input series (--input or norms.input)")
    path = driver.resolve(cfg, n["input"])
    if not (path / "times.csv").is_file():
        raise ConfigError(f"no field-dump series at {str(path)!r}")
    u = read_series(path)
    rep = weighted_norm(u, float(n["eta"]), int(n["k"]), float(n["gamma"]), int(n["pairs"]), int(n["seed"]))
    write_json(_out(cfg) / "holder_report.json", driver._jsonable(rep.to_dict()))
    return EXIT_OK


def _sweep(cfg) -> int:
    psi0 = driver.initial_potential(cfg)
    out = _out(cfg)
    manifest = driver.RunManifest(out / "manifest.json")
    report = driver.protocol_continuity(psi0, cfg, out, manifest)
    atomic_write_text(out / "sweep_report.json", report.to_json())
    return EXIT_OK if report.passed else EXIT_CHECK


def _nearby(cfg) -> int:
    psi0 = driver.initial_potential(cfg)
    sw = cfg["sweep"]
    table = driver.protocol_nearby_s(psi0, float(sw["s0"]), [float(d) for d in sw["deltas"]],
                                     float(cfg["flow"]["T"]), float(cfg["flow"]["dt"]), cfg["flow"]["scheme"])
    write_json(_out(cfg) / "nearby.json", driver._jsonable(table))
    return EXIT_OK if table["passed"] else EXIT_CHECK


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = driver.load_config(args.config, args.overrides)
        cmd = args.command
        if cmd == "jflow":
            return _flow(cfg, s=0.0)
        if cmd == "flow":
            return _flow(cfg)
        if cmd == "approx":
            return _approx(cfg)
        if cmd == "newton":
            return _newton(cfg)
        if cmd == "linearize":
            return _linearize(cfg)
        if cmd == "kernel":
            return _kernel(cfg)
        if cmd == "norms":
            return _norms(cfg, args)
        if cmd == "sweep":
            return _sweep(cfg)
        return _nearby(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TwistcalError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(cli_main())
