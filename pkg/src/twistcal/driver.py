"""Run configuration, initial data, and the continuity and nearby-s protocols.

Configs are TOML files with the sections below; every key has a default so
an empty file is a valid config.  ``--set section.key=value`` overrides are
parsed as TOML values.
"""
from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError, InsufficientData, PositivityLoss, TwistcalError
from .flow import TRACE_COLUMNS, FlowParams, FlowTrace, functional_I, normalize_I, run, solve_slab
from .geometry import KahlerPotential, TorusGrid
from .io import atomic_write_text, read_field, write_json, write_series
from .norms import fit_decay_rate
from .spacetime import SpaceTimeField

DEFAULTS = {
    "grid": {"n": 64, "length": 1.0},
    "init": {"kind": "fourier", "amplitude": 1e-2, "modes": [[1, 0]], "seed": 0, "path": ""},
    "flow": {"s": 0.5, "T": 1.0, "dt": 1e-4, "dt_policy": "fixed", "rtol": 1e-6,
             "scheme": "etd2", "stop_tol": 1e-9},
    "approx": {"N": 1, "fp_tol": 1e-6, "max_iters": 25, "dt": 1e-3},
    "sweep": {"s_values": [0.02, 0.04], "compare_alpha": True, "delta0": 1e-2, "jflow_T": 10.0,
              "tail_T": 5.0, "sample_every": 100, "workers": 1, "s0": 0.5, "deltas": [0.05, 0.025]},
    "kernel": {"t_min": 1e-5, "t_max": 1e-3, "count": 21},
    "norms": {"input": "", "k": 0, "gamma": 0.5, "eta": 0.0, "pairs": 4096, "seed": 0},
    "output": {"dir": "out", "record_every": 10, "dump_fields": False, "plots": False},
}

CLOSENESS_BAND = (1.6, 2.4)
NEARBY_MIN_EXPONENT = 0.9
MAX_RESAMPLES = 10


# -- configuration ---------------------------------------------------------
@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, section) -> dict:
        return self.data[section]

    def get(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.data[section][key]

    def grid(self) -> TorusGrid:
        return TorusGrid(int(self["grid"]["n"]), float(self["grid"]["length"]))

    def flow_params(self, s: float | None = None, T: float | None = None, **extra) -> FlowParams:
        f = self["flow"]
        kw = dict(s=float(f["s"] if s is None else s), T=float(f["T"] if T is None else T),
                  dt=float(f["dt"]), dt_policy=f["dt_policy"], rtol=float(f["rtol"]), scheme=f["scheme"],
                  stop_tol=f["stop_tol"], record_every=int(self["output"]["record_every"]))
        kw.update(extra)
        return FlowParams(**kw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _merge(base: dict, update: dict, where: str = ""):
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a table")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value


def apply_override(data: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key {key!r} must be section.key")
    _merge(data, {parts[0]: {parts[1]: _parse_value(text.strip())}})


def load_config(path=None, overrides=()) -> RunConfig:
    data = copy.deepcopy(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {str(path)!r} not found")
        try:
            with open(path, "rb") as fh:
                _merge(data, tomli.load(fh))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        base = path.parent
    for item in overrides:
        apply_override(data, item)
    cfg = RunConfig(data, base)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    try:
        cfg.grid()
    except TwistcalError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid section: {exc}") from exc
    if cfg["init"]["kind"] not in ("fourier", "random", "file"):
        raise ConfigError(f"init.kind must be fourier, random or file, got {cfg['init']['kind']!r}")
    if cfg["init"]["kind"] == "file":
        p = resolve(cfg, cfg["init"]["path"])
        if not p.is_file():
            raise ConfigError(f"init.path {str(p)!r} not found")
    s_values = cfg["sweep"]["s_values"]
    if not isinstance(s_values, list) or not all(isinstance(v, (int, float)) and 0 <= v <= 1 for v in s_values):
        raise ConfigError("sweep.s_values must be a list of numbers in [0, 1]")
    if not 0 <= float(cfg["flow"]["s"]) <= 1:
        raise ConfigError("flow.s must lie in [0, 1]")
    try:
        cfg.flow_params()
    except TwistcalError as exc:
        raise ConfigError(str(exc)) from exc
    if not int(cfg["sweep"]["workers"]) >= 1:
        raise ConfigError("sweep.workers must be at least 1")
    # positivity of the initial potential is part of validity
    try:
        initial_potential(cfg)
    except PositivityLoss as exc:
        raise ConfigError(f"initial potential is not admissible: {exc}") from exc


def resolve(cfg: RunConfig, path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else cfg.base_dir / p


# -- initial data ----------------------------------------------------------
def fourier_data(grid: TorusGrid, amplitude: float, modes) -> np.ndarray:
    """``sum amplitude_j cos(2 pi (kx x + ky y) / L)``; a mode may carry its own coefficient."""
    X, Y = grid.coords()
    out = np.zeros(grid.shape)
    for m in modes:
        kx, ky = m[0], m[1]
        c = m[2] if len(m) > 2 else amplitude
        out += c * np.cos(2 * np.pi * (kx * X + ky * Y) / grid.length)
    return out


def random_data(grid: TorusGrid, amplitude: float, seed: int, max_mode: int = 4,
                w_floor: float = 1e-6) -> np.ndarray:
    """Band-limited Gaussian data with sup norm ``amplitude``, resampled until admissible."""
    rng = np.random.default_rng(seed)
    X, Y = grid.coords()
    ks = [(kx, ky) for kx in range(-max_mode, max_mode + 1) for ky in range(-max_mode, max_mode + 1)
          if (kx, ky) != (0, 0) and kx * kx + ky * ky <= max_mode * max_mode]
    for _ in range(MAX_RESAMPLES):
        a = rng.standard_normal((len(ks), 2))
        u = np.zeros(grid.shape)
        for (kx, ky), (c, d) in zip(ks, a):
            arg = 2 * np.pi * (kx * X + ky * Y) / grid.length
            u += c * np.cos(arg) + d * np.sin(arg)
        u *= amplitude / np.max(np.abs(u))
        if np.min(1.0 + grid.dz_dzbar(u)) >= w_floor:
            return u
    raise PositivityLoss(float(np.min(1.0 + grid.dz_dzbar(u))), w_floor)


def initial_potential(cfg: RunConfig) -> KahlerPotential:
    grid = cfg.grid()
    init = cfg["init"]
    if init["kind"] == "fourier":
        values = fourier_data(grid, float(init["amplitude"]), init["modes"])
    elif init["kind"] == "random":
        values = random_data(grid, float(init["amplitude"]), int(init["seed"]))
    else:
        values, length = read_field(resolve(cfg, init["path"]))
        if values.shape != grid.shape or length != grid.length:
            raise ConfigError(f"field file {init['path']!r} does not match the configured grid")
    return KahlerPotential(grid, values)


# -- protocol records ------------------------------------------------------
@dataclass
class SweepReport:
    records: list
    closeness: list
    phases: dict
    params: dict

    @property
    def passed(self) -> bool:
        return all(p.get("passed", False) for p in self.phases.values())

    def to_dict(self) -> dict:
        return {"records": self.records, "closeness": self.closeness, "phases": self.phases,
                "params": self.params, "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _mean_free(values):
    return values - values.mean(axis=(-2, -1), keepdims=True)


def slab_distance(a: SpaceTimeField, b: SpaceTimeField) -> float:
    """Sup distance over the shared time samples."""
    if a.values.shape != b.values.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("slabs do not share a time grid")
    return float(np.max(np.abs(a.values - b.values)))


def trace_summary(trace: FlowTrace, params: FlowParams | dict) -> dict:
    eta, window = None, None
    try:
        fit = fit_decay_rate(trace)
        eta, window = fit.eta, list(fit.window)
    except InsufficientData:
        pass
    if isinstance(params, FlowParams):
        params = {k: getattr(params, k) for k in params.__dataclass_fields__}
    return {"verdict": trace.verdict.kind, "t_final": trace.rows[-1][0] if trace.rows else 0.0,
            "eta_fit": eta, "eta_window": window, "params": params}


def _tail_params(cfg_data: dict, s: float) -> FlowParams:
    cfg = RunConfig(cfg_data)
    return cfg.flow_params(s=s, T=float(cfg["sweep"]["tail_T"]))


def _run_one_s(task):
    """Phases two and three for a single ``s``; pure in its arguments."""
    cfg_data, psi_values, s = task
    cfg = RunConfig(cfg_data)
    grid = cfg.grid()
    psi0 = KahlerPotential(grid, psi_values)
    T = float(cfg["flow"]["T"])
    every = int(cfg["sweep"]["sample_every"])
    out = {"s": s}
    try:
        slab = solve_slab(psi0, s, T, float(cfg["flow"]["dt"]), cfg["flow"]["scheme"], every=every)
    except TwistcalError as exc:
        out.update(verdict=type(exc).__name__, detail=str(exc), slab=None, trace=None, eta_fit=None,
                   t_converged=None, max_norms={})
        return out
    end = KahlerPotential(grid, slab.values[-1])
    _, trace = run(end, _tail_params(cfg_data, s), t0=T)
    fit = None
    try:
        fit = fit_decay_rate(trace)
    except InsufficientData:
        pass
    mf = _mean_free(slab.values)
    out.update(
        verdict=trace.verdict.kind,
        detail=trace.verdict.detail,
        slab=slab,
        trace=trace,
        eta_fit=None if fit is None else fit.eta,
        r_squared=None if fit is None else fit.r_squared,
        t_converged=trace.verdict.t if trace.verdict.kind == "Converged" else None,
        max_norms={"sup": float(np.max(np.abs(mf))), "slab_sup": float(np.max(np.abs(slab.values)))},
    )
    return out


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def closeness_ratios(distances: dict) -> list:
    """For each pair ``s < s'`` of sampled values, the local exponent and the ratio
    rescaled to a halving (``2**exponent``)."""
    items = sorted((s, d) for s, d in distances.items() if d is not None)
    rows = []
    for (s1, d1), (s2, d2) in zip(items, items[1:]):
        if s1 <= 0:
            continue
        if d1 == 0 and d2 == 0:
            rows.append({"s": s2, "s_half": s1, "ratio": None, "exponent": None, "passed": True})
            continue
        if d1 <= 0 or d2 <= 0:
            rows.append({"s": s2, "s_half": s1, "ratio": None, "exponent": None, "passed": False})
            continue
        expo = math.log(d2 / d1) / math.log(s2 / s1)
        ratio = 2.0**expo
        rows.append({"s": s2, "s_half": s1, "ratio": ratio, "exponent": expo,
                     "passed": CLOSENESS_BAND[0] <= ratio <= CLOSENESS_BAND[1]})
    return rows


def protocol_continuity(psi0: KahlerPotential, cfg: RunConfig, out_dir=None, manifest=None) -> SweepReport:
    """Continuity protocol around the J-flow.

    Phase 1 runs the J-flow until the mean-free sup norm drops below
    ``delta0 / 2``.  Phase 2 runs the twisted flow on ``[0, T]`` for every
    ``s`` and compares with the J-flow slab; distances must scale linearly in
    ``s``.  Phase 3 continues each run past ``T`` and fits the decay rate.
    """
    grid = psi0.grid
    psi0 = normalize_I(psi0)
    delta0 = float(cfg["sweep"]["delta0"])
    T = float(cfg["flow"]["T"])
    phases = {}

    jparams = cfg.flow_params(s=0.0, T=float(cfg["sweep"]["jflow_T"]), stop_tol=0.5 * delta0, stop_count=1)
    _, jtrace = run(psi0, jparams)
    phases["jflow"] = {"verdict": jtrace.verdict.kind, "t_reached": jtrace.verdict.t,
                       "passed": jtrace.verdict.kind == "Converged", "delta0": delta0,
                       "I_psi0": functional_I(psi0)}

    s_values = sorted(set(float(v) for v in cfg["sweep"]["s_values"]) | {0.0})
    done = dict(manifest.completed) if manifest is not None else {}
    todo = [s for s in s_values if _key(s) not in done]
    tasks = [(cfg.to_dict(), psi0.values, s) for s in todo]
    results = {r["s"]: r for r in _map(_run_one_s, tasks, int(cfg["sweep"]["workers"]))}
    for s in s_values:
        if s in results:
            if out_dir is not None:
                _save_s(out_dir, results[s], cfg)
                if manifest is not None:
                    manifest.mark(s)
        else:
            results[s] = _load_s(out_dir, s)

    base = results[0.0]["slab"]
    distances = {}
    records = []
    for s in s_values:
        r = results[s]
        d = None
        if r["slab"] is not None and base is not None:
            d = slab_distance(r["slab"], base)
        distances[s] = d
        if s == 0.0:
            continue
        records.append({"s": s, "verdict": r["verdict"], "eta_fit": r["eta_fit"],
                        "r_squared": r.get("r_squared"), "t_converged": r["t_converged"],
                        "max_norms": r["max_norms"], "distance_to_jflow": d})
    ratios = closeness_ratios({s: distances[s] for s in s_values if s > 0})
    phases["closeness"] = {"ratios": ratios, "band": list(CLOSENESS_BAND),
                           "passed": bool(ratios) and all(r["passed"] for r in ratios)
                           if cfg["sweep"]["compare_alpha"] else True}
    phases["convergence"] = {"passed": all(
        rec["verdict"] == "Converged" or (rec["eta_fit"] is not None and rec["eta_fit"] > 0)
        for rec in records)}

    closeness = []
    for i, s1 in enumerate(s_values):
        for s2 in s_values[i + 1:]:
            a, b = results[s1]["slab"], results[s2]["slab"]
            closeness.append({"s": s1, "s_other": s2,
                              "sup": None if a is None or b is None else slab_distance(a, b)})
    params = {"T": T, "dt": float(cfg["flow"]["dt"]), "s_values": s_values, "delta0": delta0,
              "grid_n": grid.n, "tail_T": float(cfg["sweep"]["tail_T"])}
    return SweepReport(records, closeness, phases, params)


def protocol_nearby_s(psi0: KahlerPotential, s0: float, deltas, T: float, dt: float = 1e-4,
                      scheme: str = "etd2", every: int = 10) -> dict:
    """Slab distances between the flows at ``s0`` and ``s0 +- delta`` and the fitted exponent."""
    if not 0 < s0 < 1:
        raise ConfigError("s0 must lie in (0, 1)")
    for d in deltas:
        if not (0 < s0 - d and s0 + d < 1):
            raise ConfigError(f"s0 +- {d} leaves (0, 1)")
    base = solve_slab(psi0, s0, T, dt, scheme, every=every)
    rows = []
    for d in deltas:
        for sign in (-1.0, 1.0):
            s = s0 + sign * d
            row = {"delta": float(d), "s": s}
            if d == 0:
                row.update(distance=0.0, verdict="ReachedT")
            else:
                try:
                    other = solve_slab(psi0, s, T, dt, scheme, every=every)
                    row.update(distance=slab_distance(other, base), verdict="ReachedT")
                except TwistcalError as exc:
                    row.update(distance=None, verdict=type(exc).__name__)
            rows.append(row)
    usable = [r for r in rows if r["delta"] > 0 and r["distance"] is not None and r["distance"] > 0]
    exponent = None
    if len({r["delta"] for r in usable}) >= 2:
        exponent = float(np.polyfit(np.log([r["delta"] for r in usable]),
                                    np.log([r["distance"] for r in usable]), 1)[0])
    return {"s0": s0, "T": T, "dt": dt, "rows": rows, "exponent": exponent,
            "passed": exponent is not None and exponent >= NEARBY_MIN_EXPONENT}


# -- sweep persistence -----------------------------------------------------
def _key(s: float) -> str:
    return repr(float(s))


class RunManifest:
    """Completed ``s`` values of a sweep, rewritten atomically after each one."""

    def __init__(self, path):
        self.path = Path(path)
        self.completed = {}
        if self.path.is_file():
            self.completed = json.loads(self.path.read_text()).get("completed", {})

    def mark(self, s: float):
        self.completed[_key(s)] = True
        write_json(self.path, {"completed": dict(sorted(self.completed.items()))})


def _s_dir(out_dir, s) -> Path:
    return Path(out_dir) / f"s_{float(s):.6f}"


def _save_s(out_dir, r: dict, cfg: RunConfig):
    d = _s_dir(out_dir, r["s"])
    d.mkdir(parents=True, exist_ok=True)
    meta = {k: r.get(k) for k in ("s", "verdict", "detail", "eta_fit", "r_squared", "t_converged", "max_norms")}
    if r["slab"] is not None:
        write_series(d / "slab", r["slab"], "phi")
    if r["trace"] is not None:
        write_trace(d / "trace.csv", r["trace"], plots=bool(cfg["output"]["plots"]))
    write_json(d / "record.json", _jsonable(meta))


def _load_s(out_dir, s) -> dict:
    from .io import read_series
    d = _s_dir(out_dir, s)
    r = json.loads((d / "record.json").read_text())
    r["slab"] = read_series(d / "slab") if (d / "slab" / "times.csv").is_file() else None
    r["trace"] = FlowTrace.from_csv(d / "trace.csv", s) if (d / "trace.csv").is_file() else None
    return r


def write_trace(path, trace: FlowTrace, plots: bool = False):
    """Trace CSV written atomically, with an optional SVG plot next to it."""
    rows = [",".join(TRACE_COLUMNS)]
    rows += [",".join(repr(v) for v in row) for row in trace.rows]
    atomic_write_text(path, "\n".join(rows) + "\n")
    if plots:
        plot_trace(trace, Path(path).with_suffix(".svg"))


def plot_trace(trace: FlowTrace, path):
    """Log-scale norm-vs-time SVG (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "twistcal"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    t = trace.column("t")
    for name in ("sup", "l2"):
        y = trace.column(name)
        ok = y > 0
        ax.semilogy(t[ok], y[ok], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("norm of mean-free potential")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
