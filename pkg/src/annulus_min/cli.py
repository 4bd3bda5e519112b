"""Command-line entry point.

Every subcommand is driven by one flat configuration (JSON keys or the
equivalent ``--flags``), validated strictly against the tables in
``COMMANDS``.  Reports are JSON documents with sorted keys and an
``effective_config`` block holding every parameter after defaults were
applied, so two runs with the same configuration give byte-identical output.

Exit status: 0 on success, 1 on numerical failure (a partial report is still
written), 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .diagnostics import beta_lower_bound, holder_exponent, hopf_field, hopf_fit, qc_report
from .energy import DiscreteMap, dirichlet_energy
from .geometry import Annulus, Disk, make_polar_mesh
from .metrics import KINDS, Metric, admissibility_report
from .radial import (NitscheConditionError, QuadratureError, RadicandError, euclidean_closed_form,
                     gamma_diamond, nitsche_map, nitsche_radius)
from .solver import ExplorerError, SolverConfig, explore_nitsche_radius, init_map, minimize, perturb_map

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


# --------------------------------------------------------------------------
# parameter tables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    kind: str                      # float | int | bool | str | choice | path_in | path_out | metric
    default: Any = None
    required: bool = False
    check: Callable[[Any], str | None] | None = None
    choices: tuple = ()
    help: str = ""


def _open_unit(name):
    return lambda v: None if 0 < v < 1 else f"{name} must lie in (0,1)"


def _positive(name):
    return lambda v: None if v > 0 else f"{name} must be positive"


def _at_least(name, lo):
    return lambda v: None if v >= lo else f"{name} must be at least {lo}"


METRIC = Param("metric", "euclidean",
               help=f"metric kind ({', '.join(KINDS)}), inline JSON or a JSON file path")
OUT = Param("path_out", None, help="write the JSON report here instead of stdout")

COMMANDS: dict[str, dict[str, Param]] = {
    "radial": {
        "metric": METRIC,
        "R": Param("float", required=True, check=_open_unit("R"), help="target inner radius"),
        "gamma": Param("float", None, help="family parameter; default is the critical value"),
        "n_table": Param("int", 2048, check=_at_least("n_table", 16), help="q table size"),
        "q_csv": Param("path_out", None, help="write the (s, q(s)) table as CSV"),
        "out": OUT,
    },
    "nitsche-radius": {
        "metric": METRIC,
        "R": Param("float", required=True, check=_open_unit("R"), help="target inner radius"),
        "out": OUT,
    },
    "minimize": {
        "metric": METRIC,
        "X_inner": Param("float", required=True, check=_open_unit("X_inner"), help="source inner radius"),
        "Y_inner": Param("float", required=True, check=_open_unit("Y_inner"), help="target inner radius"),
        "nr": Param("int", 64, check=_at_least("nr", 3), help="radial nodes"),
        "nt": Param("int", 128, check=_at_least("nt", 8), help="angular nodes"),
        "max_iter": Param("int", 3000, check=_at_least("max_iter", 0), help="iteration budget"),
        "tol": Param("float", 1e-7, check=_positive("tol"), help="scaled gradient tolerance"),
        "seed": Param("int", 0, help="seed for the initial perturbation"),
        "perturb": Param("float", 0.0, check=lambda v: None if 0 <= v < 0.5 else "perturb must lie in [0,0.5)",
                         help="amplitude of a smooth random perturbation of the initial map"),
        "sliding": Param("bool", True, help="let boundary nodes slide along the target circles"),
        "preconditioner": Param("choice", "sobolev", choices=("sobolev", "none"), help="descent metric"),
        "dump_map": Param("path_out", None, help="write the final map as CSV (i,j,s,theta,re,im)"),
        "out": OUT,
    },
    "diagnose": {
        "metric": METRIC,
        "map": Param("path_in", required=True, help="map CSV written by minimize --dump-map"),
        "X_inner": Param("float", None, check=_open_unit("X_inner"),
                         help="source inner radius used in K'; default is read from the map"),
        "band": Param("float", None, check=_positive("band"),
                      help="boundary band width for the Hoelder fit; default min(0.2, (1-r)/2)"),
        "n_pairs": Param("int", 10_000, check=_at_least("n_pairs", 100), help="sampled point pairs"),
        "seed": Param("int", 0, help="seed for the pair sampler"),
        "out": OUT,
    },
    "admissibility": {
        "metric": METRIC,
        "inner": Param("float", 0.5, check=lambda v: None if 0 <= v < 1 else "inner must lie in [0,1)",
                       help="domain inner radius (0 selects the disk)"),
        "outer": Param("float", 1.0, check=_positive("outer"), help="domain outer radius"),
        "n": Param("int", 64, check=_at_least("n", 8), help="sampling resolution"),
        "out": OUT,
    },
    "explore": {
        "metric": METRIC,
        "R": Param("float", required=True, check=_open_unit("R"), help="target inner radius"),
        "tol": Param("float", 5e-3, check=_positive("tol"), help="bisection tolerance"),
        "nr": Param("int", 48, check=_at_least("nr", 3), help="radial nodes per probe"),
        "nt": Param("int", 96, check=_at_least("nt", 8), help="angular nodes per probe"),
        "r_min": Param("float", 0.02, check=_open_unit("r_min"), help="lower end of the bracket"),
        "threshold": Param("float", 1e-3, check=_positive("threshold"),
                           help="min J / median J below which a probe is degenerate"),
        "max_iter": Param("int", 3000, check=_at_least("max_iter", 0), help="iterations per probe"),
        "gtol": Param("float", 1e-7, check=_positive("gtol"), help="gradient tolerance per probe"),
        "seed": Param("int", 0, help="solver seed"),
        "out": OUT,
    },
}

METRIC_KEYS = ("kind", "params", "table")


@dataclass(frozen=True)
class RunConfig:
    command: str
    metric: dict
    params: dict = field(default_factory=dict)

    @property
    def out(self) -> str | None:
        return self.params.get("out")

    def effective_config(self) -> dict:
        d = {"command": self.command, "metric": self.metric}
        d.update({k: v for k, v in self.params.items() if k != "out"})
        return d

    def build_metric(self) -> Metric:
        return Metric.from_config(self.metric)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _coerce(path: str, p: Param, v):
    if p.kind == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {type(v).__name__}")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{path}: must be finite")
        return v
    if p.kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                return int(v)
            raise ConfigError(f"{path}: expected an integer, got {type(v).__name__}")
        return v
    if p.kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"{path}: expected true or false, got {type(v).__name__}")
        return v
    if p.kind == "choice":
        if v not in p.choices:
            raise ConfigError(f"{path}: expected one of {', '.join(p.choices)}, got {v!r}")
        return v
    if p.kind in ("str", "path_in", "path_out"):
        if not isinstance(v, str):
            raise ConfigError(f"{path}: expected a string, got {type(v).__name__}")
        if p.kind == "path_in" and not Path(v).is_file():
            raise ConfigError(f"{path}: file not found: {v}")
        if p.kind == "path_out":
            parent = Path(v).resolve().parent
            if not parent.is_dir():
                raise ConfigError(f"{path}: directory does not exist: {parent}")
        return v
    raise AssertionError(p.kind)


def _resolve_metric(v) -> dict:
    if isinstance(v, str):
        text = v.strip()
        if text.startswith("{"):
            try:
                v = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"metric: invalid inline JSON at line {exc.lineno} column {exc.colno}: "
                                  f"{exc.msg}") from None
        elif text in KINDS:
            v = {"kind": text}
        elif Path(text).is_file():
            try:
                v = json.loads(Path(text).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"metric: invalid JSON in {text} at line {exc.lineno} column "
                                  f"{exc.colno}: {exc.msg}") from None
        else:
            raise ConfigError(f"metric: {text!r} is neither a metric kind ({', '.join(KINDS)}) nor a file")
    if not isinstance(v, dict):
        raise ConfigError(f"metric: expected an object, got {type(v).__name__}")
    for k in v:
        if k not in METRIC_KEYS:
            raise ConfigError(f"metric.{k}: unknown key (expected {', '.join(METRIC_KEYS)})")
    if "kind" not in v:
        raise ConfigError("metric.kind: required")
    if "params" in v and not isinstance(v["params"], dict):
        raise ConfigError("metric.params: expected an object")
    try:
        m = Metric.from_config(v)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"metric: {exc}") from None
    return m.to_config() if v.get("kind") != "radial-table" else dict(v)


def config_from_dict(data: dict, command: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config: expected an object, got {type(data).__name__}")
    data = dict(data)
    cmd = data.pop("command", command)
    if command is not None and cmd != command:
        raise ConfigError(f"command: config says {cmd!r} but {command!r} was requested")
    if cmd not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {cmd!r}")
    table = COMMANDS[cmd]
    for k in data:
        if k not in table:
            raise ConfigError(f"{cmd}.{k}: unknown key")
    params = {}
    metric = None
    for name, p in table.items():
        if name not in data or data[name] is None:
            if p.required:
                raise ConfigError(f"{cmd}.{name}: required")
            if p.kind == "metric":
                metric = _resolve_metric(p.default)
            else:
                params[name] = p.default
            continue
        if p.kind == "metric":
            metric = _resolve_metric(data[name])
            continue
        v = _coerce(f"{cmd}.{name}", p, data[name])
        if p.check is not None:
            msg = p.check(v)
            if msg:
                raise ConfigError(msg)
        params[name] = v
    if cmd == "admissibility" and not params["outer"] > params["inner"]:
        raise ConfigError("admissibility.outer: must exceed inner")
    if cmd in ("radial", "nitsche-radius") and Metric.from_config(metric).profile is None:
        raise ConfigError(f"metric: {cmd} needs a radial metric")
    if cmd == "explore" and not params["r_min"] < params["R"]:
        raise ConfigError("explore.r_min: must be smaller than R")
    return RunConfig(cmd, metric, params)


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Strict parse of a JSON configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data, command)


# --------------------------------------------------------------------------
# report helpers
# --------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _clean(x.real), "im": _clean(x.imag)}
    return x


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _num(extra=None):
    t = {"type": ["number", "null"]}
    if extra:
        t.update(extra)
    return t


_BASE_SCHEMA = {
    "type": "object",
    "required": ["command", "effective_config", "result", "status", "exit_code", "version", "warnings"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "effective_config": {"type": "object", "required": ["command", "metric"]},
        "status": {"enum": ["ok", "numerical-failure", "not-converged"]},
        "exit_code": {"enum": [0, 1]},
        "version": {"type": "string"},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "result": {"type": "object"},
    },
}

_RESULT_SCHEMAS = {
    "radial": {"required": ["gamma", "r_gamma", "r_diamond", "q_table_checksum"],
               "properties": {"gamma": _num(), "r_gamma": _num(), "r_diamond": _num(),
                              "q_table_checksum": {"type": "string"}, "critical": {"type": "boolean"}}},
    "nitsche-radius": {"required": ["r_diamond", "gamma_diamond"],
                       "properties": {"r_diamond": _num(), "gamma_diamond": _num()}},
    "minimize": {"required": ["energy", "solver", "hopf"],
                 "properties": {"energy": {"type": "object", "required": ["energy", "area_bound", "defect",
                                                                          "min_jacobian"]},
                                "solver": {"type": "object", "required": ["converged", "iterations"]},
                                "hopf": {"type": "object", "required": ["c_re", "c_im", "residual"]}}},
    "diagnose": {"required": ["hopf", "qc", "holder"],
                 "properties": {"qc": {"type": "object", "required": ["K", "K_prime", "worst_slack"]},
                                "holder": {"type": "object", "required": ["inner", "outer"]}}},
    "admissibility": {"required": ["admissible", "curvature_bound", "area"],
                      "properties": {"admissible": {"type": "boolean"}}},
    "explore": {"required": ["R", "estimate", "bracket", "probes"],
                "properties": {"estimate": _num(), "bracket": {"type": "array", "minItems": 2, "maxItems": 2}}},
}


def report_schema(command: str) -> dict:
    """JSON schema of successful (and partial) reports for ``command``."""
    s = json.loads(json.dumps(_BASE_SCHEMA))
    s["properties"]["result"] = {"type": "object", **_RESULT_SCHEMAS[command]}
    return s


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _cmd_radial(cfg: RunConfig, m: Metric):
    p = cfg.params
    prof = m.radial_profile()
    gd = gamma_diamond(prof, p["R"])
    gamma = gd if p["gamma"] is None else p["gamma"]
    nm = nitsche_map(prof, gamma, p["R"], p["n_table"])
    fam = nm.family
    if p["q_csv"]:
        with open(p["q_csv"], "w") as fh:
            fh.write("s,q\n")
            for s, q in fam.q_samples:
                fh.write(f"{float(s)!r},{float(q)!r}\n")
    res = {"R": p["R"], "gamma": fam.gamma, "gamma_diamond": gd, "r_gamma": fam.r_gamma,
           "r_diamond": nitsche_radius(prof, p["R"]), "q_table_checksum": fam.checksum(),
           "critical": fam.critical, "quadrature_error": fam.quadrature_error}
    return res, True


def _cmd_nitsche_radius(cfg: RunConfig, m: Metric):
    prof = m.radial_profile()
    R = cfg.params["R"]
    return {"R": R, "r_diamond": nitsche_radius(prof, R), "gamma_diamond": gamma_diamond(prof, R)}, True


def _closed_form_check(dmap: DiscreteMap, r: float, R: float) -> dict:
    cf = euclidean_closed_form(r, R)
    exact = cf(dmap.mesh.nodes)
    rot = np.sum(dmap.values * np.conj(exact))
    rot = rot / abs(rot) if abs(rot) > 0 else 1.0
    return {"energy": cf.energy(), "a": cf.a, "b": cf.b, "hopf_constant": cf.hopf_constant,
            "sup_error": float(np.max(np.abs(dmap.values - rot * exact))),
            "rotation": float(np.angle(rot))}


def _cmd_minimize(cfg: RunConfig, m: Metric):
    p = cfg.params
    X, Y = Annulus(p["X_inner"], 1.0), Annulus(p["Y_inner"], 1.0)
    mesh = make_polar_mesh(X, p["nr"], p["nt"])
    init = init_map(X, Y, "log-linear-radial", mesh)
    if p["perturb"] > 0:
        init = perturb_map(init, p["perturb"], seed=p["seed"])
    scfg = SolverConfig(max_iterations=p["max_iter"], gradient_tolerance=p["tol"],
                        boundary_sliding=p["sliding"], seed=p["seed"], preconditioner=p["preconditioner"])
    res = minimize(X, Y, m, scfg, init)
    if p["dump_map"]:
        with open(p["dump_map"], "w", newline="") as fh:
            res.map.to_csv(fh)
    fit = hopf_fit(hopf_field(res.map, m), mesh)
    out = {"solver": res.summary(), "energy": dirichlet_energy(res.map, m).to_dict(), "hopf": fit.to_dict(),
           "mesh": {"n_radial": mesh.n_radial, "n_angular": mesh.n_angular},
           "energy_history_length": len(res.energy_history),
           "energy_history_monotone": bool(np.all(np.diff(res.energy_history) <= 0))}
    if m.is_euclidean:
        out["closed_form"] = _closed_form_check(res.map, X.inner_radius, Y.inner_radius)
    return out, res.converged


def _cmd_diagnose(cfg: RunConfig, m: Metric):
    p = cfg.params
    with open(p["map"], newline="") as fh:
        dmap = DiscreteMap.from_csv(fh)
    mesh = dmap.mesh
    r = mesh.annulus.inner_radius if p["X_inner"] is None else p["X_inner"]
    band = min(0.2, 0.5 * (1.0 - mesh.annulus.inner_radius)) if p["band"] is None else p["band"]
    fit = hopf_fit(hopf_field(dmap, m), mesh)
    qc = qc_report(dmap, m, fit.c, r)
    holder = {}
    for b in ("inner", "outer"):
        holder[b] = holder_exponent(dmap, b, band, p["n_pairs"], p["seed"]).to_dict()
        holder[b + "_inverse"] = holder_exponent(dmap, b, band, p["n_pairs"], p["seed"], inverse=True).to_dict()
    return {"hopf": fit.to_dict(), "qc": qc.to_dict(), "holder": holder, "band": band, "X_inner": r,
            "beta_lower_bound": beta_lower_bound(1.0),
            "mesh": {"n_radial": mesh.n_radial, "n_angular": mesh.n_angular}}, True


def _cmd_admissibility(cfg: RunConfig, m: Metric):
    p = cfg.params
    dom = Disk(p["outer"]) if p["inner"] == 0 else Annulus(p["inner"], p["outer"])
    rep = admissibility_report(m, dom, p["n"])
    return rep.to_dict(), True


def _cmd_explore(cfg: RunConfig, m: Metric):
    p = cfg.params
    scfg = SolverConfig(max_iterations=p["max_iter"], gradient_tolerance=p["gtol"], seed=p["seed"])
    try:
        res = explore_nitsche_radius(m, p["R"], scfg, p["tol"], n_radial=p["nr"], n_angular=p["nt"],
                                     r_min=p["r_min"], threshold=p["threshold"])
    except ExplorerError as exc:
        br = list(exc.bracket) if exc.bracket else None
        return {"R": p["R"], "estimate": None, "bracket": br or [None, None], "probes": [],
                "error": str(exc)}, False
    out = res.to_dict()
    if m.profile is not None:
        out["analytic_r_diamond"] = nitsche_radius(m.radial_profile(), p["R"])
    return out, True


_HANDLERS = {
    "radial": _cmd_radial,
    "nitsche-radius": _cmd_nitsche_radius,
    "minimize": _cmd_minimize,
    "diagnose": _cmd_diagnose,
    "admissibility": _cmd_admissibility,
    "explore": _cmd_explore,
}

_NUMERICAL_ERRORS = (ArithmeticError, NitscheConditionError, RadicandError, QuadratureError,
                     np.linalg.LinAlgError, ValueError, RuntimeError)


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run a validated configuration and return ``(exit status, report)`` without writing anything."""
    m = cfg.build_metric()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result, ok = _HANDLERS[cfg.command](cfg, m)
            status = "ok" if ok else ("not-converged" if cfg.command == "minimize" else "numerical-failure")
        except _NUMERICAL_ERRORS as exc:
            log.error("%s failed: %s", cfg.command, exc)
            result, ok, status = {"error": f"{type(exc).__name__}: {exc}"}, False, "numerical-failure"
    msgs = sorted({str(w.message) for w in caught})
    code = EXIT_OK if ok else EXIT_NUMERICAL
    report = {"command": cfg.command, "effective_config": cfg.effective_config(), "result": result,
              "status": status, "exit_code": code, "version": __version__, "warnings": msgs}
    return code, _clean(report)


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg``, write the report to ``cfg.out`` (or ``stdout``) and return the exit status."""
    code, report = execute(cfg)
    text = dumps_report(report)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        (stdout or sys.stdout).write(text)
    return code


# --------------------------------------------------------------------------
# argparse front end
# --------------------------------------------------------------------------

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="annulus-min",
        description="Energy-minimizing maps between annuli: radial families, variational solver, diagnostics.",
        epilog="ANNULUS_MIN_THREADS caps the worker count; it changes speed only, never results.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, table in COMMANDS.items():
        sp = sub.add_parser(cmd, help=f"run the {cmd} scenario",
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.add_argument("--config", help="JSON config file; explicit flags override its values")
        for name, p in table.items():
            kw: dict[str, Any] = {"dest": name, "default": argparse.SUPPRESS}
            if p.kind == "float":
                kw["type"] = float
            elif p.kind == "int":
                kw["type"] = int
            elif p.kind == "bool":
                kw["type"] = _bool
            elif p.kind == "choice":
                kw["choices"] = p.choices
            default = "required" if p.required else p.default
            kw["help"] = f"{p.help} (default: {default})"
            sp.add_argument(_flag(name), **kw)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    values = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    try:
        data = {}
        if ns.config:
            try:
                text = Path(ns.config).read_text()
            except OSError as exc:
                raise ConfigError(f"config: cannot read {ns.config}: {exc.strerror}") from None
            data = json.loads(text) if text.strip() else {}
            if not isinstance(data, dict):
                raise ConfigError("config: expected an object")
        data.update(values)
        cfg = config_from_dict(data, ns.command)
    except json.JSONDecodeError as exc:
        print(f"error: config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)
