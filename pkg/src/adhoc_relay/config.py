"""Experiment configuration files.

Configurations are TOML documents with flat sections::

    experiment = "adorp-sweep"
    seed = 1

    [params]
    alpha = 4.0
    n_bar_a = 30.0

    [sweep]
    axis = "p_tx"
    grid = [0.1, 0.2, 0.3]
    schemes = ["NBO", "NN"]

Parsing is strict: duplicate keys, unknown keys, type mismatches and
out-of-range values are all reported together, each with its line number.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields, replace

import tomli
import tomli_w

from .geometry import NetworkParams
from .schemes import MCConfig, SchemeId

KINDS = ("adorp-sweep", "netsim", "build-qtable", "validate-bounds", "tune-threshold")
AXES = ("p_tx", "n_bar_a", "snr")


class ConfigError(ValueError):
    """Raised with every problem found in a configuration."""

    def __init__(self, problems: list[tuple[int | None, str, str]]):
        problems = sorted(problems, key=lambda t: (t[0] is None, t[0] or 0))
        self.problems = problems
        lines = [f"line {ln if ln is not None else '?'}: {key}: {why}" for ln, key, why in problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class SweepBlock:
    axis: str = "p_tx"
    grid: tuple = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)
    schemes: tuple = ("SO", "BO", "NSO", "NBO", "NN", "THRESHOLD")
    alphas: tuple = ()
    ub_max_so: float | None = None


@dataclass(frozen=True)
class NetsimBlock:
    p_tx: tuple = (0.1, 0.2, 0.3)
    schemes: tuple = ("NBO", "NN")
    slots: int = 100_000
    area: float = 1000.0
    n_nodes_mean: float = 100.0
    mobility_sigma: float = math.sqrt(2.84)
    gen_prob: float = 1.0
    buffer_target: int = 20
    message_bits: float = 20.0
    so_samples: int = 100
    warmup: int = 0
    fading: str = "rayleigh"
    message_choice: str = "distance"


@dataclass(frozen=True)
class QTableBlock:
    points: int = 256
    x_min: float | None = None
    x_max: float | None = None


@dataclass(frozen=True)
class TuneBlock:
    grid: tuple = ()


@dataclass(frozen=True)
class ValidateBlock:
    geometries: int = 100
    alphas: tuple = (3.0, 4.0)
    knowledge_sets: int = 20
    mc_draws: int = 100_000
    rel_tol: float = 1e-6
    fault: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: NetworkParams = field(default_factory=NetworkParams)
    mc: MCConfig = field(default_factory=MCConfig)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    netsim: NetsimBlock = field(default_factory=NetsimBlock)
    qtable: QTableBlock = field(default_factory=QTableBlock)
    tune: TuneBlock = field(default_factory=TuneBlock)
    validate: ValidateBlock = field(default_factory=ValidateBlock)
    seed: int = 0
    output: str = ""
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or self.experiment


# --- schema ------------------------------------------------------------------------

_FLOAT, _INT, _STR, _BOOL = "float", "int", "str", "bool"
_FLOATS, _STRS = "float-list", "str-list"

_PARAMS = {"lam": _FLOAT, "p_tx": _FLOAT, "alpha": _FLOAT, "rho": _FLOAT, "sigma_v2": _FLOAT,
           "bandwidth": _FLOAT, "r_a": _FLOAT, "n_bar_a": _FLOAT}
_SCHEMA = {
    "params": _PARAMS,
    "mc": {"realizations": _INT, "so_samples": _INT, "so_exterior_margin": _FLOAT, "qtable_samples": _INT,
           "qtable_points": _INT, "truncation_budget": _FLOAT, "tune_realizations": _INT},
    "sweep": {"axis": _STR, "grid": _FLOATS, "schemes": _STRS, "alphas": _FLOATS, "ub_max_so": _FLOAT},
    "netsim": {"p_tx": _FLOATS, "schemes": _STRS, "slots": _INT, "area": _FLOAT, "n_nodes_mean": _FLOAT,
               "mobility_sigma": _FLOAT, "gen_prob": _FLOAT, "buffer_target": _INT, "message_bits": _FLOAT,
               "so_samples": _INT, "warmup": _INT, "fading": _STR,
               "message_choice": _STR},
    "qtable": {"points": _INT, "x_min": _FLOAT, "x_max": _FLOAT},
    "tune": {"grid": _FLOATS},
    "validate": {"geometries": _INT, "alphas": _FLOATS, "knowledge_sets": _INT, "mc_draws": _INT,
                 "rel_tol": _FLOAT, "fault": _STR},
}
_TOP = {"experiment": _STR, "seed": _INT, "output": _STR, "name": _STR}
_REQUIRED = {
    "adorp-sweep": ("params", "sweep"),
    "netsim": ("params", "netsim"),
    "build-qtable": ("params",),
    "validate-bounds": (),
    "tune-threshold": ("params",),
}


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line where the key is assigned."""
    out = {}
    section = ""
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_\-]+)\s*\]", s)
        if m:
            section = m.group(1)
            out.setdefault((section, ""), no)
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=", s)
        if m:
            out.setdefault((section, m.group(1).strip('"')), no)
    return out


def _check_type(value, kind: str) -> bool:
    if kind == _FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _STR:
        return isinstance(value, str)
    if kind == _BOOL:
        return isinstance(value, bool)
    if kind == _FLOATS:
        return isinstance(value, list) and all(_check_type(v, _FLOAT) for v in value)
    if kind == _STRS:
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    raise AssertionError(kind)


def _coerce(value, kind: str):
    if kind == _FLOAT:
        return float(value)
    if kind == _FLOATS:
        return tuple(float(v) for v in value)
    if kind == _STRS:
        return tuple(value)
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment description."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError([(int(m.group(1)) if m else None, "<document>", str(exc))]) from None
    lines = _line_index(text)
    problems: list[tuple[int | None, str, str]] = []

    def bad(section, key, why):
        problems.append((lines.get((section, key), lines.get((section, ""))), f"{section + '.' if section else ''}{key}", why))

    blocks: dict[str, dict] = {}
    top: dict = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SCHEMA:
                bad("", key, "unknown section")
                continue
            blocks[key] = {}
            for k, v in value.items():
                kind = _SCHEMA[key].get(k)
                if kind is None:
                    bad(key, k, "unknown key")
                elif not _check_type(v, kind):
                    bad(key, k, f"expected {kind}, got {type(v).__name__}")
                else:
                    blocks[key][k] = _coerce(v, kind)
        elif key in _TOP:
            if not _check_type(value, _TOP[key]):
                bad("", key, f"expected {_TOP[key]}, got {type(value).__name__}")
            else:
                top[key] = value
        else:
            bad("", key, "unknown key")

    kind = top.get("experiment")
    if kind is None:
        if "experiment" not in doc:
            bad("", "experiment", "missing")
    elif kind not in KINDS:
        bad("", "experiment", f"must be one of {', '.join(KINDS)}")
    else:
        for sec in _REQUIRED[kind]:
            if sec not in doc:
                problems.append((None, sec, f"section required for {kind}"))
    if "seed" in top and top["seed"] < 0:
        bad("", "seed", "must be non-negative")

    params = _build_params(blocks.get("params", {}), bad)
    mc = _build(MCConfig, blocks.get("mc", {}), "mc", bad, _check_mc)
    sweep = _build(SweepBlock, blocks.get("sweep", {}), "sweep", bad, _check_sweep)
    netsim = _build(NetsimBlock, blocks.get("netsim", {}), "netsim", bad, _check_netsim)
    qtable = _build(QTableBlock, blocks.get("qtable", {}), "qtable", bad, _check_qtable)
    tune = _build(TuneBlock, blocks.get("tune", {}), "tune", bad, _check_tune)
    validate = _build(ValidateBlock, blocks.get("validate", {}), "validate", bad, _check_validate)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(kind, params, mc, sweep, netsim, qtable, tune, validate,
                            top.get("seed", 0), top.get("output", ""), top.get("name", ""))


def _build_params(values: dict, bad) -> NetworkParams:
    vals = dict(values)
    ok = True
    if "r_a" in vals and "n_bar_a" in vals:
        bad("params", "n_bar_a", "give either r_a or n_bar_a, not both")
        ok = False
    checks = {
        "lam": (lambda v: v > 0 and math.isfinite(v), "must be positive"),
        "p_tx": (lambda v: 0 < v < 1, "must lie in the open interval (0, 1)"),
        "alpha": (lambda v: v > 2 and math.isfinite(v), "must exceed 2"),
        "rho": (lambda v: v > 0, "must be positive"),
        "sigma_v2": (lambda v: v >= 0 and math.isfinite(v), "must be non-negative"),
        "bandwidth": (lambda v: v > 0, "must be positive"),
        "r_a": (lambda v: v > 0 and math.isfinite(v), "must be positive"),
        "n_bar_a": (lambda v: v > 0 and math.isfinite(v), "must be positive"),
    }
    for k, v in vals.items():
        pred, why = checks[k]
        if not pred(v):
            bad("params", k, why)
            ok = False
    if not ok:
        return NetworkParams()
    n_bar = vals.pop("n_bar_a", None)
    if n_bar is not None:
        lam = vals.get("lam", 1.0)
        vals["r_a"] = math.sqrt(n_bar / (math.pi * lam))
    return NetworkParams(**vals)


def _build(cls, values: dict, section: str, bad, check):
    for key, why in check(values):
        bad(section, key, why)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        bad(section, "", str(exc))
        return cls()


def _check_mc(v):
    for k in ("realizations", "so_samples", "tune_realizations"):
        if k in v and v[k] < 1:
            yield k, "must be at least 1"
    if "qtable_samples" in v and v["qtable_samples"] < 2:
        yield "qtable_samples", "must be at least 2"
    if "qtable_points" in v and v["qtable_points"] < 2:
        yield "qtable_points", "must be at least 2"
    if "truncation_budget" in v and not 0 < v["truncation_budget"] < 1:
        yield "truncation_budget", "must lie in (0, 1)"
    if "so_exterior_margin" in v and v["so_exterior_margin"] < 0:
        yield "so_exterior_margin", "must be non-negative"


def _check_schemes(names):
    for s in names:
        if s not in SchemeId.__members__:
            yield f"unknown scheme {s!r}"
    if len(set(names)) != len(names):
        yield "duplicate scheme"


def _check_sweep(v):
    if "axis" in v and v["axis"] not in AXES:
        yield "axis", f"must be one of {', '.join(AXES)}"
    if "grid" in v:
        g = v["grid"]
        if not g:
            yield "grid", "must be non-empty"
        elif any(b <= a for a, b in zip(g, g[1:])):
            yield "grid", "must be strictly increasing"
        elif v.get("axis", "p_tx") == "p_tx" and not all(0 < x < 1 for x in g):
            yield "grid", "p_tx values must lie in (0, 1)"
        elif v.get("axis") == "n_bar_a" and not all(x > 0 for x in g):
            yield "grid", "n_bar_a values must be positive"
    for why in _check_schemes(v.get("schemes", ())):
        yield "schemes", why
    if "alphas" in v and not all(a > 2 for a in v["alphas"]):
        yield "alphas", "every alpha must exceed 2"
    if v.get("ub_max_so") is not None and v["ub_max_so"] < 0:
        yield "ub_max_so", "must be non-negative"


def _check_netsim(v):
    if "p_tx" in v and not (v["p_tx"] and all(0 < x < 1 for x in v["p_tx"])):
        yield "p_tx", "values must lie in (0, 1)"
    for why in _check_schemes(v.get("schemes", ())):
        yield "schemes", why
    for k in ("slots", "warmup"):
        if k in v and v[k] < 0:
            yield k, "must be non-negative"
    for k in ("area", "message_bits"):
        if k in v and not v[k] > 0:
            yield k, "must be positive"
    for k in ("n_nodes_mean", "mobility_sigma"):
        if k in v and v[k] < 0:
            yield k, "must be non-negative"
    if "gen_prob" in v and not 0 <= v["gen_prob"] <= 1:
        yield "gen_prob", "must lie in [0, 1]"
    for k in ("buffer_target", "so_samples"):
        if k in v and v[k] < 1:
            yield k, "must be at least 1"
    if "fading" in v and v["fading"] not in ("rayleigh", "none"):
        yield "fading", "must be 'rayleigh' or 'none'"
    if "message_choice" in v and v["message_choice"] not in ("distance", "projection"):
        yield "message_choice", "must be 'distance' or 'projection'"


def _check_qtable(v):
    if "points" in v and v["points"] < 2:
        yield "points", "must be at least 2"
    lo, hi = v.get("x_min"), v.get("x_max")
    if (lo is None) != (hi is None):
        yield "x_min", "x_min and x_max go together"
    elif lo is not None and not 0 < lo < hi:
        yield "x_min", "need 0 < x_min < x_max"


def _check_tune(v):
    if "grid" in v and any(x < 0 for x in v["grid"]):
        yield "grid", "thresholds must be non-negative"


def _check_validate(v):
    for k in ("geometries", "knowledge_sets", "mc_draws"):
        if k in v and v[k] < 1:
            yield k, "must be at least 1"
    if "alphas" in v and not all(a > 2 for a in v["alphas"]):
        yield "alphas", "every alpha must exceed 2"
    if "rel_tol" in v and not v["rel_tol"] > 0:
        yield "rel_tol", "must be positive"


# --- rendering ---------------------------------------------------------------------

def _plain(obj) -> dict:
    out = {}
    for k, v in asdict(obj).items():
        if v is None:
            continue
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def render_config(cfg: ExperimentConfig) -> str:
    """TOML text that parses back to ``cfg``."""
    doc = {"experiment": cfg.experiment, "seed": cfg.seed}
    if cfg.output:
        doc["output"] = cfg.output
    if cfg.name:
        doc["name"] = cfg.name
    doc["params"] = _plain(cfg.params)
    doc["mc"] = _plain(cfg.mc)
    doc["sweep"] = _plain(cfg.sweep)
    doc["netsim"] = _plain(cfg.netsim)
    doc["qtable"] = _plain(cfg.qtable)
    doc["tune"] = _plain(cfg.tune)
    doc["validate"] = _plain(cfg.validate)
    return tomli_w.dumps(doc)


# --- presets -----------------------------------------------------------------------

def paper_figure(fig: int) -> ExperimentConfig:
    """Desk-scale configuration reproducing one figure of the evaluation."""
    mc = MCConfig()
    if fig == 3:
        return ExperimentConfig(
            "adorp-sweep", NetworkParams.from_mean_nodes(30.0, alpha=4.0), mc,
            SweepBlock(axis="p_tx", alphas=(4.0, 3.0)), name="fig3", seed=1,
        )
    if fig == 4:
        return ExperimentConfig(
            "adorp-sweep", NetworkParams.from_mean_nodes(30.0, p_tx=0.15, alpha=4.0), mc,
            SweepBlock(axis="n_bar_a", grid=(1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0), alphas=(4.0, 3.0)),
            name="fig4", seed=1,
        )
    if fig == 5:
        lam = 100.0 / 1000.0
        return ExperimentConfig(
            "netsim", NetworkParams.from_mean_nodes(30.0, lam=lam, p_tx=0.2, alpha=3.0), mc,
            netsim=NetsimBlock(), name="fig5", seed=1,
        )
    if fig == 6:
        return ExperimentConfig(
            "adorp-sweep", NetworkParams.from_mean_nodes(30.0, p_tx=0.15, alpha=3.0), mc,
            SweepBlock(axis="snr", grid=tuple(float(x) for x in range(-60, 21, 10))),
            name="fig6", seed=1,
        )
    raise ValueError(f"no preset for figure {fig}; choose 3, 4, 5 or 6")


def with_overrides(cfg: ExperimentConfig, *, seed=None, output=None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if output is not None:
        changes["output"] = str(output)
    return replace(cfg, **changes) if changes else cfg


def field_names(cls) -> list[str]:
    return [f.name for f in fields(cls)]
