"""Experiment configuration: YAML parsing, defaults and validation.

Validation builds every referenced family object and checks grid
preconditions (including the lattice CFL bound) before any solver runs.
Errors carry the line of the offending key.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import families
from .core import TimeGrid
from .errors import CFLError, ConfigError
from .forward import check_lattice_cfl

SCHEMA_VERSION = 1
SCHEMES = ("lattice", "lsmc", "pde", "homographic", "penalization", "reflected")
TOP_KEYS = {"schema_version", "case", "diffusion", "driver", "measure", "obstacle", "grid", "scheme",
            "n_list", "seed", "n_paths", "probes", "checks", "output", "options"}
GRID_KEYS = {"t0", "T", "n_steps", "box", "n_space", "dx"}
DRIVER_KEYS = {"f", "g", "terminal"}


def _line_map(text: str) -> dict:
    """Map key paths (tuples) to 1-based line numbers."""
    out: dict = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the merged mapping."""

    case: str
    raw: dict
    seed: int = 0
    output: Optional[str] = None
    source: Optional[str] = None
    lines: dict = field(default_factory=dict)

    # materialized objects (filled by validate)
    spec: Any = None
    driver: Any = None
    measure: Any = None
    obstacle: Any = None

    def get(self, *path, default=None):
        node = self.raw
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    @property
    def scheme(self) -> str:
        return self.raw.get("scheme")

    @property
    def n_list(self) -> list:
        return list(self.raw.get("n_list") or [])

    @property
    def n_paths(self) -> int:
        return int(self.raw.get("n_paths", 10000))

    @property
    def grid(self) -> dict:
        return self.raw["grid"]

    def time_grid(self) -> TimeGrid:
        g = self.grid
        return TimeGrid(float(g.get("t0", 0.0)), float(g["T"]), int(g["n_steps"]))

    def box(self) -> tuple:
        lo, hi = self.grid["box"]
        return float(lo), float(hi)

    def n_space(self) -> int:
        g = self.grid
        if "n_space" in g:
            return int(g["n_space"])
        lo, hi = self.box()
        return int(round((hi - lo) / float(g["dx"]))) + 1

    def check(self, name: str, default=None):
        return self.raw.get("checks", {}).get(name, default)

    def option(self, name: str, default=None):
        return (self.raw.get("options") or {}).get(name, default)

    def line_of(self, *path) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        # family mappings are replaced whole so stale parameters never leak across families
        if (isinstance(v, dict) and isinstance(out.get(k), dict) and "family" not in v
                and k not in ("diffusion", "measure", "obstacle")):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text: str, source: Optional[str] = None, seed: Optional[int] = None,
                 output: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate YAML text; raises :class:`ConfigError` with a line number."""
    from .cases import CATALOG

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    lines = _line_map(text)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", line=1)
    ver = data.get("schema_version")
    if ver is None:
        raise ConfigError("missing schema_version", line=1)
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {ver!r}; this release reads {SCHEMA_VERSION}",
                          line=lines.get(("schema_version",)))
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", line=lines.get((unknown[0],)))
    case = data.get("case")
    if case not in CATALOG:
        raise ConfigError(f"unknown case {case!r}; see 'list'", line=lines.get(("case",), 1))
    merged = _merge(CATALOG[case].defaults, data)
    if overrides:
        merged = _merge(merged, overrides)
    # an explicit spacing replaces the default node count and vice versa
    for src in (data, overrides or {}):
        g = src.get("grid")
        if isinstance(g, dict) and isinstance(merged.get("grid"), dict):
            for a, b in (("dx", "n_space"), ("n_space", "dx")):
                if a in g and b not in g:
                    merged["grid"].pop(b, None)
    if seed is not None:
        merged["seed"] = int(seed)
    if output is not None:
        merged["output"] = output
    seed_val = merged.get("seed", 0)
    cfg = ExperimentConfig(case=case, raw=merged, seed=seed_val if isinstance(seed_val, int) else 0,
                           output=merged.get("output"), source=source, lines=lines)
    validate(cfg)
    return cfg


def load_config(path, **kw) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, source=str(p), **kw)


def config_for_case(case: str, **kw) -> ExperimentConfig:
    """Validated configuration of a built-in case with its bundled defaults."""
    return parse_config(yaml.safe_dump({"schema_version": SCHEMA_VERSION, "case": case}), **kw)


def _fail(cfg, msg, *path):
    raise ConfigError(msg, line=cfg.line_of(*path))


def _positive_int(cfg, value, *path):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
        _fail(cfg, f"{'.'.join(map(str, path))} must be a positive integer, got {value!r}", *path)
    return int(value)


def _number(cfg, value, *path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _fail(cfg, f"{'.'.join(map(str, path))} must be a finite number, got {value!r}", *path)
    return float(value)


def validate(cfg: ExperimentConfig) -> None:
    """All checks that need no solve; fills ``spec``, ``driver``, ``measure``, ``obstacle``."""
    from .cases import CATALOG

    raw = cfg.raw
    entry = CATALOG[cfg.case]
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        _fail(cfg, f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed")

    sch = raw.get("scheme")
    if sch not in SCHEMES:
        _fail(cfg, f"unknown scheme {sch!r}; choose from {list(SCHEMES)}", "scheme")
    if sch not in entry.schemes:
        _fail(cfg, f"case {cfg.case!r} supports schemes {list(entry.schemes)}, not {sch!r}", "scheme")

    for key, maker in (("diffusion", families.make_diffusion), ("measure", families.make_measure),
                       ("obstacle", families.make_obstacle)):
        val = raw.get(key)
        if key == "diffusion" and not isinstance(val, dict):
            _fail(cfg, "diffusion must be a mapping with a 'family' key", key)
        if val is not None and not isinstance(val, dict):
            _fail(cfg, f"{key} must be a mapping or null", key)
        try:
            obj = maker(val)
        except (KeyError, TypeError, ValueError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            _fail(cfg, f"{key}: {msg}", key)
        setattr(cfg, "spec" if key == "diffusion" else key, obj)

    drv = raw.get("driver") or {}
    if not isinstance(drv, dict):
        _fail(cfg, "driver must be a mapping", "driver")
    bad = sorted(set(drv) - DRIVER_KEYS)
    if bad:
        _fail(cfg, f"driver has unknown key {bad[0]!r}", "driver", bad[0])
    for piece, table in (("f", families.F_FAMILIES), ("g", families.G_FAMILIES),
                         ("terminal", families.TERMINALS)):
        if piece in drv:
            if not isinstance(drv[piece], dict):
                _fail(cfg, f"driver.{piece} must be a mapping with a 'family' key", "driver", piece)
            try:
                families._call(table, drv[piece], piece)
            except (KeyError, TypeError, ValueError) as exc:
                msg = exc.args[0] if exc.args else str(exc)
                _fail(cfg, f"driver.{piece}: {msg}", "driver", piece)
    try:
        cfg.driver = families.make_driver(drv.get("f"), drv.get("g"), drv.get("terminal"), name=cfg.case)
    except (KeyError, TypeError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        _fail(cfg, f"driver: {msg}", "driver")

    g = raw.get("grid")
    if not isinstance(g, dict):
        _fail(cfg, "grid must be a mapping", "grid")
    bad = sorted(set(g) - GRID_KEYS)
    if bad:
        _fail(cfg, f"grid has unknown key {bad[0]!r}", "grid", bad[0])
    T = _number(cfg, g.get("T"), "grid", "T")
    t0 = _number(cfg, g.get("t0", 0.0), "grid", "t0")
    if T <= t0:
        _fail(cfg, "grid.T must exceed grid.t0", "grid", "T")
    _positive_int(cfg, g.get("n_steps"), "grid", "n_steps")
    box = g.get("box")
    if not (isinstance(box, list) and len(box) == 2):
        _fail(cfg, "grid.box must be [lo, hi]", "grid", "box")
    lo, hi = (_number(cfg, v, "grid", "box") for v in box)
    if hi <= lo:
        _fail(cfg, "grid.box needs lo < hi", "grid", "box")
    if "n_space" in g and "dx" in g:
        _fail(cfg, "give grid.n_space or grid.dx, not both", "grid", "dx")
    if "dx" in g:
        dx = _number(cfg, g["dx"], "grid", "dx")
        m = (hi - lo) / dx if dx > 0 else -1
        if dx <= 0 or abs(m - round(m)) > 1e-9 * max(1.0, m):
            _fail(cfg, "grid.dx must divide the box length", "grid", "dx")
    elif "n_space" in g:
        _positive_int(cfg, g["n_space"], "grid", "n_space")
    else:
        _fail(cfg, "grid needs n_space or dx", "grid")
    if cfg.n_space() < 3:
        _fail(cfg, "need at least 3 space nodes", "grid")

    nl = raw.get("n_list")
    if nl is not None:
        if not isinstance(nl, list) or not nl:
            _fail(cfg, "n_list must be a non-empty list of positive integers", "n_list")
        for i, v in enumerate(nl):
            _positive_int(cfg, v, "n_list", i)
        if sorted(nl) != list(nl) or len(set(nl)) != len(nl):
            _fail(cfg, "n_list must be strictly increasing", "n_list")
    _positive_int(cfg, raw.get("n_paths", 10000), "n_paths")
    for i, p in enumerate(raw.get("probes") or []):
        if not (isinstance(p, list) and len(p) == 2):
            _fail(cfg, "each probe is [s, x]", "probes", i)
        s = _number(cfg, p[0], "probes", i)
        if not t0 <= s < T:
            _fail(cfg, f"probe time {s} outside [t0, T)", "probes", i)
        xs = p[1] if isinstance(p[1], list) else [p[1]]
        for v in xs:
            xv = _number(cfg, v, "probes", i)
            if not lo < xv < hi:
                _fail(cfg, f"probe point {xv} outside the box", "probes", i)
    checks = raw.get("checks") or {}
    if not isinstance(checks, dict):
        _fail(cfg, "checks must be a mapping", "checks")
    for k, v in checks.items():
        if k not in entry.defaults.get("checks", {}):
            _fail(cfg, f"case {cfg.case!r} has no check {k!r}", "checks", k)
        _number(cfg, v, "checks", k)

    if cfg.spec.dim != 1 and cfg.case not in ("heat_baseline",):
        _fail(cfg, "only the heat baseline accepts dim > 1", "diffusion")
    if sch in entry.lattice_schemes:
        try:
            check_lattice_cfl(cfg.spec, cfg.time_grid(), lo, hi, cfg.n_space())
        except CFLError as exc:
            raise ConfigError(str(exc), line=cfg.line_of("grid", "n_steps")) from None
    if cfg.obstacle is not None:
        tg = cfg.time_grid()
        xs = np.linspace(lo, hi, cfg.n_space()).reshape(-1, 1)
        gap = cfg.driver.phi_at(xs) - np.asarray(cfg.obstacle(tg.T, xs)) * np.ones(xs.shape[0])
        if np.any(gap < -1e-12):
            _fail(cfg, "terminal value lies below the obstacle at T", "obstacle")
    entry.validate(cfg)
