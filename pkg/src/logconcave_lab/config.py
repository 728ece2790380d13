"""Suite configuration: YAML parsing with line-aware diagnostics, strict key
validation and measure construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigInvalid

MEASURE_KINDS = {
    "gaussian": {"dim", "covariance", "mean", "box_radius"},
    "laplace": {"dim", "box_radius", "scale"},
    "uniform_cube": {"dim", "radius"},
    "convex_body_2d": {"vertices", "barycenter"},
    "steiner": {"of"},
    "tilt": {"of", "theta"},
}
MEASURE_COMMON = {"name", "kind", "shape"}

CHECK_KEYS = {
    "weighted_poincare": {"measures", "functions", "a"},
    "transport_entropy": {"pairs", "variant", "tolerance"},
    "entropy_lower_bound": {"pairs", "tolerance"},
    "t2_cube": {"pairs", "R"},
    "variance_bounds": {"measures"},
    "variance_identity": {"measures"},
    "quadratic_variation": {"measures"},
    "martingale": {"measures", "tolerance"},
    "hj_bound": {"measure", "nu", "functions", "t_sequence", "tolerance"},
    "steiner_tv": {"body", "tolerance"},
    "cheeger_1d": {"measures", "count"},
    "thin_shell": {"measure", "count", "t_values"},
}
CHECK_COMMON = {"id", "informational"}
TOP_KEYS = {"seed", "output", "measures", "pairs", "functions", "checks"}
OUTPUT_KEYS = {"dir", "formats"}
PAIR_KEYS = {"name", "mu", "nu"}
SAMPLED_CHECKS = {"thin_shell"}


class _Located:
    """Plain Python values plus a map from key paths to source lines."""

    def __init__(self):
        self.lines = {}

    def build(self, node, path=()):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = k.value
                if key in out:
                    raise ConfigInvalid(f"line {k.start_mark.line + 1}: duplicate key {key!r}")
                out[key] = self.build(v, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self.build(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))


@dataclass
class SuiteConfig:
    seed: int | None
    output_dir: str
    formats: list
    measures: dict
    pairs: dict
    functions: list | None
    checks: list
    lines: dict = field(default_factory=dict)
    source: str = "<string>"

    def line_of(self, *path):
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path, 0)


def _fail(cfg_lines, path, msg):
    line = 0
    p = tuple(path)
    while p:
        if p in cfg_lines:
            line = cfg_lines[p]
            break
        p = p[:-1]
    where = ".".join(str(x) for x in path) or "<root>"
    raise ConfigInvalid(f"line {line}: {where}: {msg}")


def _check_keys(lines, path, obj, allowed):
    if not isinstance(obj, dict):
        _fail(lines, path, "expected a mapping")
    for k in obj:
        if k not in allowed:
            _fail(lines, tuple(path) + (k,), f"unknown key {k!r} (allowed: {sorted(allowed)})")


def parse_config(text, source="<string>") -> SuiteConfig:
    """Parse and validate a suite configuration.

    Raises
    ------
    ConfigInvalid
        Malformed YAML, unknown keys, missing fields or unresolved names;
        the message carries the source line and the key path.
    """
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{source}: not valid YAML: {exc}") from None
    loc = _Located()
    raw = {} if node is None else loc.build(node)
    lines = loc.lines
    _check_keys(lines, (), raw, TOP_KEYS)

    out = raw.get("output", {}) or {}
    _check_keys(lines, ("output",), out, OUTPUT_KEYS)
    formats = out.get("formats", ["csv", "json"])
    for i, f in enumerate(formats):
        if f not in ("csv", "json"):
            _fail(lines, ("output", "formats", i), f"unknown format {f!r}")

    measures = {}
    for i, m in enumerate(raw.get("measures", []) or []):
        path = ("measures", i)
        if not isinstance(m, dict):
            _fail(lines, path, "expected a mapping")
        kind = m.get("kind")
        if kind not in MEASURE_KINDS:
            _fail(lines, path + ("kind",), f"unknown measure kind {kind!r}")
        _check_keys(lines, path, m, MEASURE_COMMON | MEASURE_KINDS[kind])
        name = m.get("name")
        if not isinstance(name, str):
            _fail(lines, path + ("name",), "every measure needs a string name")
        if name in measures:
            _fail(lines, path + ("name",), f"duplicate measure name {name!r}")
        if kind in ("steiner", "tilt"):
            if m.get("of") not in measures:
                _fail(lines, path + ("of",), f"undefined measure {m.get('of')!r}")
        if kind not in ("steiner", "tilt") and "shape" not in m:
            _fail(lines, path, "missing grid shape")
        measures[name] = dict(m, _index=i)

    pairs = {}
    for i, p in enumerate(raw.get("pairs", []) or []):
        path = ("pairs", i)
        _check_keys(lines, path, p, PAIR_KEYS)
        for side in ("mu", "nu"):
            if p.get(side) not in measures:
                _fail(lines, path + (side,), f"undefined measure {p.get(side)!r}")
        name = p.get("name") or f"{p['mu']}->{p['nu']}"
        pairs[name] = (p["mu"], p["nu"])

    functions = raw.get("functions")
    seed = raw.get("seed")
    checks = []
    for i, c in enumerate(raw.get("checks", []) or []):
        path = ("checks", i)
        if not isinstance(c, dict):
            _fail(lines, path, "expected a mapping")
        cid = c.get("id")
        if cid not in CHECK_KEYS:
            _fail(lines, path + ("id",), f"unknown check id {cid!r}")
        _check_keys(lines, path, c, CHECK_COMMON | CHECK_KEYS[cid])
        for key in ("measures",):
            for j, name in enumerate(c.get(key, []) or []):
                if name not in measures:
                    _fail(lines, path + (key, j), f"undefined measure {name!r}")
        for key in ("measure", "nu", "body"):
            if key in c and c[key] not in measures:
                _fail(lines, path + (key,), f"undefined measure {c[key]!r}")
        for j, name in enumerate(c.get("pairs", []) or []):
            if name not in pairs:
                _fail(lines, path + ("pairs", j), f"undefined pair {name!r}")
        if cid in SAMPLED_CHECKS and seed is None:
            _fail(lines, path, "sampled checks need a top-level seed")
        checks.append(dict(c, _index=i))

    return SuiteConfig(seed, out.get("dir", "reports"), list(formats), measures, pairs, functions, checks,
                       lines, source)


def load_config(path) -> SuiteConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def default_config_path() -> Path:
    return Path(__file__).with_name("data") / "default_suite.yaml"


def scaled_shape(shape, scale):
    return tuple(max(8, int(round(s * scale))) for s in shape)


def build_potential(cfg: SuiteConfig, name, _seen=None):
    """Potential and info for a named measure (resolving ``of`` references)."""
    from . import constructions as C

    m = cfg.measures[name]
    kind = m["kind"]
    try:
        if kind == "gaussian":
            n = int(m["dim"])
            return C.make_gaussian(n, m.get("covariance"), float(m.get("box_radius", 8.0)), m.get("mean"))
        if kind == "laplace":
            return C.make_laplace(int(m["dim"]), float(m.get("box_radius", 20.0)), float(m.get("scale", 1.0)))
        if kind == "uniform_cube":
            return C.make_uniform_cube(int(m["dim"]), float(m.get("radius", 1.0)))
        if kind == "convex_body_2d":
            body = C.make_convex_body_2d(m["vertices"])
            return C.barycentered(body) if m.get("barycenter", False) else body
        if kind == "steiner":
            return C.steiner_symmetrize_2d(build_potential(cfg, m["of"]))
        if kind == "tilt":
            return C.tilt(build_potential(cfg, m["of"]), m["theta"])
    except (KeyError, TypeError, ValueError) as exc:
        _fail(cfg.lines, ("measures", m["_index"]), f"cannot build measure {name!r}: {exc}")
    raise AssertionError(kind)


def measure_shape(cfg: SuiteConfig, name):
    m = cfg.measures[name]
    if "shape" in m:
        return tuple(int(s) for s in m["shape"])
    return measure_shape(cfg, m["of"])
