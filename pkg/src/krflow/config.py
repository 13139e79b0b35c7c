"""Flat key = value configuration with sections, defaults and a canonical hash.

Format: `[section]` headers, `key = value` lines, `#` comments.  Unknown
sections or keys are errors with line numbers; every key has a default, so
the empty document is a valid configuration.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError

# (type, default); types: int, float, bool, str, floats, ints
SCHEMA = {
    "grid": {
        "n": ("int", 1),
        "resolution": ("int", 256),
        "dealias": ("bool", False),
    },
    "background": {
        "twist_kind": ("str", "none"),
        "twist_amplitude": ("float", 0.0),
        "twist_frequency": ("int", 1),
        "twist_axis": ("int", 1),
        "margin": ("float", 0.1),
        "t_max": ("float", 1.0),
    },
    "initial": {
        "kind": ("str", "zero"),
        "amplitude": ("float", 0.0),
        "frequency": ("int", 1),
        "gamma": ("float", 0.3),
        "p": ("float", 3.0),
        "axis": ("int", 1),
        "s": ("float", 0.0),
        "tau0": ("float", 0.0),
    },
    "flow": {
        "t_end": ("float", 0.1),
        "dt_max": ("float", 0.01),
        "dt_init": ("float", 0.001),
        "kappa": ("float", 1.0),
        "time_grid": ("str", "geometric"),
        "geometric_ratio": ("float", 1.3),
        "t_floor": ("float", 0.0),
        "sample_times": ("floats", ()),
        "retry_shrink": ("float", 0.5),
        "dt_min": ("float", 1e-12),
        "refine": ("int", 0),
        "s_values": ("floats", (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)),
        "study_resolutions": ("ints", ()),
        "study_refines": ("ints", ()),
        "study_s": ("floats", ()),
    },
    "monitors": {
        "lp_p": ("float", 3.0),
        "lp_lambda": ("float", 0.0),
        "cutoff": ("str", "one_plus_cos"),
        "data_class": ("str", "auto"),
        "t_positive": ("float", 1e-3),
        "c_scheme": ("float", 0.0),
    },
    "output": {
        "dir": ("str", "out"),
        "snapshots": ("bool", True),
        "trace": ("bool", True),
    },
}

_CHOICES = {
    ("background", "twist_kind"): ("none", "cos_mode"),
    ("initial", "kind"): ("zero", "ridge_c11", "cusp_lp", "smooth_mode"),
    ("flow", "time_grid"): ("geometric", "uniform"),
    ("monitors", "cutoff"): ("one_plus_cos", "constant"),
    ("monitors", "data_class"): ("auto", "c11", "linf"),
}


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip()) if raw else ()
        if kind == "ints":
            return tuple(int(tok) for tok in raw.split(",") if tok.strip()) if raw else ()
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from exc


def _format(kind: str, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return "%.17g" % value
    if kind == "floats":
        return ", ".join("%.17g" % v for v in value)
    if kind == "ints":
        return ", ".join(str(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def where(self, section: str, key: str) -> str:
        line = self.lines.get((section, key))
        loc = f" (line {line})" if line else ""
        return f"{section}.{key}{loc}"

    def serialize(self) -> str:
        out = []
        for section, keys in SCHEMA.items():
            out.append(f"[{section}]")
            for key, (kind, _default) in keys.items():
                out.append(f"{key} = {_format(kind, self.values[(section, key)])}")
            out.append("")
        return "\n".join(out)

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("ascii")).hexdigest()


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for section, keys in SCHEMA.items():
        for key, (_kind, default) in keys.items():
            cfg.values[(section, key)] = default
    current = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}] (line {lineno})")
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value (line {lineno})")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if current is None:
            raise ConfigError(f"key {key!r} before any [section] (line {lineno})")
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key {current}.{key} (line {lineno})")
        kind = SCHEMA[current][key][0]
        cfg.values[(current, key)] = _convert(kind, raw_value, f"{current}.{key} (line {lineno})")
        cfg.lines[(current, key)] = lineno
    validate(cfg)
    return cfg


def _require(cfg: RunConfig, section: str, key: str, ok: bool, rule: str) -> None:
    if not ok:
        raise ConfigError(f"{cfg.where(section, key)}: {rule}")


def validate(cfg: RunConfig) -> None:
    g = cfg.get
    for (section, key), choices in _CHOICES.items():
        _require(cfg, section, key, g(section, key) in choices,
                 f"must be one of {', '.join(choices)}")
    n = g("grid", "n")
    _require(cfg, "grid", "n", n in (1, 2), "complex dimension must be 1 or 2")
    res = g("grid", "resolution")
    _require(cfg, "grid", "resolution", res >= 8 and (res & (res - 1)) == 0,
             "must be a power of two >= 8")
    real_dim = 2 * n
    _require(cfg, "background", "twist_axis", 1 <= g("background", "twist_axis") <= real_dim,
             f"must be in [1, {real_dim}]")
    _require(cfg, "background", "twist_amplitude", g("background", "twist_amplitude") >= 0.0,
             "must be >= 0")
    _require(cfg, "background", "margin", 0.0 < g("background", "margin") < 1.0,
             "must be in (0, 1)")
    _require(cfg, "background", "t_max", g("background", "t_max") > 0.0, "must be > 0")

    kind = g("initial", "kind")
    amp = g("initial", "amplitude")
    _require(cfg, "initial", "amplitude", amp >= 0.0, "must be >= 0")
    if kind == "ridge_c11":
        _require(cfg, "initial", "amplitude", amp <= 4.0,
                 "ridge amplitude must satisfy a <= 4 (cone bound 1 - a/4 >= 0)")
    if kind == "cusp_lp":
        _require(cfg, "initial", "amplitude", amp <= 1.0,
                 "cusp amplitude must satisfy a <= 1 (cone bound 1 - a >= 0)")
        gamma = g("initial", "gamma")
        _require(cfg, "initial", "gamma", 0.0 < gamma <= 1.0 / 3.0,
                 "must be in (0, 1/3]")
        _require(cfg, "initial", "gamma", gamma * g("initial", "p") < 1.0,
                 f"gamma * p must be < 1, got {gamma * g('initial', 'p'):g}")
    _require(cfg, "initial", "frequency", g("initial", "frequency") >= 1, "must be >= 1")
    _require(cfg, "initial", "axis", 1 <= g("initial", "axis") <= real_dim,
             f"must be in [1, {real_dim}]")
    _require(cfg, "initial", "s", 0.0 <= g("initial", "s") <= 1.0, "must be in [0, 1]")
    _require(cfg, "initial", "tau0", g("initial", "tau0") >= 0.0, "must be >= 0")

    _require(cfg, "flow", "t_end", g("flow", "t_end") > 0.0, "must be > 0")
    _require(cfg, "flow", "dt_max", g("flow", "dt_max") > 0.0, "must be > 0")
    _require(cfg, "flow", "dt_init", g("flow", "dt_init") > 0.0, "must be > 0")
    _require(cfg, "flow", "kappa", g("flow", "kappa") >= 0.0, "must be >= 0")
    _require(cfg, "flow", "geometric_ratio", g("flow", "geometric_ratio") > 1.0,
             "must be > 1")
    _require(cfg, "flow", "retry_shrink", 0.0 < g("flow", "retry_shrink") < 1.0,
             "must be in (0, 1)")
    _require(cfg, "flow", "refine", g("flow", "refine") >= 0, "must be >= 0")
    t_end = g("flow", "t_end")
    samples = g("flow", "sample_times")
    _require(cfg, "flow", "sample_times",
             all(0.0 <= s <= t_end * (1 + 1e-12) for s in samples),
             "sample times must lie in [0, t_end]")
    _require(cfg, "flow", "s_values",
             all(0.0 < s <= 1.0 for s in g("flow", "s_values")),
             "sweep values must lie in (0, 1]")
    _require(cfg, "flow", "study_resolutions",
             all(r >= 8 and (r & (r - 1)) == 0
                 for r in g("flow", "study_resolutions")),
             "resolutions must be powers of two >= 8")
    _require(cfg, "flow", "study_refines",
             all(r >= 0 for r in g("flow", "study_refines")), "refines must be >= 0")
    _require(cfg, "flow", "study_s",
             all(0.0 < s <= 1.0 for s in g("flow", "study_s")),
             "study s values must lie in (0, 1]")

    _require(cfg, "monitors", "lp_p", g("monitors", "lp_p") >= 1.0, "must be >= 1")
    _require(cfg, "monitors", "lp_lambda", g("monitors", "lp_lambda") >= 0.0,
             "must be >= 0")
    _require(cfg, "monitors", "t_positive", g("monitors", "t_positive") > 0.0,
             "must be > 0")
