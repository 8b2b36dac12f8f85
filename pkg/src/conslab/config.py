"""Experiment configuration: INI sections with a fixed schema, typed values and defaults."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

SCHEMES = ("particles", "viscous", "fronttracking")
STUDIES = ("simulate", "convergence", "cauchy", "entropy-check", "stability-bound")


class ConfigError(ValueError):
    pass


# type tags: str, float, int, bool, floats, ints, pairs
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "model": {
        "preset": ("str", "lwr-gauss"),
        "mobility": ("str", ""),
        "velocity": ("str", ""),
        "kernel": ("str", ""),
        "flux": ("str", "burgers"),
    },
    "datum": {
        "preset": ("str", "parabola"),
        "file": ("str", ""),
    },
    "scheme": {
        "name": ("str", "particles"),
        "N": ("int", 200),
        "nu": ("int", 8),
        "epsilon": ("float", 0.01),
        "h_ratio": ("float", 4.0),
        "reference_nu": ("int", 12),
    },
    "study": {
        "kind": ("str", "simulate"),
        "T": ("float", 1.0),
        "output_times": ("floats", [0.25, 0.5, 1.0]),
        "resolutions": ("floats", []),
        "pairs": ("pairs", []),
        "t1": ("float", 0.0),
        "entropy_scales": ("floats", [0.1, 0.1, 0.2, 0.25, 0.4, 0.5]),
        "entropy_t0": ("float", 0.5),
        "entropy_centers": ("int", 5),
        "entropy_constants": ("int", 5),
        "time_nodes": ("int", 21),
        "shift": ("float", 0.25),
        "seed": ("int", 7),
    },
    "tolerances": {
        "integrator": ("float", 1e-8),
        "gamma": ("float", 0.5),
        "entropy": ("float", 1e-6),
        "slope": ("float", math.nan),
        "stability": ("float", 1e-12),
    },
    "output": {
        "dir": ("str", "out"),
        "svg": ("bool", True),
    },
}

_PAIR_RE = re.compile(r"^\s*(\d+)\s*[-:]\s*(\d+)\s*$")


def _parse_value(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "pairs":
            out = []
            for item in raw.split(","):
                if not item.strip():
                    continue
                m = _PAIR_RE.match(item)
                if not m:
                    raise ValueError(item)
                out.append((int(m.group(1)), int(m.group(2))))
            return out
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from exc
    raise ConfigError(f"unknown value type {kind}")


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "pairs":
        return ", ".join(f"{a}-{b}" for a, b in value)
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    def get(self, dotted: str):
        s, k = dotted.split(".", 1)
        return self.values[s][k]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return _canon(self.values) == _canon(other.values)

    def to_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (kind, _) in keys.items():
                lines.append(f"{key} = {_format_value(kind, self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)


def _canon(values):
    out = {}
    for s, keys in values.items():
        for k, v in keys.items():
            if isinstance(v, float) and math.isnan(v):
                v = "nan"
            out[(s, k)] = v
    return out


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every key, for error messages."""
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            continue
        m = re.match(r"([^=:]+)[=:]", s)
        if m and section is not None:
            where[(section, m.group(1).strip())] = n
    return where


def parse_config(text: str = "", overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse INI text, apply ``section.key=value`` overrides and fill documented defaults."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"syntax error{f' at line {line}' if line else ''}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    lines = _key_lines(text)
    raw: dict[str, dict[str, tuple[str, str]]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            n = next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), "?")
            raise ConfigError(f"line {n}: unknown section [{section}]")
        for key, val in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"line {lines.get((section, key), '?')}: unknown key '{key}' in [{section}]")
            raw.setdefault(section, {})[key] = (val, f"line {lines.get((section, key), '?')}")
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, val = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override: unknown key '{lhs.strip()}'")
        raw.setdefault(section, {})[key] = (val, f"override {lhs.strip()}")
    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            if section in raw and key in raw[section]:
                val, where = raw[section][key]
                values[section][key] = _parse_value(kind, val, f"{where} ({section}.{key})")
            else:
                values[section][key] = list(default) if isinstance(default, list) else default
    cfg = ExperimentConfig(values)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    from .core.presets import PRESET_MODELS, UnknownPreset, make_preset
    from .harness import PRESET_DATA

    if cfg["scheme"]["name"] not in SCHEMES:
        raise ConfigError(f"scheme.name must be one of {SCHEMES}")
    if cfg["study"]["kind"] not in STUDIES:
        raise ConfigError(f"study.kind must be one of {STUDIES}")
    m = cfg["model"]
    if m["preset"] and m["preset"] not in PRESET_MODELS:
        raise ConfigError(f"unknown model preset '{m['preset']}'")
    for key, role in (("mobility", "mobility"), ("velocity", "field"), ("kernel", "field"), ("flux", "flux")):
        if m[key]:
            try:
                make_preset(m[key], role)
            except (UnknownPreset, TypeError, ValueError) as exc:
                raise ConfigError(f"model.{key}: {exc}") from exc
    if not cfg["datum"]["file"] and cfg["datum"]["preset"] not in (*PRESET_DATA, "nwave", "riemann-shock"):
        raise ConfigError(f"unknown datum preset '{cfg['datum']['preset']}'")
    st = cfg["study"]
    if st["T"] <= 0:
        raise ConfigError("study.T must be positive")
    if any(t < 0 or t > st["T"] for t in st["output_times"]):
        raise ConfigError("study.output_times must lie in [0, T]")
    if len(st["entropy_scales"]) % 2:
        raise ConfigError("study.entropy_scales must list (tau, hx) pairs")
    if cfg["scheme"]["epsilon"] <= 0:
        raise ConfigError("scheme.epsilon must be positive")
