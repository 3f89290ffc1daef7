"""Run configuration: an INI-like text format with [section] headers and key = value lines."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import ParseError, ValidationError

SCENARIOS = (
    "assembly-check",
    "spectrum",
    "analyticity",
    "maximal-function",
    "maxreg",
    "kernels",
    "dyadic",
    "best-approx",
    "projections",
    "deltainv",
    "corollary23",
)
DOMAIN_NAMES = ("square", "lshape")
MAX_LEVEL = 9

KEYS = {
    "run": {"domain", "levels", "r", "scenarios", "seed", "T"},
    "dyadic": {"C_star"},
    "solver": {"dof_cap", "cache_dir"},
    "output": {"path"},
}


@dataclass(frozen=True)
class RunConfig:
    domains: tuple = DOMAIN_NAMES
    levels: tuple = (3, 4, 5)
    r: int = 1
    scenarios: tuple = SCENARIOS
    C_star: float = 16.0
    seed: int = 42
    T: float = 1.0
    output: str = "heatlab.csv"
    dof_cap: int = 5000
    cache_dir: str | None = None

    def __post_init__(self):
        validate(self)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def validate(cfg: RunConfig) -> None:
    for d in cfg.domains:
        if d not in DOMAIN_NAMES:
            raise ValidationError(f"unknown domain {d!r}; allowed values: {', '.join(DOMAIN_NAMES)}")
    if not cfg.domains:
        raise ValidationError("at least one domain is required")
    if not cfg.levels:
        raise ValidationError("empty level range")
    for lv in cfg.levels:
        if not 1 <= lv <= MAX_LEVEL:
            raise ValidationError(f"level {lv} outside 1..{MAX_LEVEL}")
    if cfg.r not in (1, 2):
        raise ValidationError(f"polynomial degree r must be 1 or 2, got {cfg.r}")
    bad = [s for s in cfg.scenarios if s not in SCENARIOS]
    if bad:
        raise ValidationError(f"unknown scenario(s) {', '.join(bad)}; allowed values: {', '.join(SCENARIOS)}")
    if not cfg.scenarios:
        raise ValidationError("no scenarios selected")
    if cfg.C_star < 16:
        raise ValidationError(f"C_star must be at least 16, got {cfg.C_star}")
    if cfg.T != 1.0:
        raise ValidationError("only T = 1 is supported")
    if cfg.dof_cap < 1:
        raise ValidationError("dof_cap must be positive")


def parse_levels(text: str) -> tuple:
    """'3..5' -> (3, 4, 5); '4' -> (4,); '3, 5' -> (3, 5)."""
    text = text.strip()
    m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if a > b:
            raise ValidationError(f"invalid level range {text!r}: start exceeds end")
        return tuple(range(a, b + 1))
    try:
        levels = tuple(int(x) for x in re.split(r"[,\s]+", text) if x)
    except ValueError:
        raise ValidationError(f"invalid level specification {text!r}; expected a..b") from None
    if not levels:
        raise ValidationError("empty level range")
    return tuple(sorted(set(levels)))


def _split_list(text: str) -> tuple:
    return tuple(x for x in re.split(r"[,\s]+", text.strip()) if x)


def _convert(section: str, key: str, value: str, line: int):
    try:
        if key == "domain":
            return "domains", _split_list(value)
        if key == "levels":
            return "levels", parse_levels(value)
        if key == "scenarios":
            items = _split_list(value)
            return "scenarios", SCENARIOS if items == ("all",) else items
        if key in ("r", "seed", "dof_cap"):
            return key, int(value)
        if key in ("T", "C_star"):
            return key, float(value)
        if key == "path":
            return "output", value.strip()
        if key == "cache_dir":
            return "cache_dir", value.strip() or None
    except ValueError:
        raise ValidationError(f"line {line}: invalid value {value!r} for {key}") from None
    raise ParseError(f"unknown key {key!r} in [{section}]", line)


def parse_config(text: str) -> RunConfig:
    section = "run"
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", line)
        if m:
            section = m.group(1)
            if section not in KEYS:
                raise ParseError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS[section]:
            raise ParseError(f"unknown key {key!r} in [{section}]", lineno)
        name, val = _convert(section, key, value, lineno)
        values[name] = val
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
