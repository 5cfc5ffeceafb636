"""Flat key=value run configuration.

One namespace serves every subcommand; each command checks that the
keys it needs were actually set. Unknown and duplicate keys are
rejected at parse time so a typo cannot silently fall back to a
default, and the effective mapping is echoed into the run directory.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    # paths and identity
    profile: str = ""
    out: str = ""
    frames: str = ""
    annotations: str = ""
    checkpoint: str = ""
    detections: str = ""
    suite: str = ""
    seed: int = 0
    # dataset geometry
    N: int = 100
    c: int = 5
    s: int = 1
    sigma: float = 2.0
    theta: float = 40.0
    omega: float = 15.0
    alpha: float = 15.0
    sf: float = 1.0
    train_frames: int = 0   # 0 = profile default
    eval_frames: int = 0
    # network
    filter_config: int = 3
    activation: str = "elu"
    dropout: float = 0.5
    # optimization
    lr: float = 1e-5
    batch: int = 32
    steps: int = 500
    # inference / evaluation
    frame_step: int = 1
    renders: bool = False


_PARSERS = {bool: _parse_bool, int: int, float: float, str: str}
_FIELDS = {f.name: f.type for f in fields(RunConfig)}
_TYPES = {"str": str, "int": int, "float": float, "bool": bool}


def parse_mapping(lines, source: str = "<config>") -> dict[str, str]:
    """key=value lines to a mapping; rejects unknown and duplicate keys."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in mapping:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def from_mapping(mapping: dict[str, str]) -> tuple[RunConfig, frozenset]:
    """Typed config plus the set of keys that were explicitly given."""
    cfg = RunConfig()
    for key, value in mapping.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _TYPES[_FIELDS[key]] if isinstance(_FIELDS[key], str) else _FIELDS[key]
        try:
            setattr(cfg, key, _PARSERS[kind](value))
        except ValueError:
            raise ConfigError(
                f"config key {key!r}: cannot parse {value!r} as {kind.__name__}"
            ) from None
    return cfg, frozenset(mapping)


def load_config(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_mapping(f.read().splitlines(), source=str(path))


def to_mapping(cfg: RunConfig) -> dict[str, str]:
    """Effective values, every key, in declaration order."""
    out = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        out[f.name] = str(v).lower() if isinstance(v, bool) else str(v)
    return out


def require(given: frozenset, command: str, *keys: str):
    missing = [k for k in keys if k not in given]
    if missing:
        raise ConfigError(f"{command}: missing required config keys: {', '.join(missing)}")
