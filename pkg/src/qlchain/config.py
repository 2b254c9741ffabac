"""Flat ``section.key = value`` run configuration.

Lines starting with ``#`` are comments. Every key has a default; unknown keys
are an error. Environment variables ``QLCHAIN_SECTION_KEY`` override file
values (``QLCHAIN_BATH_GAMMA`` sets ``bath.gamma``).
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ValidationError

__all__ = ["DEFAULTS", "parse_config", "load_config", "env_overrides", "as_list"]

DEFAULTS: dict[str, str] = {
    "chain.length": "20",
    "chain.coupling": "1.0",
    "chain.couplings": "",
    "chain.omega0": "1.0",
    "chain.pinning": "everywhere",
    "bath.gamma": "2.0",
    "bath.cutoff": "10.0",
    "bath.Ta": "5.0",
    "bath.Tb": "2.0",
    "disorder.width": "0.0",
    "disorder.symmetric": "false",
    "disorder.cutoff": "0.05",
    "ensemble.k": "1",
    "run.classical": "false",
    "scan.lengths": "5,6,8,10,12,15,20",
    "scan.Tm": "0.1,0.2,0.5,1,2,5,10",
    "scan.eps": "0.1",
    "scan.couplings": "0.5,1,2",
    "scan.gammas": "0.5,1,2,4,8",
    "scan.cuts": "all",
    "transient.times": "0,0.5,1,2,5,10,20,50",
    "transient.T_chain": "0.0",
    "verify.N": "0",
    "verify.random_configs": "0",
}

_TYPES = {
    "chain.length": int,
    "ensemble.k": int,
    "verify.N": int,
    "verify.random_configs": int,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if key in _TYPES:
            return _TYPES[key](raw)
        if default.lower() in ("true", "false"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if "," in default or key in ("chain.couplings", "scan.cuts"):
            return raw
        if default.replace(".", "", 1).isdigit():
            return float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"{key}: cannot parse {raw!r}") from None


def as_list(value: str, kind=float) -> list:
    value = value.strip()
    if not value:
        return []
    try:
        return [kind(x) for x in value.split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse list {value!r}") from None


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    unknown = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            unknown.append(key)
            continue
        out[key] = value
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    return out


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    table = {"QLCHAIN_" + k.upper().replace(".", "_"): k for k in DEFAULTS}
    return {table[name]: value for name, value in environ.items() if name in table}


def load_config(path: str | Path | None = None, environ=None) -> dict:
    """Defaults, then the file, then environment overrides, with types applied."""
    raw = dict(DEFAULTS)
    if path is not None:
        raw.update(parse_config(Path(path).read_text()))
    raw.update(env_overrides(environ))
    return {k: _coerce(k, v) for k, v in raw.items()}
