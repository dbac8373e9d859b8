"""Scenario / attack / detection configuration files (TOML).

A scenario file is key-value blocks: one [scenario] header, one [victim]
ship, any number of [[ship]] blocks, optional [antenna], [emission],
[attack] and [detection] overrides.  Every field has the defaults the
dataclasses declare, so a minimal file is just a victim and some traffic.
"""

from __future__ import annotations

import dataclasses

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

from .arpa import ArpaConfig
from .attack import AttackConfig
from .detect import DetectionParams
from .simulator import AntennaSpec, EmissionSpec, Scenario, ShipSpec


class ConfigError(ValueError):
    pass


def _build(cls, data: dict, rename: dict | None = None):
    rename = rename or {}
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = rename.get(key, key)
        if name not in fields:
            raise ConfigError(f"unknown {cls.__name__} field {key!r}")
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    return cls(**kwargs)


def _ship(data: dict) -> ShipSpec:
    data = dict(data)
    dims = data.pop("dims", None)
    if dims is not None:
        bow, stern, port, starboard = dims
        data.update(dim_bow=bow, dim_stern=stern, dim_port=port,
                    dim_starboard=starboard)
    return _build(ShipSpec, data)


def load_scenario(path) -> tuple[Scenario, dict]:
    """Parse a scenario file; returns (Scenario, extra sections) where the
    extras hold the raw [attack]/[detection]/[run] blocks if present."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "victim" not in doc:
        raise ConfigError("scenario file needs a [victim] block")
    head = doc.get("scenario", {})
    scenario = Scenario(
        seed=int(head.get("seed", 0)),
        duration=float(head.get("duration", 120.0)),
        victim=_ship(doc["victim"]),
        ships=tuple(_ship(s) for s in doc.get("ship", [])),
        antenna=_build(AntennaSpec, doc.get("antenna", {})),
        emission=_build(EmissionSpec, doc.get("emission", {})),
    )
    extras = {k: doc[k] for k in ("attack", "detection", "run") if k in doc}
    return scenario, extras


def attack_config(data: dict, kind_override: str | None = None) -> AttackConfig:
    data = dict(data)
    if kind_override is not None:
        data["kind"] = kind_override
    return _build(AttackConfig, data)


def detection_params(data: dict) -> DetectionParams:
    data = {k: v for k, v in data.items() if k not in ("enabled", "anomaly_log")}
    return _build(DetectionParams, data)


def arpa_config(data: dict) -> ArpaConfig:
    return _build(ArpaConfig, data)
