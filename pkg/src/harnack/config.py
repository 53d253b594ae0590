"""Run configuration read from a TOML file."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    space: dict
    operator: dict
    center: object
    radius: float
    seed: int = 0
    out_dir: str = "out"
    ledger: dict = field(default_factory=dict)
    harnack: dict = field(default_factory=dict)
    oscillation: dict = field(default_factory=dict)
    lemmas: dict = field(default_factory=dict)

    @property
    def samples(self) -> int:
        return int(self.harnack.get("samples", 200))

    @property
    def sampler(self) -> str:
        return str(self.harnack.get("sampler", "uniform"))

    @property
    def delta(self) -> float:
        return float(self.harnack.get("delta", 1e-6))

    @property
    def deltas(self) -> list:
        return [float(x) for x in self.harnack.get("deltas", [])]


def parse_config(data: dict) -> RunConfig:
    for key in ("space", "ball"):
        if key not in data:
            raise ConfigError(f"missing [{key}] table")
    b = data["ball"]
    if "radius" not in b:
        raise ConfigError("[ball] needs a radius")
    radius = float(b["radius"])
    if radius <= 0:
        raise ConfigError("ball radius must be positive")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be an unsigned integer")
    return RunConfig(
        space=dict(data["space"]),
        operator=dict(data.get("operator", {"kind": "elliptic"})),
        center=b.get("center", 0),
        radius=radius,
        seed=seed,
        out_dir=str(data.get("out_dir", "out")),
        ledger=dict(data.get("ledger", {})),
        harnack=dict(data.get("harnack", {})),
        oscillation=dict(data.get("oscillation", {})),
        lemmas=dict(data.get("lemmas", {})),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
