"""Scenario configuration: TOML file -> validated, defaulted, hashable config.

SNR/SINR values are always given in dB in the file and converted to linear
inside the library. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for unparsable or invalid scenario files."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Vec3 = tuple[float, float, float]


class GridConfig(_Strict):
    bounds_min: Vec3 = (0.0, 0.0, 0.0)
    bounds_max: Vec3 = (1000.0, 1000.0, 300.0)
    cell_size: Vec3 = (100.0, 100.0, 100.0)
    c_geo: int = Field(1, ge=0)

    @field_validator("cell_size")
    @classmethod
    def _positive(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError("cell sizes must be positive")
        return v

    @model_validator(mode="after")
    def _ordered(self):
        if any(h <= l for l, h in zip(self.bounds_min, self.bounds_max)):
            raise ValueError("bounds_max must exceed bounds_min on every axis")
        return self


class BeamConfig(_Strict):
    num_beams: int = Field(16, ge=1)
    mapping: Literal["round_robin", "blocks"] = "round_robin"


class CapacityConfig(_Strict):
    rho_db: list[float] = [0.0, 10.0, 20.0]
    k_min: int = Field(1, ge=1)
    k_max: Optional[int] = None
    """Defaults to ten times the number of beams."""
    policies: list[Literal["Balanced", "UniformRandom"]] = ["Balanced"]
    r_min: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _range(self):
        if not self.rho_db:
            raise ValueError("rho_db must list at least one SNR")
        if self.k_max is not None and self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")
        return self


class NoFlyConfig(_Strict):
    id: str
    min: Vec3
    max: Vec3


class EventConfig(_Strict):
    id: str
    action: Literal["request", "release"] = "request"
    timestamp: float = 0.0
    origin: Optional[Vec3] = None
    destination: Optional[Vec3] = None
    r_min: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _endpoints(self):
        if self.action == "request" and (self.origin is None or self.destination is None):
            raise ValueError("a request needs origin and destination")
        return self


class CorridorConfig(_Strict):
    layers: list[tuple[float, float]] = [(0.0, 100.0), (100.0, 200.0), (200.0, 300.0)]
    bottom_role: Literal["DirectionalEW", "DirectionalNS"] = "DirectionalEW"
    buffer_margin: float = Field(0.0, ge=0)
    rho_db: float = 10.0
    r_min: float = Field(1.0, gt=0)
    nofly: list[NoFlyConfig] = []
    events: list[EventConfig] = []


class LinkConfig(_Strict):
    steepness: float = Field(10.0, gt=0)
    gamma_th_db: float = 0.0


class SensingConfig(_Strict):
    noise_var: float = Field(1.0, gt=0)
    snapshots: int = Field(16, ge=1)
    rx_antennas: int = Field(4, ge=1)
    channel_gain: float = Field(1.0, gt=0)
    slant_range: float = Field(100.0, gt=0)
    position_axes: list[int] = [0]
    velocity_axes: list[int] = []
    velocity_factor: float = Field(0.0, ge=0)
    dt: float = Field(1.0, gt=0)
    beam_gain: float = Field(1e3, gt=0)
    """|adot^H w|^2 used for sensing at fixed operating points."""


class ArrayConfig(_Strict):
    num_elements: int = Field(4, ge=2)
    spacing: float = Field(0.5, gt=0)


class ControlConfig(_Strict):
    A: list[list[float]] = [[2.0]]
    B: list[list[float]] = [[1.0]]
    Q_n: list[list[float]] = [[0.01]]
    G_fb: list[list[float]] = [[1.5]]
    P_lyap: list[list[float]] = [[1.0]]
    eta: float = Field(0.5, gt=0, lt=1)
    q0: list[float] = [1.0]
    horizon: int = Field(200, ge=1)
    bandwidth: float = Field(1.0, gt=0)
    sinr_db: list[float] = []
    sinr_factors: list[float] = [0.01, 0.25, 1.0, 4.0]
    """Operating points as multiples of the critical SINR."""
    divergence_ceiling: float = Field(1e6, gt=0)
    solve_p1: bool = True
    power_cap: float = Field(1e6, gt=0)
    n_kappa: int = Field(101, ge=2)
    theta: float = 0.3
    noise_var: float = Field(1.0, gt=0)
    comm_gain: float = Field(1.0, gt=0)
    link: LinkConfig = LinkConfig()
    sensing: SensingConfig = SensingConfig()
    array: ArrayConfig = ArrayConfig()

    @field_validator("sinr_factors")
    @classmethod
    def _factors(cls, v):
        if any(f <= 0 for f in v):
            raise ValueError("SINR factors must be positive")
        return v


class ScenarioConfig(_Strict):
    seed: int = Field(ge=0)
    replicates: int = Field(500, ge=1)
    output_dir: str = "lawnsim-out"
    grid: GridConfig = GridConfig()
    beams: BeamConfig = BeamConfig()
    capacity: CapacityConfig = CapacityConfig()
    corridor: CorridorConfig = CorridorConfig()
    control: ControlConfig = ControlConfig()

    def config_hash(self) -> str:
        """Stable digest of every field that can change results."""
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, replicates=None, output_dir=None) -> "ScenarioConfig":
        update = {k: v for k, v in (("seed", seed), ("replicates", replicates), ("output_dir", output_dir))
                  if v is not None}
        if not update:
            return self
        return parse_config({**self.model_dump(mode="python"), **update})


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"parse error: {err}") from None
    return parse_config(data)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text())
