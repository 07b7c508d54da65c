import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from uavwet.common.enums import Variant
from uavwet.common.errors import ConfigError

logger_run = logging.getLogger("_RUN")
PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config.json"
ENV_PATH = PROJECT_ROOT / ".env_uavwet"


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def load_env(path: Path = ENV_PATH) -> None:
    """Minimal .env loader; never overrides variables already set."""
    if not path.exists():
        return
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        k, v = line.split("=", 1)
        k = k.strip()
        v = v.strip().strip('"').strip("'")
        if k and v and k not in os.environ:
            os.environ[k] = v


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelParams(_Section):
    a: PositiveFloat = 12.08
    b: PositiveFloat = 0.11
    g0: PositiveFloat = 1.0          # linear gain at 1 m
    alpha_l: PositiveFloat = 3.0
    alpha_n: PositiveFloat = 5.0
    h_fix: PositiveFloat = 5.0

    @model_validator(mode="after")
    def _exponents(self):
        if not self.alpha_n > self.alpha_l:
            raise ValueError(f"alpha_n ({self.alpha_n}) must exceed alpha_l ({self.alpha_l})")
        return self


class PropulsionParams(_Section):
    p_a: PositiveFloat = 79.86
    p_b: PositiveFloat = 88.63
    v_tip: PositiveFloat = 120.0
    e0: PositiveFloat = 4.03
    e1: PositiveFloat = 0.6          # fuselage drag ratio
    f0: PositiveFloat = 0.05         # rotor solidity
    rho: PositiveFloat = 1.225
    area: PositiveFloat = 0.503


class HarvesterParams(_Section):
    """Rectenna model: zero below p_sen, logistic curve up to p_sat, flat after."""

    p_sen: PositiveFloat = dbm_to_watts(-10.0)
    p_sat: PositiveFloat = dbm_to_watts(7.0)
    peak_efficiency: float = Field(default=0.55, gt=0.0, le=1.0)
    curve_c: PositiveFloat = 6000.0     # 1/W
    curve_p0: PositiveFloat = 2.5e-3    # W

    @model_validator(mode="before")
    @classmethod
    def _convert_dbm(cls, data: Any):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for key in ("p_sen", "p_sat"):
            dbm_key = f"{key}_dbm"
            if dbm_key in data:
                if key in data:
                    raise ValueError(f"give either {key} or {dbm_key}, not both")
                data[key] = dbm_to_watts(float(data.pop(dbm_key)))
        return data

    @model_validator(mode="after")
    def _curve(self):
        if not 0.0 < self.p_sen < self.p_sat:
            raise ValueError(f"need 0 < p_sen < p_sat, got {self.p_sen} / {self.p_sat}")
        grid = np.linspace(self.p_sen, self.p_sat, 257)
        if np.any(self.curve(grid) > grid):
            raise ValueError("harvester curve exceeds its input power (efficiency > 1)")
        return self

    @property
    def f_max(self) -> float:
        return self.peak_efficiency * self.p_sat * (1.0 + math.exp(-self.curve_c * (self.p_sat - self.curve_p0)))

    def curve(self, p):
        return self.f_max / (1.0 + np.exp(-self.curve_c * (np.asarray(p, dtype=float) - self.curve_p0)))


class EnvParams(_Section):
    p_u: PositiveFloat = 1.0                  # W, WET transmit power
    b_u_min: PositiveFloat = 20000.0          # W*s
    b_u_max: PositiveFloat = 140000.0         # W*s
    b_thr: PositiveFloat = 0.01               # W*s (10 mW*s)
    b_i_max: PositiveFloat = 0.02             # W*s
    b_i_init_low: PositiveFloat = 0.002
    b_i_init_high: PositiveFloat = 0.005
    d_min: PositiveFloat = 5.0
    v_max: PositiveFloat = 20.0
    slot: PositiveFloat = 1.0                 # seconds
    varrho2: PositiveFloat = 100.0
    xi0: float = 0.25
    xi1: float = 1.0
    xi2: float = 1e-5
    shared_penalty: bool = True

    @model_validator(mode="after")
    def _ranges(self):
        if self.b_thr > self.b_i_max:
            raise ValueError(f"b_thr ({self.b_thr}) exceeds device capacity b_i_max ({self.b_i_max})")
        if self.b_u_min >= self.b_u_max:
            raise ValueError(f"b_u_min ({self.b_u_min}) must be below b_u_max ({self.b_u_max})")
        if not self.b_i_init_low <= self.b_i_init_high <= self.b_i_max:
            raise ValueError("device initial battery range must sit inside [0, b_i_max]")
        return self


class TrainConfig(_Section):
    variant: Variant = Variant.MAGRL
    gamma: float = Field(default=0.985, gt=0.0, lt=1.0)
    eps: float = Field(default=0.8, gt=0.0, le=1.0)
    tau: float = Field(default=0.999, ge=0.0, lt=1.0)
    lr: PositiveFloat = 2e-4
    policy_lr: PositiveFloat = 3e-4
    alpha_lr: PositiveFloat = 2e-4
    alpha_init: PositiveFloat = 0.2
    alpha_min: PositiveFloat = 1e-4
    alpha_max: PositiveFloat = 1.0
    target_entropy: Optional[float] = None    # None -> M = 2I+3
    buffer_size: PositiveInt = 2 ** 17
    batch_size: PositiveInt = 128
    episodes: int = Field(default=1500, ge=0)
    hidden_width: PositiveInt = 256
    global_hidden_width: PositiveInt = 256
    log_std_min: float = -5.0
    log_std_max: float = 1.0
    grad_clip: PositiveFloat = 10.0
    squash_correction: bool = True
    global_reward: Literal["mean", "sum"] = "mean"
    optimizer: Literal["sgd", "adam"] = "sgd"

    @property
    def effective_eps(self) -> float:
        return self.eps if self.variant.uses_global else 1.0


class Scenario(_Section):
    width: PositiveFloat                      # W_max
    length: PositiveFloat                     # L_max
    n_uavs: int = Field(ge=2)
    n_devices: PositiveInt
    horizon: PositiveInt = 100                # T
    device_positions: Optional[tuple[tuple[float, float], ...]] = None
    device_seed: int = 0

    @model_validator(mode="after")
    def _positions(self):
        if self.device_positions is None:
            return self
        if len(self.device_positions) != self.n_devices:
            raise ValueError(f"{len(self.device_positions)} device positions for n_devices={self.n_devices}")
        for x, y in self.device_positions:
            if not (0.0 <= x <= self.width and 0.0 <= y <= self.length):
                raise ValueError(f"device position ({x}, {y}) outside {self.width}x{self.length} area")
        return self

    @property
    def obs_dim(self) -> int:
        return 2 * self.n_devices + 3


def _default_scenarios() -> dict[str, Scenario]:
    return {
        "train4x6": Scenario(width=400.0, length=400.0, n_uavs=4, n_devices=6, horizon=100, device_seed=2024),
        # two closely located devices and one far away
        "test2x3": Scenario(width=200.0, length=200.0, n_uavs=2, n_devices=3, horizon=100,
                            device_positions=((50.0, 60.0), (65.0, 45.0), (150.0, 150.0))),
    }


class WorldConfig(_Section):
    channel: ChannelParams = ChannelParams()
    propulsion: PropulsionParams = PropulsionParams()
    harvester: HarvesterParams = HarvesterParams()
    env: EnvParams = EnvParams()
    train: TrainConfig = TrainConfig()
    scenarios: dict[str, Scenario] = Field(default_factory=_default_scenarios)

    def scenario(self, name: str) -> Scenario:
        if name not in self.scenarios:
            raise ConfigError(f"unknown scenario {name!r}; known: {sorted(self.scenarios)}")
        return self.scenarios[name]

    def with_train(self, **updates) -> "WorldConfig":
        """Copy with TrainConfig fields replaced (re-validated)."""
        try:
            train = TrainConfig.model_validate({**self.train.model_dump(), **updates})
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        return self.model_copy(update={"train": train})


def load_config(path: Path | str | None = None) -> WorldConfig:
    """Read a sectioned JSON config; absent keys keep their defaults."""
    if path is None:
        return WorldConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text() or "{}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "scenarios" in raw:
        # user scenarios extend the shipped ones
        raw = {**raw, "scenarios": {**{k: v.model_dump() for k, v in _default_scenarios().items()}, **raw["scenarios"]}}
    try:
        cfg = WorldConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    logger_run.debug("[CONFIG] loaded %s", path)
    return cfg


def save_config(cfg: WorldConfig, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.model_dump(mode="json"), indent=2) + "\n")
