from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Position3:
    x: float
    y: float
    z: float = 0.0


@dataclass(frozen=True)
class UavBattery:
    level: float          # W*s
    capacity: float       # B_u_max
    reserve: float        # B_u_min


@dataclass(frozen=True)
class DeviceBattery:
    level: float          # W*s
    capacity: float       # B_i_max
    threshold: float      # B_thr


@dataclass(frozen=True)
class HoeState:
    h: tuple[int, ...]
    e_exp: float                  # expected per-slot harvest, B_thr / T
    satisfied: tuple[bool, ...]


@dataclass(frozen=True)
class EnvState:
    """Full simulation state at the beginning of slot `slot`."""

    slot: int
    horizon: int
    uav_pos: tuple[Position3, ...]
    uav_batt: tuple[UavBattery, ...]
    dev_pos: tuple[Position3, ...]
    dev_batt: tuple[DeviceBattery, ...]
    hoe: HoeState
    rng_seed: int
    # bookkeeping for H_total: per-device running sum of H_i[1..t]
    hoe_sums: tuple[int, ...] = field(default=())

    @property
    def n_uavs(self) -> int:
        return len(self.uav_pos)

    @property
    def n_devices(self) -> int:
        return len(self.dev_pos)

    @property
    def done(self) -> bool:
        return self.slot >= self.horizon

    def uav_xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.uav_pos], dtype=float)

    def dev_levels(self) -> np.ndarray:
        return np.array([b.level for b in self.dev_batt], dtype=float)

    def uav_levels(self) -> np.ndarray:
        return np.array([b.level for b in self.uav_batt], dtype=float)
