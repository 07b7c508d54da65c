"""UAV propulsion/battery ledger and the non-linear rectenna at the devices."""
from dataclasses import replace
from typing import Sequence

import numpy as np

from uavwet.common.config import ChannelParams, HarvesterParams, PropulsionParams
from uavwet.common.state import DeviceBattery, Position3, UavBattery
from uavwet.sim.geo_channel import avg_channel_gain


def propulsion_power(V, p: PropulsionParams):
    """Rotary-wing propulsion power (W): blade profile + parasite + induced."""
    V = np.asarray(V, dtype=float)
    blade = p.p_a * (1.0 + 3.0 * V ** 2 / p.v_tip ** 2)
    parasite = 0.5 * p.f0 * p.rho * p.e1 * p.area * V ** 3
    induced = p.p_b * np.sqrt(np.sqrt(1.0 + V ** 4 / (4.0 * p.e0 ** 4)) - V ** 2 / (2.0 * p.e0 ** 2))
    out = blade + parasite + induced
    return float(out) if out.ndim == 0 else out


def slot_draw(V: float, wet_on: int, P_u: float, slot: float, p: PropulsionParams) -> float:
    """Energy a UAV spends in one slot (W*s)."""
    return propulsion_power(V, p) * slot + wet_on * P_u * slot


def uav_battery_step(b: UavBattery, V: float, wet_on: int, P_u: float, slot: float,
                     p: PropulsionParams) -> UavBattery:
    if slot <= 0.0:
        raise ValueError(f"slot length must be positive, got {slot}")
    level = max(b.level - propulsion_power(V, p) * slot - wet_on * P_u * slot, 0.0)
    return replace(b, level=level)


def harvest_dc_power(p_rf, h: HarvesterParams):
    """DC power (W) out of the rectenna for received RF power p_rf (W)."""
    p_rf = np.asarray(p_rf, dtype=float)
    out = np.where(p_rf < h.p_sen, 0.0,
                   np.where(p_rf < h.p_sat, h.curve(p_rf), h.curve(h.p_sat)))
    return float(out) if out.ndim == 0 else out


def harvested_energy(device: Position3, uavs: Sequence[tuple[Position3, int]], P_u: float,
                     ch: ChannelParams, h: HarvesterParams, slot: float) -> float:
    # RF powers add up before the rectenna non-linearity
    p_rf = sum(P_u * wet_on * avg_channel_gain(pos, device, ch) for pos, wet_on in uavs)
    return harvest_dc_power(p_rf, h) * slot


def device_battery_step(b: DeviceBattery, e_har: float) -> DeviceBattery:
    if e_har < 0.0:
        raise ValueError(f"harvested energy must be non-negative, got {e_har}")
    return replace(b, level=min(b.level + e_har, b.capacity))
