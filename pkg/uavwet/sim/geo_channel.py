"""Air-to-ground geometry and the average LoS/NLoS channel gain."""
import math

import numpy as np

from uavwet.common.config import ChannelParams
from uavwet.common.state import Position3


def distance(u: Position3, i: Position3) -> float:
    return math.sqrt((u.x - i.x) ** 2 + (u.y - i.y) ** 2 + (u.z - i.z) ** 2)


def elevation_deg(d, h_fix: float):
    """Elevation angle from UAV to device in degrees, arcsin(h_fix / d)."""
    d = np.asarray(d, dtype=float)
    if h_fix <= 0.0:
        raise ValueError(f"h_fix must be positive, got {h_fix}")
    if np.any(d < h_fix):
        raise ValueError(f"distance {d} below UAV altitude {h_fix}")
    beta = np.degrees(np.arcsin(h_fix / d))
    return float(beta) if beta.ndim == 0 else beta


def p_los(beta, p: ChannelParams):
    """LoS probability for an elevation angle given in degrees."""
    out = 1.0 / (1.0 + p.a * np.exp(-p.b * np.asarray(beta, dtype=float) + p.a * p.b))
    return float(out) if np.ndim(out) == 0 else out


def gain_at_distance(d, p: ChannelParams):
    d = np.asarray(d, dtype=float)
    pl = p_los(elevation_deg(d, p.h_fix), p)
    out = pl * p.g0 * d ** (-p.alpha_l) + (1.0 - pl) * p.g0 * d ** (-p.alpha_n)
    return float(out) if np.ndim(out) == 0 else out


def avg_channel_gain(u: Position3, i: Position3, p: ChannelParams) -> float:
    return gain_at_distance(distance(u, i), p)


def gain_matrix(uav_xy: np.ndarray, dev_xy: np.ndarray, p: ChannelParams) -> np.ndarray:
    """G[u, i] for UAVs at altitude h_fix and ground devices."""
    horiz = np.linalg.norm(uav_xy[:, None, :] - dev_xy[None, :, :], axis=-1)
    d = np.maximum(np.sqrt(horiz ** 2 + p.h_fix ** 2), p.h_fix)
    return np.asarray(gain_at_distance(d, p), dtype=float).reshape(d.shape)
