"""Multi-agent WET environment: observation assembly, constrained dynamics, rewards."""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from uavwet.common.config import Scenario, WorldConfig
from uavwet.common.decision import AgentAction
from uavwet.common.enums import Penalty
from uavwet.common.errors import ConfigError, EpisodeStateError
from uavwet.common.seeding import substream
from uavwet.common.state import DeviceBattery, EnvState, Position3, UavBattery
from uavwet.sim import hoe as hoe_mod
from uavwet.sim.energy import (device_battery_step, harvest_dc_power, harvested_energy, slot_draw,
                               uav_battery_step)
from uavwet.sim.geo_channel import gain_matrix

logger_env = logging.getLogger("_ENV")


@dataclass(frozen=True)
class SimilarityMatrix:
    z: np.ndarray           # U x U, degree on the diagonal
    varrho2: float


@dataclass(frozen=True)
class StepOutcome:
    obs_next: np.ndarray            # U x M
    rewards: np.ndarray             # U
    pen: np.ndarray                 # U x 2 (PEN^0 distance, PEN^1 area)
    e_har: np.ndarray               # I, harvested this slot (W*s)
    single_har: np.ndarray          # U x I, F(P_u C_u G) * slot
    n_weight: np.ndarray            # U, effective WET weight N_u
    wet: np.ndarray                 # U, C after the battery zeroing rule
    speed: np.ndarray               # U, commanded speed after the V_max clamp
    dev_before: np.ndarray          # I
    dev_after: np.ndarray           # I
    uav_after: np.ndarray           # U
    hoe_before: tuple[int, ...]
    unsatisfied: frozenset[int]     # I_l[t]
    done: bool
    r_charge: np.ndarray = field(default_factory=lambda: np.zeros(0))    # r_{u,0}
    r_penalty: np.ndarray = field(default_factory=lambda: np.zeros(0))   # r_{u,1}


def _device_positions(scenario: Scenario) -> tuple[Position3, ...]:
    if scenario.device_positions is not None:
        return tuple(Position3(float(x), float(y), 0.0) for x, y in scenario.device_positions)
    rng = np.random.default_rng(scenario.device_seed)
    xs = rng.uniform(0.0, scenario.width, scenario.n_devices)
    ys = rng.uniform(0.0, scenario.length, scenario.n_devices)
    return tuple(Position3(float(x), float(y), 0.0) for x, y in zip(xs, ys))


def reset(cfg: WorldConfig, scenario: Scenario, seed: int, episode: int = 0) -> tuple[EnvState, np.ndarray]:
    env = cfg.env
    if env.b_thr > env.b_i_max:
        raise ConfigError(f"b_thr ({env.b_thr}) exceeds b_i_max ({env.b_i_max})")
    rng = substream(seed, "env", episode)
    h_fix = cfg.channel.h_fix
    uav_pos = tuple(
        Position3(float(rng.uniform(0.0, scenario.width)), float(rng.uniform(0.0, scenario.length)), h_fix)
        for _ in range(scenario.n_uavs)
    )
    levels = rng.uniform(env.b_i_init_low, env.b_i_init_high, scenario.n_devices)
    state = EnvState(
        slot=0,
        horizon=scenario.horizon,
        uav_pos=uav_pos,
        uav_batt=tuple(UavBattery(env.b_u_max, env.b_u_max, env.b_u_min) for _ in range(scenario.n_uavs)),
        dev_pos=_device_positions(scenario),
        dev_batt=tuple(DeviceBattery(float(b), env.b_i_max, env.b_thr) for b in levels),
        hoe=hoe_mod.initial_hoe(levels, env.b_thr, scenario.horizon),
        rng_seed=int(seed),
        hoe_sums=tuple(0 for _ in range(scenario.n_devices)),
    )
    return state, observations(state, cfg, scenario)


def observations(s: EnvState, cfg: WorldConfig, scenario: Scenario) -> np.ndarray:
    """Per-UAV state vectors (x, y, H_1..H_I, B_1..B_I, B_u), length 2I+3, scaled."""
    scale = max(scenario.width, scenario.length)
    shared = np.concatenate([
        np.asarray(s.hoe.h, dtype=float) / s.horizon,
        s.dev_levels() / cfg.env.b_i_max,
    ])
    rows = [
        np.concatenate([[p.x / scale, p.y / scale], shared, [b.level / cfg.env.b_u_max]])
        for p, b in zip(s.uav_pos, s.uav_batt)
    ]
    return np.stack(rows)


def similarity_from_xy(xy: np.ndarray, varrho2: float) -> SimilarityMatrix:
    diff = xy[:, None, :] - xy[None, :, :]
    z = np.exp(-np.sum(diff ** 2, axis=-1) / (2.0 * varrho2))
    np.fill_diagonal(z, 0.0)
    np.fill_diagonal(z, z.sum(axis=1))
    return SimilarityMatrix(z=z, varrho2=varrho2)


def similarity(s: EnvState, varrho2: float) -> SimilarityMatrix:
    return similarity_from_xy(s.uav_xy(), varrho2)


def _wet_weights(single_har: np.ndarray, e_har: np.ndarray) -> np.ndarray:
    # w_i^u is skipped (0) for devices that harvested nothing
    safe = np.where(e_har > 0.0, e_har, 1.0)
    w_iu = np.where(e_har[None, :] > 0.0, single_har / safe[None, :], 0.0)
    w_u = w_iu.sum(axis=1)
    total = w_u.sum()
    if total <= 0.0:
        return np.zeros_like(w_u)
    return w_u / total


def _single_harvest(s: EnvState, wet: np.ndarray, cfg: WorldConfig) -> np.ndarray:
    dev_xy = np.array([[p.x, p.y] for p in s.dev_pos], dtype=float)
    gains = gain_matrix(s.uav_xy(), dev_xy, cfg.channel)
    return np.asarray(harvest_dc_power(cfg.env.p_u * wet[:, None] * gains, cfg.harvester)) * cfg.env.slot


def effective_wet_weight(s: EnvState, acts: Sequence[AgentAction], cfg: WorldConfig) -> np.ndarray:
    """N_u for the given WET flags evaluated at the slot's start positions."""
    wet = np.array([a.C for a in acts], dtype=float)
    uavs = list(zip(s.uav_pos, wet))
    e_har = np.array([harvested_energy(d, uavs, cfg.env.p_u, cfg.channel, cfg.harvester, cfg.env.slot)
                      for d in s.dev_pos])
    return _wet_weights(_single_harvest(s, wet, cfg), e_har)


def reward(s: EnvState, outcome: StepOutcome, cfg: WorldConfig, uses_hoe: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(r_u, r_{u,0}, r_{u,1}) for one slot."""
    env = cfg.env
    idx = sorted(outcome.unsatisfied)
    gained = outcome.dev_after[idx] - outcome.dev_before[idx]
    if uses_hoe:
        h = np.asarray(outcome.hoe_before, dtype=float)[idx]
        numer = float(np.sum(gained * h))
        denom = 1.0 + len(idx) * float(np.sum(h))
    else:
        numer = float(np.sum(gained))
        denom = 1.0 + len(idx)
    r_charge = outcome.n_weight * numer / denom + env.xi2 * (outcome.uav_after - env.b_u_min)
    own = outcome.pen.sum(axis=1).astype(float)
    r_penalty = np.full_like(own, own.sum()) if env.shared_penalty else own
    return env.xi0 * r_charge - env.xi1 * r_penalty, r_charge, r_penalty


def apply_actions(s: EnvState, acts: Sequence[AgentAction], cfg: WorldConfig, scenario: Scenario,
                  uses_hoe: bool = True) -> tuple[StepOutcome, EnvState]:
    if s.done:
        raise EpisodeStateError(f"episode already finished at slot {s.slot}/{s.horizon}")
    if len(acts) != s.n_uavs:
        raise ValueError(f"{len(acts)} actions for {s.n_uavs} UAVs")
    env = cfg.env
    xy = s.uav_xy()

    # (1) candidate positions under the velocity cap
    speed = np.clip(np.array([a.V for a in acts], dtype=float), 0.0, env.v_max)
    phi = np.array([a.phi for a in acts], dtype=float)
    cand = xy + (speed * env.slot)[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)

    # (2) penalties on the candidates, then clamp into the area
    pen = np.zeros((s.n_uavs, 2), dtype=int)
    for u in range(s.n_uavs):
        for v in range(u + 1, s.n_uavs):
            if np.linalg.norm(cand[u] - cand[v]) < env.d_min:
                pen[u, Penalty.DISTANCE.value] = pen[v, Penalty.DISTANCE.value] = 1
    outside = ((cand[:, 0] < 0.0) | (cand[:, 0] > scenario.width)
               | (cand[:, 1] < 0.0) | (cand[:, 1] > scenario.length))
    pen[:, Penalty.AREA.value] = outside.astype(int)
    new_xy = np.clip(cand, [0.0, 0.0], [scenario.width, scenario.length])
    if pen.any():
        logger_env.debug("[PENALTY] slot=%s distance=%s area=%s", s.slot,
                         pen[:, 0].tolist(), pen[:, 1].tolist())

    # (3) no WET from a UAV whose battery cannot cover this slot's draw
    wet = np.array([
        a.C if b.level >= slot_draw(v, 1, env.p_u, env.slot, cfg.propulsion) else 0
        for a, b, v in zip(acts, s.uav_batt, speed)
    ], dtype=float)

    # (4) harvest at the slot's positions, then battery ledgers
    uavs = list(zip(s.uav_pos, wet.astype(int)))
    e_har = np.array([harvested_energy(d, uavs, env.p_u, cfg.channel, cfg.harvester, env.slot)
                      for d in s.dev_pos])
    single = _single_harvest(s, wet, cfg)
    dev_batt = tuple(device_battery_step(b, float(e)) for b, e in zip(s.dev_batt, e_har))
    uav_batt = tuple(uav_battery_step(b, float(v), int(c), env.p_u, env.slot, cfg.propulsion)
                     for b, v, c in zip(s.uav_batt, speed, wet))

    # (5) HoE for the next slot
    dev_before = s.dev_levels()
    dev_after = np.array([b.level for b in dev_batt])
    hoe_next = hoe_mod.advance(s.hoe, e_har, dev_after, env.b_thr)

    nxt = replace(
        s,
        slot=s.slot + 1,
        uav_pos=tuple(Position3(float(x), float(y), cfg.channel.h_fix) for x, y in new_xy),
        uav_batt=uav_batt,
        dev_batt=dev_batt,
        hoe=hoe_next,
        hoe_sums=tuple(a + b for a, b in zip(s.hoe_sums, hoe_next.h)),
    )

    # (6) rewards
    outcome = StepOutcome(
        obs_next=observations(nxt, cfg, scenario),
        rewards=np.zeros(s.n_uavs),
        pen=pen,
        e_har=e_har,
        single_har=single,
        n_weight=_wet_weights(single, e_har),
        wet=wet,
        speed=speed,
        dev_before=dev_before,
        dev_after=dev_after,
        uav_after=np.array([b.level for b in uav_batt]),
        hoe_before=s.hoe.h,
        unsatisfied=hoe_mod.unsatisfied_set(dev_before, e_har, env.b_thr),
        done=nxt.done,
    )
    r, r_charge, r_penalty = reward(s, outcome, cfg, uses_hoe)
    return replace(outcome, rewards=r, r_charge=r_charge, r_penalty=r_penalty), nxt


def final_unsatisfied(s: EnvState) -> frozenset[int]:
    # no harvest after the horizon, so I_l[T] reduces to the battery test
    return hoe_mod.unsatisfied_set(s.dev_levels(), [0.0] * s.n_devices, s.dev_batt[0].threshold)


class WetEnv:
    """Stateful wrapper owning one episode; single-threaded, never shared mid-episode."""

    UAV_LOG_FIELDS = ("t", "uav", "x", "y", "V", "phi", "C", "B_u")
    DEV_LOG_FIELDS = ("t", "device", "B_i", "H_i", "E_har")

    def __init__(self, cfg: WorldConfig, scenario: Scenario, uses_hoe: bool = True, record: bool = False):
        self.cfg = cfg
        self.scenario = scenario
        self.uses_hoe = uses_hoe
        self.record = record
        self.state: Optional[EnvState] = None
        self.hoe_history: list[tuple[int, ...]] = []
        self.uav_log: list[tuple] = []
        self.dev_log: list[tuple] = []
        self.pen_counts = np.zeros(2, dtype=int)

    @property
    def obs_dim(self) -> int:
        return self.scenario.obs_dim

    def reset(self, seed: int, episode: int = 0) -> np.ndarray:
        self.state, obs = reset(self.cfg, self.scenario, seed, episode)
        self.hoe_history = []
        self.uav_log = []
        self.dev_log = []
        self.pen_counts = np.zeros(2, dtype=int)
        logger_env.debug("[RESET] seed=%s episode=%s uavs=%s", seed, episode, self.state.uav_xy().round(2).tolist())
        return obs

    def similarity(self) -> SimilarityMatrix:
        return similarity(self.state, self.cfg.env.varrho2)

    def step(self, acts: Sequence[AgentAction]) -> StepOutcome:
        if self.state is None:
            raise EpisodeStateError("step() before reset()")
        prev = self.state
        outcome, self.state = apply_actions(prev, acts, self.cfg, self.scenario, self.uses_hoe)
        self.hoe_history.append(self.state.hoe.h)
        self.pen_counts += outcome.pen.sum(axis=0)
        if self.record:
            for u, (p, a) in enumerate(zip(prev.uav_pos, acts)):
                self.uav_log.append((prev.slot, u, p.x, p.y, float(outcome.speed[u]), a.phi,
                                     int(outcome.wet[u]), float(outcome.uav_after[u])))
            for i in range(prev.n_devices):
                self.dev_log.append((prev.slot, i, float(outcome.dev_after[i]), self.state.hoe.h[i],
                                     float(outcome.e_har[i])))
        return outcome

    def h_total(self) -> int:
        """Incremental H_total over the slots stepped so far."""
        final = final_unsatisfied(self.state)
        return int(sum(self.state.hoe_sums[i] for i in final))
