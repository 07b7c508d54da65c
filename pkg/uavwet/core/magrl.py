# PYTHONPATH=. .venv/bin/python -m uavwet.core.runner train --scenario test2x3 --seed 7
"""Per-agent soft actor-critic guided by a global attention critic.

Each UAV owns a policy, two Q critics, an online and a target V critic and a
temperature. When global training is on, a central Q_G / V_G0 / V_G1 trio reads
all agents' observations through the similarity-masked attention block, and
Q_G is mixed into every local Q target with weight (1 - eps).
"""
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from uavwet.common.config import Scenario, TrainConfig, WorldConfig
from uavwet.common.csv_log import METRICS_FIELDS, CsvLog
from uavwet.common.decision import AgentAction
from uavwet.common.enums import ActMode, Variant
from uavwet.common.errors import CheckpointMismatchError, DivergenceError, NonFiniteError
from uavwet.common.seeding import substream
from uavwet.core.replay import Batch, ReplayBuffer
from uavwet.nn.checkpoint import load_checkpoint, restore, save_checkpoint
from uavwet.nn.layers import GlobalNet, Module, clip_grad_norm, local_mlp, make_optimizer, soft_update
from uavwet.nn.tensor import Tensor, concat, minimum, parameter
from uavwet.sim.env import WetEnv

logger_magrl = logging.getLogger("_MAGRL")

ACTION_DIM = 3
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Policy(Module):
    """tanh trunk; head emits a mean and a raw log-std per action dimension."""

    def __init__(self, m: int, width: int, rng: np.random.Generator, log_std_min: float, log_std_max: float):
        self.net = local_mlp(m, width, 2 * ACTION_DIM, rng, activation="tanh")
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max

    def head(self, s: Tensor) -> tuple[Tensor, Tensor]:
        out = self.net(s)
        mean = out[:, :ACTION_DIM]
        span = 0.5 * (self.log_std_max - self.log_std_min)
        log_std = (out[:, ACTION_DIM:].tanh() + 1.0) * span + self.log_std_min
        return mean, log_std

    def sample(self, s: Tensor, noise: np.ndarray, squash_correction: bool = True) -> tuple[Tensor, Tensor]:
        """Reparameterized a = tanh(mu + sigma * noise) and its log-density."""
        mean, log_std = self.head(s)
        a = (mean + log_std.exp() * Tensor(noise)).tanh()
        gauss = -(0.5 * noise ** 2 + _LOG_SQRT_2PI).sum(axis=-1)
        logp = log_std.sum(axis=-1) * -1.0 + gauss
        if squash_correction:
            logp = logp - (1.0 - a * a + 1e-6).log().sum(axis=-1)
        return a, logp


class LocalAgent(Module):
    def __init__(self, m: int, tc: TrainConfig, rng: np.random.Generator):
        w = tc.hidden_width
        self.m = m
        self.squash_correction = tc.squash_correction
        self.policy = Policy(m, w, rng, tc.log_std_min, tc.log_std_max)
        self.q0 = local_mlp(m + ACTION_DIM, w, 1, rng)
        self.q1 = local_mlp(m + ACTION_DIM, w, 1, rng)
        self.v0 = local_mlp(m, w, 1, rng)
        self.v1 = local_mlp(m, w, 1, rng)
        self.v1.load_from(self.v0)
        self.alpha = parameter(np.array([tc.alpha_init]))

    def q(self, j: int, s: np.ndarray, a) -> Tensor:
        net = self.q0 if j == 0 else self.q1
        a = a if isinstance(a, Tensor) else Tensor(a)
        return net(concat([Tensor(s), a], axis=-1)).reshape(-1)

    def q_min(self, s: np.ndarray, a) -> Tensor:
        return minimum(self.q(0, s, a), self.q(1, s, a))

    def value(self, s: np.ndarray, target: bool = False) -> np.ndarray:
        net = self.v1 if target else self.v0
        return net(Tensor(s)).data.reshape(-1)


class GlobalNets(Module):
    def __init__(self, m: int, tc: TrainConfig, rng: np.random.Generator):
        w = tc.global_hidden_width
        self.q_g = GlobalNet(m, w, rng, action_dim=ACTION_DIM)
        self.v_g0 = GlobalNet(m, w, rng)
        self.v_g1 = GlobalNet(m, w, rng)
        self.v_g1.load_from(self.v_g0)


def _half_mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - Tensor(target)
    return (diff * diff).mean() * 0.5


# ---- losses; every expectation over a' uses the noise passed in ----

def local_v_loss(agent: LocalAgent, s: np.ndarray, noise: np.ndarray) -> Tensor:
    a, logp = agent.policy.sample(Tensor(s), noise, agent.squash_correction)
    q_exp = agent.q_min(s, a.data).data - agent.alpha.data[0] * logp.data
    return _half_mse(agent.v0(Tensor(s)).reshape(-1), q_exp)


def local_q_loss(agent: LocalAgent, j: int, s: np.ndarray, a: np.ndarray, r: np.ndarray, s2: np.ndarray,
                 done: np.ndarray, gamma: float, eps: float, q_global: Optional[np.ndarray] = None) -> Tensor:
    y = r + gamma * (1.0 - done) * agent.value(s2, target=True)
    if eps < 1.0:
        if q_global is None:
            raise ValueError("eps < 1 needs the global Q target")
        y = eps * y + (1.0 - eps) * q_global
    return _half_mse(agent.q(j, s, a), y)


def policy_loss(agent: LocalAgent, s: np.ndarray, noise: np.ndarray) -> Tensor:
    a, logp = agent.policy.sample(Tensor(s), noise, agent.squash_correction)
    return (logp * agent.alpha.data[0] - agent.q_min(s, a)).mean()


def temperature_loss(agent: LocalAgent, s: np.ndarray, noise: np.ndarray, target_entropy: float) -> Tensor:
    _, logp = agent.policy.sample(Tensor(s), noise, agent.squash_correction)
    return (agent.alpha * Tensor(-(logp.data + target_entropy))).mean()


def joint_policy_action(agents: Sequence[LocalAgent], o: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """B x U x 3 actions from every agent's current policy."""
    acts = [ag.policy.sample(Tensor(o[:, u]), noise[:, u], ag.squash_correction)[0].data
            for u, ag in enumerate(agents)]
    return np.stack(acts, axis=1)


def global_v_loss(glob: GlobalNets, agents: Sequence[LocalAgent], o: np.ndarray, z: np.ndarray,
                  noise: np.ndarray) -> Tensor:
    a_new = joint_policy_action(agents, o, noise)
    target = glob.q_g(Tensor(o), z, Tensor(a_new)).data.reshape(-1)
    return _half_mse(glob.v_g0(Tensor(o), z).reshape(-1), target)


def global_q_loss(glob: GlobalNets, o: np.ndarray, a: np.ndarray, r_team: np.ndarray, o2: np.ndarray,
                  z: np.ndarray, z2: np.ndarray, done: np.ndarray, gamma: float) -> Tensor:
    y = r_team + gamma * (1.0 - done) * glob.v_g1(Tensor(o2), z2).data.reshape(-1)
    return _half_mse(glob.q_g(Tensor(o), z, Tensor(a)).reshape(-1), y)


def act(policy: Policy, s: np.ndarray, mode: ActMode, rng: Optional[np.random.Generator], v_max: float) -> AgentAction:
    mean, log_std = policy.head(Tensor(np.asarray(s, dtype=float).reshape(1, -1)))
    if mode is ActMode.DETERMINISTIC:
        a = np.tanh(mean.data[0])
    else:
        a = np.tanh(mean.data[0] + np.exp(log_std.data[0]) * rng.standard_normal(ACTION_DIM))
    return AgentAction.from_squashed(a, v_max)


class Magrl:
    def __init__(self, cfg: WorldConfig, scenario: Scenario, seed: int):
        tc = cfg.train
        self.cfg = cfg
        self.tc = tc
        self.scenario = scenario
        self.seed = seed
        self.m = scenario.obs_dim
        init_rng = substream(seed, "init")
        self.agents = [LocalAgent(self.m, tc, init_rng) for _ in range(scenario.n_uavs)]
        self.glob: Optional[GlobalNets] = GlobalNets(self.m, tc, init_rng) if tc.variant.uses_global else None
        self.noise_rng = substream(seed, "policy-noise")
        self.eps = tc.effective_eps
        self.target_entropy = float(self.m) if tc.target_entropy is None else tc.target_entropy
        self.updates = 0

        self._opts = []
        for ag in self.agents:
            self._opts.append({
                "v0": make_optimizer(tc.optimizer, ag.v0.parameters(), tc.lr),
                "q0": make_optimizer(tc.optimizer, ag.q0.parameters(), tc.lr),
                "q1": make_optimizer(tc.optimizer, ag.q1.parameters(), tc.lr),
                "policy": make_optimizer(tc.optimizer, ag.policy.parameters(), tc.policy_lr),
                "alpha": make_optimizer("sgd", [ag.alpha], tc.alpha_lr),
            })
        if self.glob is not None:
            self._glob_opts = {
                "v_g0": make_optimizer(tc.optimizer, self.glob.v_g0.parameters(), tc.lr),
                "q_g": make_optimizer(tc.optimizer, self.glob.q_g.parameters(), tc.lr),
            }

    def nets(self) -> dict[str, Module]:
        out: dict[str, Module] = {f"agent{u}": ag for u, ag in enumerate(self.agents)}
        if self.glob is not None:
            out["global"] = self.glob
        return out

    def act(self, obs: np.ndarray, mode: ActMode = ActMode.STOCHASTIC) -> list[AgentAction]:
        return [act(ag.policy, obs[u], mode, self.noise_rng, self.cfg.env.v_max) for u, ag in enumerate(self.agents)]

    def _apply(self, name: str, loss: Tensor, params: list[Tensor], opt) -> float:
        value = loss.item()
        if not math.isfinite(value):
            logger_magrl.error("[DIVERGENCE] loss=%s value=%s update=%s", name, value, self.updates)
            raise DivergenceError(f"{name} loss is {value} at update {self.updates}")
        for p in params:
            p.zero_grad()
        loss.backward()
        clip_grad_norm(params, self.tc.grad_clip)
        opt.step()
        return value

    def team_reward(self, r: np.ndarray) -> np.ndarray:
        return r.sum(axis=1) if self.tc.global_reward == "sum" else r.mean(axis=1)

    def update(self, batch: Batch) -> dict[str, float]:
        """One gradient step for every network, local agents first, then the global trio."""
        tc = self.tc
        n = len(batch)
        losses: dict[str, float] = {}
        try:
            q_global = None
            if self.eps < 1.0:
                q_global = self.glob.q_g(Tensor(batch.o), batch.z, Tensor(batch.a)).data.reshape(-1)
            for u, (ag, opts) in enumerate(zip(self.agents, self._opts)):
                s, a, r, s2 = batch.o[:, u], batch.a[:, u], batch.r[:, u], batch.o2[:, u]
                noise = self.noise_rng.standard_normal((n, ACTION_DIM))
                losses[f"v{u}"] = self._apply("v", local_v_loss(ag, s, noise), ag.v0.parameters(), opts["v0"])
                for j, key in ((0, "q0"), (1, "q1")):
                    loss = local_q_loss(ag, j, s, a, r, s2, batch.done, tc.gamma, self.eps, q_global)
                    net = ag.q0 if j == 0 else ag.q1
                    losses[f"{key}_{u}"] = self._apply(key, loss, net.parameters(), opts[key])
                losses[f"pi{u}"] = self._apply("policy", policy_loss(ag, s, noise), ag.policy.parameters(), opts["policy"])
                losses[f"alpha{u}"] = self._apply("alpha", temperature_loss(ag, s, noise, self.target_entropy),
                                                  [ag.alpha], opts["alpha"])
                ag.alpha.data = np.clip(ag.alpha.data, tc.alpha_min, tc.alpha_max)
                soft_update(ag.v1, ag.v0, tc.tau)

            if self.glob is not None:
                g = self.glob
                noise = self.noise_rng.standard_normal((n, len(self.agents), ACTION_DIM))
                losses["v_g"] = self._apply("v_g0", global_v_loss(g, self.agents, batch.o, batch.z, noise),
                                            g.v_g0.parameters(), self._glob_opts["v_g0"])
                loss = global_q_loss(g, batch.o, batch.a, self.team_reward(batch.r), batch.o2,
                                     batch.z, batch.z2, batch.done, tc.gamma)
                losses["q_g"] = self._apply("q_g", loss, g.q_g.parameters(), self._glob_opts["q_g"])
                soft_update(g.v_g1, g.v_g0, tc.tau)
        except NonFiniteError as exc:
            logger_magrl.error("[DIVERGENCE] update=%s %s", self.updates, exc)
            raise DivergenceError(f"non-finite value at update {self.updates}: {exc}") from exc
        self.updates += 1
        return losses

    def save(self, path: Path | str, episode: int, scenario_name: str = "") -> Path:
        meta = {
            "variant": self.tc.variant.value,
            "n_uavs": self.scenario.n_uavs,
            "n_devices": self.scenario.n_devices,
            "obs_dim": self.m,
            "hidden_width": self.tc.hidden_width,
            "global_hidden_width": self.tc.global_hidden_width,
            "seed": self.seed,
            "episode": episode,
            "scenario": scenario_name,
        }
        return save_checkpoint(path, self.nets(), meta)

    @classmethod
    def from_checkpoint(cls, path: Path | str, cfg: WorldConfig, scenario: Scenario) -> "Magrl":
        arrays, meta = load_checkpoint(path)
        if meta.get("n_uavs") != scenario.n_uavs or meta.get("obs_dim") != scenario.obs_dim:
            raise CheckpointMismatchError(
                f"checkpoint built for U={meta.get('n_uavs')} M={meta.get('obs_dim')}, "
                f"scenario has U={scenario.n_uavs} M={scenario.obs_dim}")
        cfg = cfg.with_train(variant=meta["variant"], hidden_width=meta["hidden_width"],
                             global_hidden_width=meta["global_hidden_width"])
        trainer = cls(cfg, scenario, int(meta["seed"]))
        restore(trainer.nets(), arrays)
        return trainer


@dataclass
class EpisodeStats:
    episode: int
    r_ac: float
    h_total: int
    pen_distance: int
    pen_area: int
    wall_time: float

    def row(self) -> dict:
        return {f: getattr(self, f) for f in METRICS_FIELDS}


@dataclass
class TrainResult:
    trainer: Magrl
    history: list[EpisodeStats] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def train(cfg: WorldConfig, scenario: Scenario, seed: int, out_dir: Path | str | None = None,
          episodes: Optional[int] = None, checkpoint_every: int = 0, scenario_name: str = "") -> TrainResult:
    """Run the full training loop; one update per slot once the buffer holds a minibatch."""
    tc = cfg.train
    episodes = tc.episodes if episodes is None else episodes
    trainer = Magrl(cfg, scenario, seed)
    env = WetEnv(cfg, scenario, uses_hoe=tc.variant.uses_hoe)
    buffer = ReplayBuffer(tc.buffer_size, scenario.n_uavs, scenario.obs_dim, substream(seed, "replay"))
    out = Path(out_dir) if out_dir is not None else None
    metrics = CsvLog(out / "metrics.csv", METRICS_FIELDS, truncate=True) if out is not None else None
    result = TrainResult(trainer=trainer)
    logger_magrl.info("[INIT] variant=%s U=%s I=%s eps=%s episodes=%s seed=%s", tc.variant.value,
                      scenario.n_uavs, scenario.n_devices, trainer.eps, episodes, seed)

    for ep in range(episodes):
        t0 = time.monotonic()
        obs = env.reset(seed, ep)
        z = env.similarity().z
        total = 0.0
        while not env.state.done:
            acts = trainer.act(obs, ActMode.STOCHASTIC)
            outcome = env.step(acts)
            z2 = env.similarity().z
            buffer.push(obs, np.stack([a.squashed for a in acts]), outcome.rewards, outcome.obs_next,
                        z, z2, outcome.done)
            if len(buffer) >= tc.batch_size:
                trainer.update(buffer.sample(tc.batch_size))
            obs, z = outcome.obs_next, z2
            total += float(outcome.rewards.sum())
        stats = EpisodeStats(
            episode=ep,
            r_ac=total / scenario.n_uavs,
            h_total=env.h_total(),
            pen_distance=int(env.pen_counts[0]),
            pen_area=int(env.pen_counts[1]),
            wall_time=round(time.monotonic() - t0, 4),
        )
        result.history.append(stats)
        if metrics is not None:
            metrics.append(stats.row())
        logger_magrl.info("[EPISODE] ep=%s r_ac=%.6f h_total=%s pen=%s/%s updates=%s", ep, stats.r_ac,
                          stats.h_total, stats.pen_distance, stats.pen_area, trainer.updates)
        if out is not None and checkpoint_every > 0 and (ep + 1) % checkpoint_every == 0:
            trainer.save(out / f"checkpoint_ep{ep + 1}.npz", ep + 1, scenario_name)

    if out is not None:
        result.checkpoint = trainer.save(out / "checkpoint.npz", episodes, scenario_name)
    return result


def rollout(trainer: Magrl, cfg: WorldConfig, scenario: Scenario, seed: int,
            scenario_name: str = "") -> tuple[dict, WetEnv]:
    """Deterministic episode with the local policies only; returns the report and the recorded env."""
    env = WetEnv(cfg, scenario, uses_hoe=trainer.tc.variant.uses_hoe, record=True)
    obs = env.reset(seed, 0)
    total = 0.0
    while not env.state.done:
        outcome = env.step(trainer.act(obs, ActMode.DETERMINISTIC))
        obs = outcome.obs_next
        total += float(outcome.rewards.sum())
    st = env.state
    devices = [
        {"device": i, "final_battery": float(b.level), "threshold": float(b.threshold),
         "reached": bool(b.level >= b.threshold), "hoe_sum": int(st.hoe_sums[i])}
        for i, b in enumerate(st.dev_batt)
    ]
    uavs = [
        {"uav": u, "residual": float(b.level), "reserve": float(b.reserve), "ok": bool(b.level >= b.reserve)}
        for u, b in enumerate(st.uav_batt)
    ]
    report = {
        "scenario": scenario_name,
        "variant": trainer.tc.variant.value,
        "seed": seed,
        "r_ac": total / scenario.n_uavs,
        "h_total": env.h_total(),
        "devices": devices,
        "uavs": uavs,
        "penalties": {"distance": int(env.pen_counts[0]), "area": int(env.pen_counts[1])},
        "success": all(d["reached"] for d in devices) and all(u["ok"] for u in uavs),
    }
    logger_magrl.info("[EVAL] seed=%s h_total=%s success=%s residual=%s", seed, report["h_total"],
                      report["success"], [round(u["residual"], 3) for u in uavs])
    return report, env


def evaluate(checkpoint: Path | str, cfg: WorldConfig, scenario: Scenario, seed: int,
             scenario_name: str = "") -> tuple[dict, WetEnv]:
    trainer = Magrl.from_checkpoint(checkpoint, cfg, scenario)
    return rollout(trainer, trainer.cfg, scenario, seed, scenario_name)


def write_report(report: dict, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n")
    return path


def variant_config(cfg: WorldConfig, variant: Variant | str) -> WorldConfig:
    return cfg.with_train(variant=Variant(variant))
