"""MAPPO trainer: shared decentralized actor, centralized critic, PPO-clip.

The hybrid action factorizes as an independent Gaussian (pre-squash planar
move) times a Bernoulli (radar mode). Moves are squashed by tanh, scaled to
the mobility box and radially clamped, so every emitted action satisfies the
per-step displacement limit by construction. All agents share one policy and
one critic; observations and the critic's global state carry an agent
one-hot so the shared networks can specialize per agent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .crlb import RadarFactors, tracking_effect
from .env import TrackingEnv, observation_length
from .errors import NonFiniteLoss
from .geometry import clamp_norm
from .scenario import ActionVec, ScenarioConfig

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TrainConfig:
    lr: float = 5e-5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_update: int = 4
    minibatch: int = 256
    rollout_len: int = 1          # episodes collected per update
    total_episodes: int = 1000
    seed: int = 0
    hidden_layers: int = 5
    hidden_units: int = 256
    obs_scale: float = 5000.0     # position entries are divided by this before the nets
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.obs_scale <= 0:
            raise ValueError("obs_scale must be positive")


def _mlp(in_dim: int, out_dim: int, hidden_layers: int, hidden_units: int) -> nn.Sequential:
    layers: List[nn.Module] = []
    d = in_dim
    for _ in range(hidden_layers):
        layers += [nn.Linear(d, hidden_units), nn.Tanh()]
        d = hidden_units
    layers.append(nn.Linear(d, out_dim))
    return nn.Sequential(*layers)


def _orthogonal_(weight: torch.Tensor, gain: float, rng: np.random.Generator) -> None:
    rows, cols = weight.shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    with torch.no_grad():
        weight.copy_(torch.from_numpy(np.ascontiguousarray(q[:rows, :cols])) * gain)


def _init_mlp(net: nn.Sequential, head_gain: float, rng: np.random.Generator) -> None:
    linears = [m for m in net if isinstance(m, nn.Linear)]
    for i, lin in enumerate(linears):
        gain = head_gain if i == len(linears) - 1 else math.sqrt(2.0)
        _orthogonal_(lin.weight, gain, rng)
        with torch.no_grad():
            lin.bias.zero_()


class PolicyNet(nn.Module):
    """Actor: tanh MLP trunk with move-mean, move-log-std and mode-logit heads."""

    def __init__(self, obs_dim: int, hidden_layers: int = 5, hidden_units: int = 256,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.obs_dim = obs_dim
        self.net = _mlp(obs_dim, 5, hidden_layers, hidden_units)
        self.double()
        if rng is not None:
            _init_mlp(self.net, 0.01, rng)

    def forward(self, obs: torch.Tensor):
        out = self.net(obs)
        mean = out[..., 0:2]
        log_std = torch.clamp(out[..., 2:4], LOG_STD_MIN, LOG_STD_MAX)
        logit = out[..., 4]
        return mean, log_std, logit


class ValueNet(nn.Module):
    """Centralized critic: global state (plus agent one-hot) to a scalar value."""

    def __init__(self, state_dim: int, hidden_layers: int = 5, hidden_units: int = 256,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.state_dim = state_dim
        self.net = _mlp(state_dim, 1, hidden_layers, hidden_units)
        self.double()
        if rng is not None:
            _init_mlp(self.net, 1.0, rng)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        return self.net(state).squeeze(-1)


def scale_observation(obs: np.ndarray, n_uav: int, m_target: int, scale: float) -> np.ndarray:
    """Divide the position entries by ``scale``; flags and mode stay as-is."""
    out = np.array(obs, dtype=np.float64)
    n_pos = 2 * (n_uav - 1) + 2 * m_target
    out[:n_pos] /= scale
    return out


def scale_global_state(state: np.ndarray, scale: float) -> np.ndarray:
    """Global state is (x, y, flag) triples; scale the coordinate entries."""
    out = np.array(state, dtype=np.float64)
    out = out.reshape(-1, 3)
    out[:, :2] /= scale
    return out.reshape(-1)


def one_hot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def move_log_prob(
    mean: torch.Tensor, log_std: torch.Tensor, u: torch.Tensor, d0: float
) -> torch.Tensor:
    """Log-density of the squashed move d0*tanh(u), u ~ N(mean, exp(log_std)^2)."""
    var = torch.exp(2.0 * log_std)
    gauss = -0.5 * ((u - mean) ** 2 / var + 2.0 * log_std + _LOG_2PI)
    # change of variables through a = d0 * tanh(u)
    squash = torch.log1p(-torch.tanh(u) ** 2 + 1e-12) + math.log(d0)
    return (gauss - squash).sum(-1)


def mode_log_prob(logit: torch.Tensor, mode: torch.Tensor) -> torch.Tensor:
    return -nn.functional.binary_cross_entropy_with_logits(logit, mode, reduction="none")


@dataclass
class ActSample:
    action: ActionVec
    u: np.ndarray          # pre-squash Gaussian sample, stored for log-prob recompute
    log_prob: float


def _finish_action(u: np.ndarray, mode: int, d0: float) -> ActionVec:
    move = clamp_norm(d0 * np.tanh(u), d0)
    return ActionVec(float(move[0]), float(move[1]), int(mode))


def act(
    policy: PolicyNet, obs: np.ndarray, d0: float, stochastic: bool, seed
) -> ActSample:
    """Sample (or take the mode of) the hybrid action for one observation."""
    sample = act_batch(policy, obs[None, :], d0, stochastic, seed)
    return sample[0]


def act_batch(
    policy: PolicyNet, obs: np.ndarray, d0: float, stochastic: bool, seed
) -> List[ActSample]:
    rng = np.random.default_rng(seed)
    obs_t = torch.as_tensor(np.asarray(obs, dtype=np.float64))
    with torch.no_grad():
        mean, log_std, logit = policy(obs_t)
    mean_np = mean.numpy()
    std_np = np.exp(log_std.numpy())
    if stochastic:
        u = mean_np + std_np * rng.normal(size=mean_np.shape)
        p_am = 1.0 / (1.0 + np.exp(-logit.numpy()))
        modes = (rng.random(size=p_am.shape) < p_am).astype(int)
    else:
        u = mean_np
        modes = (logit.numpy() >= 0.0).astype(int)
    u_t = torch.as_tensor(u)
    with torch.no_grad():
        logp = move_log_prob(mean, log_std, u_t, d0) + mode_log_prob(
            logit, torch.as_tensor(modes, dtype=torch.float64)
        )
    return [
        ActSample(_finish_action(u[i], int(modes[i]), d0), u[i].copy(), float(logp[i]))
        for i in range(u.shape[0])
    ]


def random_policy(obs: np.ndarray, d0: float, seed) -> ActionVec:
    """Baseline: uniform direction, uniform magnitude in [0, d0], fair-coin mode."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0.0, 2.0 * np.pi)
    mag = rng.uniform(0.0, d0)
    mode = int(rng.random() < 0.5)
    return ActionVec(float(mag * np.cos(ang)), float(mag * np.sin(ang)), mode)


class RolloutBuffer:
    """On-policy storage for whole episodes, [step, agent] major."""

    def __init__(self):
        self.obs: List[np.ndarray] = []        # policy inputs, (n_agents, obs_dim)
        self.states: List[np.ndarray] = []     # critic inputs, (n_agents, state_dim)
        self.u: List[np.ndarray] = []          # (n_agents, 2)
        self.modes: List[np.ndarray] = []      # (n_agents,)
        self.log_probs: List[np.ndarray] = []
        self.rewards: List[np.ndarray] = []
        self.values: List[np.ndarray] = []
        self.dones: List[float] = []

    def add(self, obs, states, u, modes, log_probs, rewards, values, done):
        self.obs.append(np.asarray(obs))
        self.states.append(np.asarray(states))
        self.u.append(np.asarray(u))
        self.modes.append(np.asarray(modes, dtype=np.float64))
        self.log_probs.append(np.asarray(log_probs))
        self.rewards.append(np.asarray(rewards))
        self.values.append(np.asarray(values))
        self.dones.append(1.0 if done else 0.0)

    def __len__(self):
        return len(self.obs)

    def arrays(self):
        return {
            "obs": np.stack(self.obs),
            "states": np.stack(self.states),
            "u": np.stack(self.u),
            "modes": np.stack(self.modes),
            "log_probs": np.stack(self.log_probs),
            "rewards": np.stack(self.rewards),
            "values": np.stack(self.values),
            "dones": np.asarray(self.dones),
        }


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    last_values: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates over [T, n_agents] reward/value arrays.

    ``dones`` marks episode boundaries; the value after a terminal step is 0
    (or ``last_values`` for a truncated rollout). Returns raw advantages and
    the value targets advantages + values; normalization happens at update
    time.
    """
    t_len, n_agents = rewards.shape
    adv = np.zeros((t_len, n_agents))
    next_val = np.zeros(n_agents) if last_values is None else np.asarray(last_values)
    next_adv = np.zeros(n_agents)
    for t in reversed(range(t_len)):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_val * mask - values[t]
        next_adv = delta + gamma * lam * next_adv * mask
        adv[t] = next_adv
        next_val = values[t]
    return adv, adv + values


def _clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor, clip_eps: float) -> torch.Tensor:
    """PPO-clip objective per sample.

    The clipped branch only passes gradient while the ratio is strictly
    inside the trust region, so clip_eps = 0 freezes the policy entirely.
    """
    inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    clipped_ratio = torch.where(
        inside, ratio, torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps).detach()
    )
    unclipped = ratio * adv
    clipped = clipped_ratio * adv
    return torch.where(clipped <= unclipped, clipped, unclipped)


def evaluate_actions(
    policy: PolicyNet,
    obs: torch.Tensor,
    u: torch.Tensor,
    modes: torch.Tensor,
    d0: float,
):
    """Log-probs and entropy of stored actions under the current parameters."""
    mean, log_std, logit = policy(obs)
    logp = move_log_prob(mean, log_std, u, d0) + mode_log_prob(logit, modes)
    gauss_entropy = (log_std + 0.5 * (1.0 + _LOG_2PI)).sum(-1)
    p = torch.sigmoid(logit)
    eps = 1e-12
    bern_entropy = -(p * torch.log(p + eps) + (1 - p) * torch.log(1 - p + eps))
    return logp, gauss_entropy + bern_entropy


def ppo_losses(
    policy: PolicyNet,
    value: ValueNet,
    batch: dict,
    cfg: TrainConfig,
    d0: float,
):
    """Clipped policy loss, value MSE and mean entropy for one minibatch."""
    logp, entropy = evaluate_actions(
        policy, batch["obs"], batch["u"], batch["modes"], d0
    )
    ratio = torch.exp(logp - batch["log_probs"])
    policy_loss = -_clipped_surrogate(ratio, batch["advantages"], cfg.clip_eps).mean()
    values = value(batch["states"])
    value_loss = ((values - batch["returns"]) ** 2).mean()
    return policy_loss, value_loss, entropy.mean()


def ppo_update(
    policy: PolicyNet,
    value: ValueNet,
    optimizer: torch.optim.Optimizer,
    data: dict,
    cfg: TrainConfig,
    d0: float,
    rng: np.random.Generator,
) -> dict:
    """Run the clipped-surrogate epochs over one rollout's data.

    A non-finite loss aborts the whole update, restores the pre-update
    parameters and raises NonFiniteLoss.
    """
    adv, returns = gae(
        data["rewards"], data["values"], data["dones"], cfg.gamma, cfg.gae_lambda
    )
    if not (np.all(np.isfinite(adv)) and np.all(np.isfinite(returns))):
        raise NonFiniteLoss("advantages/returns are non-finite; rollout rejected")
    flat = {
        "obs": data["obs"].reshape(-1, data["obs"].shape[-1]),
        "states": data["states"].reshape(-1, data["states"].shape[-1]),
        "u": data["u"].reshape(-1, 2),
        "modes": data["modes"].reshape(-1),
        "log_probs": data["log_probs"].reshape(-1),
        "advantages": adv.reshape(-1),
        "returns": returns.reshape(-1),
    }
    a = flat["advantages"]
    flat["advantages"] = (a - a.mean()) / (a.std() + 1e-8)
    tensors = {k: torch.as_tensor(v) for k, v in flat.items()}

    snapshot = (
        {k: v.clone() for k, v in policy.state_dict().items()},
        {k: v.clone() for k, v in value.state_dict().items()},
    )
    n = tensors["obs"].shape[0]
    mb = n if cfg.minibatch <= 0 else min(cfg.minibatch, n)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "n_minibatches": 0}
    try:
        for _ in range(cfg.epochs_per_update):
            order = rng.permutation(n)
            for start in range(0, n, mb):
                idx = torch.as_tensor(order[start : start + mb])
                batch = {k: v[idx] for k, v in tensors.items()}
                policy_loss, value_loss, entropy = ppo_losses(policy, value, batch, cfg, d0)
                loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"loss became non-finite: {loss.item()}")
                optimizer.zero_grad()
                loss.backward()
                if cfg.max_grad_norm > 0:
                    nn.utils.clip_grad_norm_(
                        list(policy.parameters()) + list(value.parameters()),
                        cfg.max_grad_norm,
                    )
                optimizer.step()
                stats["policy_loss"] += float(policy_loss.detach())
                stats["value_loss"] += float(value_loss.detach())
                stats["entropy"] += float(entropy.detach())
                stats["n_minibatches"] += 1
    except NonFiniteLoss:
        policy.load_state_dict(snapshot[0])
        value.load_state_dict(snapshot[1])
        raise
    for p in list(policy.parameters()) + list(value.parameters()):
        if not torch.all(torch.isfinite(p)):
            policy.load_state_dict(snapshot[0])
            value.load_state_dict(snapshot[1])
            raise NonFiniteLoss("parameters became non-finite after update")
    for k in ("policy_loss", "value_loss", "entropy"):
        stats[k] /= max(stats["n_minibatches"], 1)
    return stats


@dataclass
class EpisodeMetrics:
    episode: int
    mean_reward: float
    te: float
    violations_c7: int
    violations_c8: int
    repairs_invoked: int
    predicted_c8: int = 0
    fallbacks: int = 0

    def csv_row(self) -> dict:
        return {
            "episode": self.episode,
            "mean_reward": self.mean_reward,
            "TE": self.te,
            "violations_c7": self.violations_c7,
            "violations_c8": self.violations_c8,
            "repairs_invoked": self.repairs_invoked,
        }


def _policy_inputs(env: TrackingEnv, obs_list, cfg: TrainConfig) -> np.ndarray:
    n = env.n_agents
    rows = []
    for i, obs in enumerate(obs_list):
        scaled = scale_observation(obs, env.cfg.n_uav, env.cfg.m_target, cfg.obs_scale)
        rows.append(np.concatenate([scaled, one_hot(i, n)]))
    return np.stack(rows)


def _critic_inputs(env: TrackingEnv, cfg: TrainConfig) -> np.ndarray:
    base = scale_global_state(env.state_vector(), cfg.obs_scale)
    n = env.n_agents
    return np.stack([np.concatenate([base, one_hot(i, n)]) for i in range(n)])


def policy_input_dim(scenario: ScenarioConfig) -> int:
    return observation_length(scenario.n_uav, scenario.m_target) + scenario.n_uav


def critic_input_dim(scenario: ScenarioConfig) -> int:
    return 3 * scenario.n_uav + 3 * scenario.m_target + scenario.n_uav


def run_episode(
    env: TrackingEnv,
    seed,
    action_fn: Callable[[List[np.ndarray], np.random.Generator], List[ActionVec]],
    episode_index: int = 0,
) -> EpisodeMetrics:
    """Roll one full episode with an arbitrary controller; aggregate metrics."""
    rng = np.random.default_rng(seed)
    obs = env.reset(rng)
    lb_series: List[float] = []
    totals: List[float] = []
    c7 = c8 = repairs = predicted = fallbacks = 0
    done = False
    while not done:
        actions = action_fn(obs, rng)
        obs, breakdowns, done, info = env.step(actions)
        lb_series.append(info.lb.value)
        totals.extend(b.total for b in breakdowns)
        c7 += len(info.violations.pairs)
        c8 += len(info.violations.standoff)
        repairs += info.repairs_invoked
        predicted += info.predicted_c8
        fallbacks += info.fallbacks
    return EpisodeMetrics(
        episode=episode_index,
        mean_reward=float(np.mean(totals)),
        te=tracking_effect(lb_series),
        violations_c7=c7,
        violations_c8=c8,
        repairs_invoked=repairs,
        predicted_c8=predicted,
        fallbacks=fallbacks,
    )


def policy_action_fn(policy: PolicyNet, env: TrackingEnv, cfg: TrainConfig, stochastic: bool):
    def fn(obs_list, rng):
        inputs = _policy_inputs(env, obs_list, cfg)
        samples = act_batch(policy, inputs, env.cfg.d0, stochastic, rng)
        return [s.action for s in samples]

    return fn


def random_action_fn(env: TrackingEnv):
    def fn(obs_list, rng):
        return [random_policy(o, env.cfg.d0, rng) for o in obs_list]

    return fn


@dataclass
class Trainer:
    """Owns the shared actor/critic pair and the rollout-update loop."""

    scenario: ScenarioConfig
    train_cfg: TrainConfig
    factors: RadarFactors = field(default_factory=RadarFactors)
    sa_cfg: Optional[object] = None
    tracker_cfg: Optional[object] = None
    repair_enabled: bool = True

    def __post_init__(self):
        self.rng = np.random.default_rng(self.train_cfg.seed)
        self.policy = PolicyNet(
            policy_input_dim(self.scenario),
            self.train_cfg.hidden_layers,
            self.train_cfg.hidden_units,
            rng=self.rng,
        )
        self.value = ValueNet(
            critic_input_dim(self.scenario),
            self.train_cfg.hidden_layers,
            self.train_cfg.hidden_units,
            rng=self.rng,
        )
        self.optimizer = torch.optim.Adam(
            list(self.policy.parameters()) + list(self.value.parameters()),
            lr=self.train_cfg.lr,
        )

    def make_env(self, repair_enabled: Optional[bool] = None) -> TrackingEnv:
        return TrackingEnv(
            self.scenario,
            factors=self.factors,
            tracker_cfg=self.tracker_cfg,
            sa_cfg=self.sa_cfg,
            repair_enabled=self.repair_enabled if repair_enabled is None else repair_enabled,
        )

    def train(self, progress: Optional[Callable[[EpisodeMetrics], None]] = None) -> List[EpisodeMetrics]:
        """Run total_episodes of collect+update; returns per-episode metrics."""
        env = self.make_env()
        cfg = self.train_cfg
        metrics: List[EpisodeMetrics] = []
        buffer = RolloutBuffer()
        episodes_in_buffer = 0
        for episode in range(cfg.total_episodes):
            ep = self._collect_episode(env, buffer, episode)
            episodes_in_buffer += 1
            metrics.append(ep)
            if progress is not None:
                progress(ep)
            if episodes_in_buffer >= cfg.rollout_len:
                ppo_update(
                    self.policy, self.value, self.optimizer, buffer.arrays(), cfg,
                    env.cfg.d0, self.rng,
                )
                buffer = RolloutBuffer()
                episodes_in_buffer = 0
        return metrics

    def _collect_episode(self, env: TrackingEnv, buffer: RolloutBuffer, episode: int) -> EpisodeMetrics:
        cfg = self.train_cfg
        obs = env.reset(self.rng)
        lb_series: List[float] = []
        totals: List[float] = []
        c7 = c8 = repairs = predicted = fallbacks = 0
        done = False
        while not done:
            inputs = _policy_inputs(env, obs, cfg)
            states = _critic_inputs(env, cfg)
            samples = act_batch(self.policy, inputs, env.cfg.d0, True, self.rng)
            with torch.no_grad():
                values = self.value(torch.as_tensor(states)).numpy()
            obs, breakdowns, done, info = env.step([s.action for s in samples])
            rewards = np.array([b.total for b in breakdowns])
            buffer.add(
                inputs,
                states,
                np.stack([s.u for s in samples]),
                np.array([s.action.mode for s in samples]),
                np.array([s.log_prob for s in samples]),
                rewards,
                values,
                done,
            )
            lb_series.append(info.lb.value)
            totals.extend(rewards.tolist())
            c7 += len(info.violations.pairs)
            c8 += len(info.violations.standoff)
            repairs += info.repairs_invoked
            predicted += info.predicted_c8
            fallbacks += info.fallbacks
        return EpisodeMetrics(
            episode=episode,
            mean_reward=float(np.mean(totals)),
            te=tracking_effect(lb_series),
            violations_c7=c7,
            violations_c8=c8,
            repairs_invoked=repairs,
            predicted_c8=predicted,
            fallbacks=fallbacks,
        )

    def evaluate(
        self,
        episodes: int,
        seed,
        stochastic: bool = False,
        repair_enabled: Optional[bool] = None,
    ) -> List[EpisodeMetrics]:
        env = self.make_env(repair_enabled=repair_enabled)
        fn = policy_action_fn(self.policy, env, self.train_cfg, stochastic)
        rng = np.random.default_rng(seed)
        return [
            run_episode(env, rng, fn, episode_index=i) for i in range(episodes)
        ]


def checkpoint_dict(trainer: Trainer, config_hash: str) -> dict:
    return {
        "version": 1,
        "config_hash": config_hash,
        "policy_state": trainer.policy.state_dict(),
        "value_state": trainer.value.state_dict(),
        "train_config": asdict(trainer.train_cfg),
        "policy_input_dim": policy_input_dim(trainer.scenario),
        "critic_input_dim": critic_input_dim(trainer.scenario),
        "n_agents": trainer.scenario.n_uav,
    }


def save_checkpoint(trainer: Trainer, path, config_hash: str) -> None:
    torch.save(checkpoint_dict(trainer, config_hash), path)


def load_policy_value(path, expected_hash: Optional[str] = None):
    """Load nets from a checkpoint; verify the config hash when given."""
    from .errors import HashMismatch

    blob = torch.load(path, weights_only=False)
    if expected_hash is not None and blob["config_hash"] != expected_hash:
        raise HashMismatch(
            f"checkpoint built for config {blob['config_hash']}, got {expected_hash}"
        )
    tc = blob["train_config"]
    policy = PolicyNet(blob["policy_input_dim"], tc["hidden_layers"], tc["hidden_units"])
    value = ValueNet(blob["critic_input_dim"], tc["hidden_layers"], tc["hidden_units"])
    policy.load_state_dict(blob["policy_state"])
    value.load_state_dict(blob["value_state"])
    return policy, value, TrainConfig(**tc)
