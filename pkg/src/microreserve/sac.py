"""Soft actor-critic for the bounded continuous reserving action.

Squashed-Gaussian actor (action = ln K * tanh(u)), twin critics with
Polyak-averaged targets, a uniform replay buffer, and optional automatic
entropy-temperature tuning. Training is a single chronological pass over
the calendar rollout: every environment transition is appended to the
buffer and followed by a fixed number of gradient updates, so the agent
learns while claims are still developing.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .claims import Dataset
from .env import (
    EnvConfig,
    Transition,
    ZeroPolicy,
    build_state,
    currency_mask,
    mean_training_ocl,
    rollout_calendar,
    state_dim,
)
from .errors import ConfigError, DataError, NumericFault
from .nets import AdamState, FeatureScaler, Mlp, adam_step, backward, forward, init_mlp, load_mlp, save_mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class SacConfig:
    replay_capacity: int | None = None  # None keeps every transition
    batch_size: int = 128
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    temp_lr: float = 3e-4
    rho: float = 0.995  # share of the old target kept per update
    entropy_target: float = -1.0
    auto_temp: bool = True
    init_temp: float = 0.2
    updates_per_step: int = 1
    warmup_steps: int = 1000
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < 1.0):
            raise ConfigError("rho must lie strictly inside (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.replay_capacity is not None and self.replay_capacity < 1:
            raise ConfigError("replay_capacity must be >= 1")
        if self.updates_per_step < 0:
            raise ConfigError("updates_per_step must be >= 0")
        if self.init_temp <= 0:
            raise ConfigError("init_temp must be positive")


class ReplayBuffer:
    """Ring buffer over (state, action, reward, next_state, done)."""

    def __init__(self, capacity: int | None, dim: int):
        self.capacity = capacity
        self.dim = dim
        self.states: list[np.ndarray] = []
        self.actions: list[float] = []
        self.rewards: list[float] = []
        self.next_states: list[np.ndarray] = []
        self.dones: list[float] = []
        self.cursor = 0

    def __len__(self) -> int:
        return len(self.states)

    def add(self, s, a, r, s_next, done) -> None:
        s_next = np.zeros(self.dim) if s_next is None else s_next
        row = (s, float(a), float(r), s_next, 1.0 if done else 0.0)
        if self.capacity is None or len(self.states) < self.capacity:
            self.states.append(row[0])
            self.actions.append(row[1])
            self.rewards.append(row[2])
            self.next_states.append(row[3])
            self.dones.append(row[4])
        else:
            i = self.cursor % self.capacity
            self.states[i] = row[0]
            self.actions[i] = row[1]
            self.rewards[i] = row[2]
            self.next_states[i] = row[3]
            self.dones[i] = row[4]
        self.cursor += 1

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(len(self.states), size=batch_size, replace=False)
        return (
            np.stack([self.states[i] for i in idx]),
            np.array([self.actions[i] for i in idx]),
            np.array([self.rewards[i] for i in idx]),
            np.stack([self.next_states[i] for i in idx]),
            np.array([self.dones[i] for i in idx]),
        )


def _log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def gaussian_tanh_log_prob(mean, log_std, u, ln_k: float):
    """Log-density of a = ln_k * tanh(u) under u ~ N(mean, exp(log_std))."""
    std = np.exp(log_std)
    base = -0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * math.log(2.0 * math.pi)
    return base - _log1m_tanh_sq(u) - math.log(ln_k)


def sample_action(
    actor: Mlp,
    state_scaled: np.ndarray,
    ln_k: float,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
):
    """Draw (action, log_prob) from the squashed-Gaussian head.

    Deterministic mode returns ln_k * tanh(mean) with log_prob None.
    """
    out, _ = forward(actor, state_scaled)
    single = out.ndim == 1
    out2 = out.reshape(1, -1) if single else out
    mean = out2[:, 0]
    log_std = np.clip(out2[:, 1], LOG_STD_MIN, LOG_STD_MAX)
    if not np.all(np.isfinite(mean)):
        raise NumericFault("actor produced non-finite mean")
    if deterministic:
        a = ln_k * np.tanh(mean)
        return (float(a[0]) if single else a), None
    u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    a = ln_k * np.tanh(u)
    logp = gaussian_tanh_log_prob(mean, log_std, u, ln_k)
    if single:
        return float(a[0]), float(logp[0])
    return a, logp


class SacAgent:
    """Owns the networks, buffer and generators for one training run."""

    def __init__(self, env_cfg: EnvConfig, cfg: SacConfig, scaler: FeatureScaler):
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.scaler = scaler
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 77]))
        dim = state_dim(env_cfg.state_profile, env_cfg.n_past)
        self.dim = dim
        hid = list(cfg.hidden)
        acts = ["relu"] * len(hid) + ["identity"]
        init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
        self.actor = init_mlp([dim] + hid + [2], acts, init_rng)
        self.critic1 = init_mlp([dim + 1] + hid + [1], acts, init_rng)
        self.critic2 = init_mlp([dim + 1] + hid + [1], acts, init_rng)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.actor_opt = AdamState.for_params(self.actor.parameters(), cfg.actor_lr)
        self.critic1_opt = AdamState.for_params(self.critic1.parameters(), cfg.critic_lr)
        self.critic2_opt = AdamState.for_params(self.critic2.parameters(), cfg.critic_lr)
        self._log_temp_arr = np.array([math.log(cfg.init_temp)])
        self.temp_opt = AdamState.for_params([self._log_temp_arr], cfg.temp_lr)
        self.buffer = ReplayBuffer(cfg.replay_capacity, dim)
        self.env_steps = 0
        self.n_updates = 0
        self.training_log: list[dict] = []

    @property
    def temperature(self) -> float:
        return float(np.exp(self._log_temp_arr[0]))

    # -- policy interface used by rollout_calendar ---------------------------

    def act(self, state: np.ndarray, explore: bool = False, **_) -> float:
        scaled = self.scaler.transform(state)
        if explore:
            self.env_steps += 1
            if self.env_steps <= self.cfg.warmup_steps:
                return float(self.rng.uniform(-self.env_cfg.ln_k, self.env_cfg.ln_k))
            a, _ = sample_action(self.actor, scaled, self.env_cfg.ln_k, rng=self.rng)
            return a
        a, _ = sample_action(self.actor, scaled, self.env_cfg.ln_k, deterministic=True)
        return a

    def observe(self, txn: Transition) -> None:
        """Buffer a finished transition, then run the scheduled updates."""
        if txn.next_state is None and not txn.done:
            return
        self.buffer.add(
            self.scaler.transform(txn.state),
            txn.action / self.env_cfg.ln_k,
            txn.reward,
            None if txn.next_state is None else self.scaler.transform(txn.next_state),
            txn.done,
        )
        if len(self.buffer) < self.cfg.batch_size or self.env_steps <= self.cfg.warmup_steps:
            return
        for _ in range(self.cfg.updates_per_step):
            self.update()

    # -- learning steps -------------------------------------------------------

    def critic_targets(self, rewards, next_states, dones, gamma: float):
        """Bellman targets y = r + gamma (1-done)(min Q' - temp * log pi)."""
        out, _ = forward(self.actor, next_states)
        mean = out[:, 0]
        log_std = np.clip(out[:, 1], LOG_STD_MIN, LOG_STD_MAX)
        u = mean + np.exp(log_std) * self.rng.standard_normal(mean.shape)
        a_norm = np.tanh(u)
        logp = gaussian_tanh_log_prob(mean, log_std, u, self.env_cfg.ln_k)
        x = np.concatenate([next_states, a_norm[:, None]], axis=1)
        q1, _ = forward(self.target1, x)
        q2, _ = forward(self.target2, x)
        q_min = np.minimum(q1[:, 0], q2[:, 0])
        return rewards + gamma * (1.0 - dones) * (q_min - self.temperature * logp)

    def update(self) -> dict:
        if len(self.buffer) < self.cfg.batch_size:
            raise DataError("buffer smaller than one batch")
        states, actions, rewards, next_states, dones = self.buffer.sample(
            self.cfg.batch_size, self.rng
        )
        bsz = states.shape[0]
        gamma = self.env_cfg.gamma
        y = self.critic_targets(rewards, next_states, dones, gamma)

        # Critic regression toward the Bellman targets.
        x = np.concatenate([states, actions[:, None]], axis=1)
        critic_losses = []
        for critic, opt in (
            (self.critic1, self.critic1_opt),
            (self.critic2, self.critic2_opt),
        ):
            q, cache = forward(critic, x)
            err = q[:, 0] - y
            critic_losses.append(float(np.mean(err**2)))
            upstream = (2.0 * err / bsz)[:, None]
            grads, _ = backward(critic, cache, upstream)
            adam_step(opt, critic.parameters(), grads)

        # Actor: maximise min-Q of a reparameterised sample minus entropy cost.
        out, actor_cache = forward(self.actor, states)
        mean = out[:, 0]
        log_std_raw = out[:, 1]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        eps = self.rng.standard_normal(mean.shape)
        u = mean + std * eps
        tanh_u = np.tanh(u)
        logp = gaussian_tanh_log_prob(mean, log_std, u, self.env_cfg.ln_k)

        xa = np.concatenate([states, tanh_u[:, None]], axis=1)
        q1, cache1 = forward(self.critic1, xa)
        q2, cache2 = forward(self.critic2, xa)
        use1 = q1[:, 0] <= q2[:, 0]
        q_min = np.where(use1, q1[:, 0], q2[:, 0])

        ones = np.ones((bsz, 1))
        _, in_grad1 = backward(self.critic1, cache1, ones)
        _, in_grad2 = backward(self.critic2, cache2, ones)
        dq_da = np.where(use1, in_grad1[:, -1], in_grad2[:, -1])

        temp = self.temperature
        sech2 = 1.0 - tanh_u**2
        dlogp_du = 2.0 * tanh_u
        dl_dmean = (temp * dlogp_du - dq_da * sech2) / bsz
        dl_du = dl_dmean  # same path via u for the chain below
        dl_dlogstd = dl_du * std * eps + temp * (-1.0) / bsz
        clip_mask = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
        dl_dlogstd = np.where(clip_mask, dl_dlogstd, 0.0)
        upstream = np.stack([dl_dmean, dl_dlogstd], axis=1)
        actor_grads, _ = backward(self.actor, actor_cache, upstream)
        adam_step(self.actor_opt, self.actor.parameters(), actor_grads)
        actor_loss = float(np.mean(temp * logp - q_min))

        if self.cfg.auto_temp:
            grad = np.array([-(float(np.mean(logp)) + self.cfg.entropy_target) * 1.0])
            adam_step(self.temp_opt, [self._log_temp_arr], [grad])

        for critic, target in (
            (self.critic1, self.target1),
            (self.critic2, self.target2),
        ):
            for p_t, p_c in zip(target.parameters(), critic.parameters()):
                p_t *= self.cfg.rho
                p_t += (1.0 - self.cfg.rho) * p_c

        self.n_updates += 1
        diag = {
            "update": self.n_updates,
            "critic_loss": 0.5 * (critic_losses[0] + critic_losses[1]),
            "actor_loss": actor_loss,
            "temperature": self.temperature,
            "buffer": len(self.buffer),
        }
        if not all(math.isfinite(v) for v in diag.values() if isinstance(v, float)):
            raise NumericFault("non-finite loss during training")
        self.training_log.append(diag)
        return diag

    # -- persistence ----------------------------------------------------------

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        save_mlp(self.actor, os.path.join(directory, "actor.json"))
        save_mlp(self.critic1, os.path.join(directory, "critic1.json"))
        save_mlp(self.critic2, os.path.join(directory, "critic2.json"))
        np.savez(
            os.path.join(directory, "scaler.npz"),
            shift=self.scaler.shift,
            scale=self.scaler.scale,
            currency=self.scaler.currency,
            log_temp=self._log_temp_arr,
        )

    def load(self, directory: str) -> None:
        self.actor = load_mlp(os.path.join(directory, "actor.json"))
        self.critic1 = load_mlp(os.path.join(directory, "critic1.json"))
        self.critic2 = load_mlp(os.path.join(directory, "critic2.json"))
        data = np.load(os.path.join(directory, "scaler.npz"))
        self.scaler = FeatureScaler(
            shift=data["shift"], scale=data["scale"], currency=data["currency"]
        )
        self._log_temp_arr = data["log_temp"]


def save_agent(agent: SacAgent, directory: str) -> None:
    """Checkpoint networks, scaler and both configs for later scoring."""
    import dataclasses
    import json

    agent.save(directory)
    with open(os.path.join(directory, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "env": dataclasses.asdict(agent.env_cfg),
                "sac": dataclasses.asdict(agent.cfg),
            },
            fh,
            indent=1,
        )


def load_agent(directory: str) -> SacAgent:
    import json

    with open(os.path.join(directory, "config.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["sac"]["hidden"] = tuple(payload["sac"]["hidden"])
    env_cfg = EnvConfig(**payload["env"])
    cfg = SacConfig(**payload["sac"])
    dim = state_dim(env_cfg.state_profile, env_cfg.n_past)
    placeholder = FeatureScaler(
        shift=np.zeros(dim), scale=np.ones(dim), currency=np.zeros(dim, dtype=bool)
    )
    agent = SacAgent(env_cfg, cfg, placeholder)
    agent.load(directory)
    return agent


def fit_state_scaler(view: Dataset, init, env_cfg: EnvConfig, boundary: int) -> FeatureScaler:
    """Fit the feature scaler on a zero-action rollout over the window.

    Deterministic and leakage-safe: the zero policy keeps estimates at
    their initial values, so every visited state is a pure function of
    the training window.
    """
    probe = rollout_calendar(
        view, ZeroPolicy(), init, env_cfg, explore=False, boundary=boundary
    )
    rows = [txn.state for txn in probe.transitions]
    if not rows:
        raise DataError("no states available to fit the scaler")
    mask = currency_mask(env_cfg.state_profile, env_cfg.n_past)
    return FeatureScaler.fit(np.stack(rows), mask)


def train_sac(
    view: Dataset,
    init,
    env_cfg: EnvConfig,
    cfg: SacConfig,
    boundary: int | None = None,
) -> tuple[SacAgent, list[dict]]:
    """One chronological training pass; returns the frozen agent and log."""
    if not view.claims:
        raise DataError("empty training data")
    boundary = boundary if boundary is not None else view.max_calendar_period
    if env_cfg.s_scale is None:
        env_cfg = replace(env_cfg, s_scale=mean_training_ocl(view, boundary))
    scaler = fit_state_scaler(view, init, env_cfg, boundary)
    agent = SacAgent(env_cfg, cfg, scaler)
    rollout_calendar(
        view,
        agent,
        init,
        env_cfg,
        explore=True,
        boundary=boundary,
        on_transition=agent.observe,
    )
    return agent, agent.training_log


def predict_ocl_sac(
    agent: SacAgent,
    view: Dataset,
    init,
    boundary: int,
):
    """Deterministic replay over the window; returns the rollout result.

    The final prediction per open claim is its reserve estimate at the
    boundary.
    """
    return rollout_calendar(
        view, agent, init, agent.env_cfg, explore=False, boundary=boundary
    )


def write_training_log(log: list[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "critic_loss", "actor_loss", "temperature", "buffer"])
        for row in log:
            writer.writerow(
                [
                    row["update"],
                    repr(row["critic_loss"]),
                    repr(row["actor_loss"]),
                    repr(row["temperature"]),
                    row["buffer"],
                ]
            )
