"""Design-conditioned DDPG: replay buffer, exploration, critic TD regression, actor update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import EnvConstants, EnvState

STATE_DIM = 9
DESIGN_DIM = 2
ACTION_DIM = 2


@dataclass(frozen=True)
class DdpgHyper:
    gamma: float = 0.995
    batch_size: int = 256
    buffer_capacity: int = 100_000
    noise_sigma: float = 0.1
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    updates_per_iteration: int = 168
    hidden: tuple[int, ...] = (256, 256)
    grad_clip: float = 1.0
    reward_scale: float = 1.0
    # fixed feature scales
    power_scale: float = 10.0
    price_scale: float = 0.5
    pv_ref: float = 10.0
    battery_ref: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be >= 1")


def state_features(state: EnvState, designs, consts: EnvConstants, hyper: DdpgHyper) -> np.ndarray:
    """Normalised (n, 9) state block."""
    cap = np.asarray(designs)[:, 1]
    return np.column_stack([
        state.hour / 23.0,
        state.day / 364.0,
        state.soc / cap,
        state.pv_prod / hyper.power_scale,
        state.load / hyper.power_scale,
        state.c_imp_grid / hyper.price_scale,
        state.c_exp_grid / hyper.price_scale,
        state.ev_present.astype(float),
        state.soc_ev / consts.ev_capacity,
    ])


def design_features(designs, hyper: DdpgHyper) -> np.ndarray:
    d = np.atleast_2d(np.asarray(designs, dtype=float))
    return d / np.array([hyper.pv_ref, hyper.battery_ref])


def action_bounds(designs, consts: EnvConstants) -> np.ndarray:
    """Half-widths of the action box per row: (B / dt, P_ev_max)."""
    d = np.atleast_2d(np.asarray(designs, dtype=float))
    return np.column_stack([d[:, 1] / consts.dt, np.full(d.shape[0], consts.ev_power_max)])


def to_physical(unit_actions, designs, consts: EnvConstants) -> np.ndarray:
    return np.asarray(unit_actions) * action_bounds(designs, consts)


def actor_input(state_feats, design_feats) -> np.ndarray:
    return np.concatenate([state_feats, design_feats], axis=1)


def policy_unit(actor: nn.NetworkParams, state_feats, design_feats) -> np.ndarray:
    return nn.forward(actor, actor_input(state_feats, design_feats))


def policy_action(actor, state_feats, designs, consts: EnvConstants, hyper: DdpgHyper) -> np.ndarray:
    """Deterministic action in physical units (kW)."""
    u = policy_unit(actor, state_feats, design_features(designs, hyper))
    return to_physical(u, designs, consts)


def explore_unit(actor, state_feats, design_feats, sigma: float, rng, noise=None) -> np.ndarray:
    """Unit-space action plus clipped Gaussian noise; ``noise`` overrides the draw from ``rng``."""
    u = policy_unit(actor, state_feats, design_feats)
    if sigma > 0:
        z = rng.standard_normal(u.shape) if noise is None else noise
        u = np.clip(u + sigma * z, -1.0, 1.0)
    return u


def explore_action(actor, state_feats, designs, consts, hyper, sigma, rng) -> np.ndarray:
    """Policy action plus Gaussian noise of std ``sigma`` x half-range, clipped to the box."""
    u = explore_unit(actor, state_feats, design_features(designs, hyper), sigma, rng)
    return to_physical(u, designs, consts)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling (with replacement).

    Actions are stored in unit (tanh) space.
    """

    def __init__(self, capacity: int, state_dim: int = STATE_DIM, design_dim: int = DESIGN_DIM,
                 action_dim: int = ACTION_DIM):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.designs = np.zeros((capacity, design_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.truncated = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.ptr = 0
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def add(self, states, designs, actions, rewards, next_states, truncated):
        states = np.atleast_2d(states)
        n = states.shape[0]
        idx = (self.ptr + np.arange(n)) % self.capacity
        self.states[idx] = states
        self.designs[idx] = np.atleast_2d(designs)
        self.actions[idx] = np.atleast_2d(actions)
        self.rewards[idx] = rewards
        self.next_states[idx] = np.atleast_2d(next_states)
        self.truncated[idx] = truncated
        self.ptr = int((self.ptr + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)
        self.inserted += n

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        idx = rng.integers(0, self.size, size=batch_size)
        return {"states": self.states[idx], "designs": self.designs[idx],
                "actions": self.actions[idx], "rewards": self.rewards[idx],
                "next_states": self.next_states[idx], "truncated": self.truncated[idx]}


def critic_input(state_feats, design_feats, unit_actions) -> np.ndarray:
    return np.concatenate([state_feats, design_feats, unit_actions], axis=1)


def critic_targets(batch: dict, target_actor, target_critic, gamma: float) -> np.ndarray:
    """y = r + gamma * Q'(s', pi'(s', x), x). Truncation is not terminal."""
    a_next = policy_unit(target_actor, batch["next_states"], batch["designs"])
    q_next = nn.forward(target_critic, critic_input(batch["next_states"], batch["designs"], a_next))
    return batch["rewards"] + gamma * q_next[:, 0]


def critic_value_and_action_grad(critic, state_feats, design_feats, unit_actions):
    """Q(s, a, x) and dQ/da for a batch."""
    q, fc = nn.forward(critic, critic_input(state_feats, design_feats, unit_actions), cache=True)
    _, g_in = nn.backward(critic, fc, np.ones_like(q))
    return q[:, 0], g_in[:, -unit_actions.shape[1]:]


def actor_gradient(actor, state_feats, design_feats, dq_da_fn):
    """Gradient of -mean Q(s, pi(s, x), x) w.r.t. actor parameters.

    ``dq_da_fn(state_feats, design_feats, unit_actions)`` returns (Q, dQ/da).
    """
    u, fc = nn.forward(actor, actor_input(state_feats, design_feats), cache=True)
    q, dq_da = dq_da_fn(state_feats, design_feats, u)
    n = u.shape[0]
    grads, _ = nn.backward(actor, fc, -dq_da / n)
    return grads, float(np.mean(q))


def actor_step(actor, opt, state_feats, design_feats, dq_da_fn, lr, max_norm):
    grads, objective = actor_gradient(actor, state_feats, design_feats, dq_da_fn)
    if max_norm:
        grads = nn.clip_gradients(grads, max_norm)
    actor, opt = nn.optimizer_step(actor, grads, opt, lr)
    return actor, opt, objective


def critic_step(critic, opt, batch, targets, lr, max_norm):
    x = critic_input(batch["states"], batch["designs"], batch["actions"])
    q, fc = nn.forward(critic, x, cache=True)
    err = q[:, 0] - targets
    loss = float(np.mean(err * err))
    grads, _ = nn.backward(critic, fc, (2.0 / err.size) * err[:, None])
    if max_norm:
        grads = nn.clip_gradients(grads, max_norm)
    critic, opt = nn.optimizer_step(critic, grads, opt, lr)
    return critic, opt, loss


@dataclass
class DdpgAgent:
    actor: nn.NetworkParams
    critic: nn.NetworkParams
    actor_target: nn.NetworkParams
    critic_target: nn.NetworkParams
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    hyper: DdpgHyper = field(default_factory=DdpgHyper)
    updates: int = 0

    @classmethod
    def create(cls, hyper: DdpgHyper, rng: np.random.Generator) -> "DdpgAgent":
        in_dim = STATE_DIM + DESIGN_DIM
        actor = nn.mlp(in_dim, hyper.hidden, ACTION_DIM, "tanh", rng, final_scale=1e-3)
        critic = nn.mlp(in_dim + ACTION_DIM, hyper.hidden, 1, "linear", rng)
        return cls(actor, critic, actor.copy(), critic.copy(), nn.adam_init(actor),
                   nn.adam_init(critic), hyper)

    def critic_dq_da(self, state_feats, design_feats, unit_actions):
        return critic_value_and_action_grad(self.critic, state_feats, design_feats, unit_actions)


def train_step(agent: DdpgAgent, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
    """One critic regression step, one actor step through the critic, soft target updates.

    A buffer smaller than one minibatch leaves the agent untouched.
    """
    h = agent.hyper
    if len(buffer) < h.batch_size or len(buffer) == 0:
        return {"skipped": True, "critic_loss": float("nan"), "actor_objective": float("nan")}
    batch = buffer.sample(h.batch_size, rng)
    batch["rewards"] = batch["rewards"] * h.reward_scale
    y = critic_targets(batch, agent.actor_target, agent.critic_target, h.gamma)
    agent.critic, agent.critic_opt, loss = critic_step(
        agent.critic, agent.critic_opt, batch, y, h.critic_lr, h.grad_clip)
    agent.actor, agent.actor_opt, objective = actor_step(
        agent.actor, agent.actor_opt, batch["states"], batch["designs"], agent.critic_dq_da,
        h.actor_lr, h.grad_clip)
    agent.actor_target = nn.soft_update(agent.actor_target, agent.actor, h.tau)
    agent.critic_target = nn.soft_update(agent.critic_target, agent.critic, h.tau)
    agent.updates += 1
    return {"skipped": False, "critic_loss": loss, "actor_objective": objective}
