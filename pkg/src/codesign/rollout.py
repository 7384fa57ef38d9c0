"""Episode rollouts: training collection for the learner and deterministic evaluation."""

from __future__ import annotations

import numpy as np

from . import ddpg
from .env import EV_DRAWS_PER_STEP, BuildingEnv, design_array


class PolicyController:
    """Deterministic actor (no exploration noise)."""

    name = "ddpg"

    def __init__(self, actor, consts, hyper: ddpg.DdpgHyper):
        self.actor = actor
        self.consts = consts
        self.hyper = hyper

    def __call__(self, state, designs):
        feats = ddpg.state_features(state, designs, self.consts, self.hyper)
        return ddpg.policy_action(self.actor, feats, designs, self.consts, self.hyper)


def _rollout_rows(controller, env: BuildingEnv, rows: np.ndarray, episodes: int, split: str,
                  horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Evaluate ``rows`` (P * episodes designs, design-major) from the fixed initial
    state of ``split``. EV draws are taken per episode and shared across the P
    design blocks, so every block sees the same arrivals as a stand-alone run."""
    n = rows.shape[0]
    blocks = n // episodes

    def draws():
        return np.tile(rng.random((episodes, EV_DRAWS_PER_STEP)), (blocks, 1))

    state = env.reset("validation", rows, rng, n=n, split=split, draws=draws())
    total = np.zeros(n)
    for _ in range(horizon):
        action = controller(state, rows)
        state, reward, _ = env.step(state, action, rows, draws=draws())
        total += reward
    return total


def _check_horizon(env, split, horizon):
    available = env.split_hours(split)
    if horizon is None:
        return available
    if horizon > available:
        raise ValueError(f"horizon {horizon} exceeds the {available} hours of split {split!r}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return int(horizon)


def evaluate(controller, env: BuildingEnv, designs, split: str = "validation",
             horizon: int | None = None, episodes: int = 32, rng=None):
    """Undiscounted returns of a deterministic controller.

    ``designs`` is one Design (shared by every episode) or an (episodes, 2) array.
    Returns (mean, std, per-episode returns).
    """
    horizon = _check_horizon(env, split, horizon)
    rng = np.random.default_rng(0) if rng is None else rng
    rows = design_array(designs, episodes)
    returns = _rollout_rows(controller, env, rows, episodes, split, horizon, rng)
    return float(np.mean(returns)), float(np.std(returns)), returns


def evaluate_lattice(controller, env: BuildingEnv, lattice, split: str = "training",
                     horizon: int | None = None, episodes: int = 4, rng=None) -> np.ndarray:
    """(P, episodes) returns for each lattice design; row p equals
    ``evaluate(controller, env, lattice[p], ...)`` under the same seed."""
    horizon = _check_horizon(env, split, horizon)
    rng = np.random.default_rng(0) if rng is None else rng
    lattice = design_array(lattice)
    rows = np.repeat(lattice, episodes, axis=0)
    returns = _rollout_rows(controller, env, rows, episodes, split, horizon, rng)
    return returns.reshape(lattice.shape[0], episodes)


def collect_episodes(env: BuildingEnv, designs, rng_env, controller=None, agent=None,
                     buffer: ddpg.ReplayBuffer | None = None, sigma: float = 0.0,
                     rng_noise=None, horizon: int | None = None, slots=None) -> np.ndarray:
    """Training-mode episodes (random start day and soc) of length ``horizon``.

    With ``agent`` the exploring actor acts and every transition goes to
    ``buffer``; otherwise ``controller`` acts. Rows sharing a ``slots`` label
    share their start day, initial soc fraction, EV draws and exploration
    noise (common random numbers across designs). Returns undiscounted returns.
    """
    c = env.consts
    horizon = c.horizon if horizon is None else horizon
    rows = design_array(designs)
    n = rows.shape[0]
    slots = np.arange(n) if slots is None else np.asarray(slots, dtype=np.int64)
    n_slots = int(slots.max()) + 1

    def shared(gen, k):
        return gen.random((n_slots, k))[slots]

    state = env.reset("training", rows, rng_env, n=n, init_uniform=shared(rng_env, 2),
                      draws=shared(rng_env, EV_DRAWS_PER_STEP))
    total = np.zeros(n)
    if agent is not None:
        h = agent.hyper
        dfeat = ddpg.design_features(rows, h)
        feats = ddpg.state_features(state, rows, c, h)
        for _ in range(horizon):
            noise = rng_noise.standard_normal((n_slots, ddpg.ACTION_DIM))[slots]
            unit = ddpg.explore_unit(agent.actor, feats, dfeat, sigma, rng_noise, noise=noise)
            state, reward, truncated = env.step(state, ddpg.to_physical(unit, rows, c), rows,
                                                draws=shared(rng_env, EV_DRAWS_PER_STEP))
            next_feats = ddpg.state_features(state, rows, c, h)
            if buffer is not None:
                buffer.add(feats, dfeat, unit, reward, next_feats, np.full(n, truncated))
            feats = next_feats
            total += reward
    else:
        for _ in range(horizon):
            state, reward, _ = env.step(state, controller(state, rows), rows,
                                        draws=shared(rng_env, EV_DRAWS_PER_STEP))
            total += reward
    return total
