"""Expert rule-based dispatch and an exhaustive design grid search under it."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import BuildingEnv, EnvConstants, EnvState, design_array
from .rollout import evaluate_lattice

DEFAULT_PV_GRID = tuple(np.round(np.arange(0.5, 12.0 + 1e-9, 0.5), 10))
# B = 0 is not a valid design (positive support); the smallest battery stands in for it.
DEFAULT_BATTERY_GRID = (0.01,) + tuple(float(b) for b in range(1, 21))


def rule_based_action(state: EnvState, designs, consts: EnvConstants = EnvConstants()) -> np.ndarray:
    """Store PV surplus (battery first, then EV) and cover deficits the same way."""
    d = design_array(designs, state.n)
    dt = consts.dt
    surplus = state.pv_prod - state.load
    present = state.ev_present > 0

    headroom = (d[:, 1] - state.soc) / dt
    stored = state.soc / dt
    ev_headroom = np.where(present, np.minimum((consts.ev_capacity - state.soc_ev) / dt,
                                               consts.ev_power_max), 0.0)
    ev_stored = np.where(present, np.minimum((state.soc_ev - consts.ev_soc_min) / dt,
                                             consts.ev_power_max), 0.0)
    ev_headroom = np.maximum(ev_headroom, 0.0)
    ev_stored = np.maximum(ev_stored, 0.0)

    charge_b = np.minimum(np.maximum(surplus, 0.0), headroom)
    charge_ev = np.minimum(np.maximum(surplus, 0.0) - charge_b, ev_headroom)
    deficit = np.maximum(-surplus, 0.0)
    discharge_b = np.minimum(deficit, stored)
    discharge_ev = np.minimum(deficit - discharge_b, ev_stored)

    p_b = np.where(surplus > 0, charge_b, np.where(surplus < 0, -discharge_b, 0.0))
    p_ev = np.where(surplus > 0, charge_ev, np.where(surplus < 0, -discharge_ev, 0.0))
    return np.column_stack([p_b, p_ev])


class RuleBasedController:
    """Controller wrapper around :func:`rule_based_action`; has no trainable parameters."""

    name = "rule_based"

    def __init__(self, consts: EnvConstants = EnvConstants()):
        self.consts = consts

    def __call__(self, state, designs):
        return rule_based_action(state, designs, self.consts)


def design_lattice(pv_values=DEFAULT_PV_GRID, battery_values=DEFAULT_BATTERY_GRID) -> np.ndarray:
    pv, b = np.meshgrid(np.asarray(pv_values, float), np.asarray(battery_values, float), indexing="ij")
    return np.column_stack([pv.ravel(), b.ravel()])


@dataclass
class GridSearchResult:
    lattice: np.ndarray
    returns: np.ndarray  # (P, episodes)
    best_index: int

    @property
    def mean(self) -> np.ndarray:
        return np.array([float(np.mean(r)) for r in self.returns])

    @property
    def std(self) -> np.ndarray:
        return np.array([float(np.std(r)) for r in self.returns])

    @property
    def best(self) -> np.ndarray:
        return self.lattice[self.best_index]

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pv_kwp", "battery_kwh", "mean_return", "std_return"])
            for (pv, b), m, s in zip(self.lattice, self.mean, self.std):
                w.writerow([repr(float(pv)), repr(float(b)), repr(float(m)), repr(float(s))])
        return path


def grid_search_design(env: BuildingEnv, lattice=None, episodes: int = 4, split: str = "training",
                       horizon: int | None = None, seed: int = 0, controller=None) -> GridSearchResult:
    """Average return of the rule-based controller at every lattice design.

    Every lattice point sees the same EV arrival draws (common random numbers),
    so the ranking is not blurred by sampling noise.
    """
    lattice = design_lattice() if lattice is None else design_array(lattice)
    if lattice.shape[0] == 0:
        raise ValueError("empty design lattice")
    controller = RuleBasedController(env.consts) if controller is None else controller
    returns = evaluate_lattice(controller, env, lattice, split=split, horizon=horizon,
                               episodes=episodes, rng=np.random.default_rng(seed))
    means = np.array([float(np.mean(r)) for r in returns])
    return GridSearchResult(lattice=lattice, returns=returns, best_index=int(np.argmax(means)))
