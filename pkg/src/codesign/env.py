"""Hourly PV / stationary battery / bidirectional EV building simulator.

Power sign convention: positive battery or EV power means *charging* that
battery (the building consumes it); negative means discharging into the
building. Grid and EV prices are signed reward rates in CHF/kWh, so the
negative import tariff makes imports cost money.

All state fields are numpy arrays with one entry per parallel episode, so a
single environment instance steps a whole batch in lock-step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    DAYS_PER_YEAR,
    HOURS_PER_DAY,
    HOURS_PER_YEAR,
    ConfigurationError,
    DatasetSplit,
    YearSeries,
)

EV_DRAWS_PER_STEP = 3


@dataclass(frozen=True)
class EnvConstants:
    # PV
    pv_lifetime: float = 20.0
    pv_opex_fix: float = 0.0
    pv_opex_var: float = 100.0
    pv_capex_fix: float = 100.0
    pv_capex_var: float = 775.0
    # stationary battery
    batt_efficiency: float = 0.9
    batt_lifetime: float = 10.0
    batt_opex_fix: float = 0.0
    batt_opex_var: float = 10.0
    batt_capex_fix: float = 50.0
    batt_capex_var: float = 300.0
    # EV
    ev_capacity: float = 80.0
    ev_soc_min: float = 32.0
    ev_power_max: float = 5.0
    ev_efficiency: float = 1.0
    ev_price_imp: float = -1.5
    ev_price_exp: float = 1.0
    ev_min_stay: int = 5
    ev_max_stay: int = 8
    ev_reward: bool = True
    # system
    dt: float = 1.0
    discount_rate: float = 0.05
    horizon: int = 168

    def __post_init__(self):
        if not (0 < self.batt_efficiency <= 1 and 0 < self.ev_efficiency <= 1):
            raise ConfigurationError("efficiencies must lie in (0, 1]")
        if min(self.pv_lifetime, self.batt_lifetime) < 1:
            raise ConfigurationError("lifetimes must be >= 1 year")
        if self.dt <= 0 or self.ev_capacity <= 0 or self.ev_power_max <= 0:
            raise ConfigurationError("dt, ev_capacity and ev_power_max must be positive")
        if not 0 <= self.ev_soc_min <= self.ev_capacity:
            raise ConfigurationError("ev_soc_min must lie in [0, ev_capacity]")
        if not 1 <= self.ev_min_stay <= self.ev_max_stay:
            raise ConfigurationError("bad EV stay bounds")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")


@dataclass(frozen=True)
class Design:
    pv_nom: float
    battery_cap: float

    def __post_init__(self):
        for v in (self.pv_nom, self.battery_cap):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"design components must be positive and finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.pv_nom, self.battery_cap], dtype=float)


def design_array(designs, n: int | None = None) -> np.ndarray:
    """Coerce a Design, a 2-vector or an (n, 2) array into an (n, 2) float array."""
    if isinstance(designs, Design):
        arr = designs.as_array()[None, :]
    else:
        arr = np.atleast_2d(np.asarray(designs, dtype=float))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"designs must have shape (n, 2), got {arr.shape}")
    if n is not None and arr.shape[0] != n:
        if arr.shape[0] != 1:
            raise ValueError(f"expected {n} designs, got {arr.shape[0]}")
        arr = np.repeat(arr, n, axis=0)
    if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
        raise ValueError("design components must be positive and finite")
    return arr


@dataclass
class EnvState:
    hour: np.ndarray
    day: np.ndarray
    soc: np.ndarray
    pv_prod: np.ndarray
    load: np.ndarray
    c_imp_grid: np.ndarray
    c_exp_grid: np.ndarray
    ev_present: np.ndarray
    soc_ev: np.ndarray
    # hidden bookkeeping, not part of the observation
    ev_remaining: np.ndarray = field(repr=False)
    t: int = 0
    split: str = "training"

    FIELDS = ("hour", "day", "soc", "pv_prod", "load", "c_imp_grid", "c_exp_grid",
              "ev_present", "soc_ev")

    @property
    def n(self) -> int:
        return self.soc.shape[0]

    def matrix(self) -> np.ndarray:
        """Raw (n, 9) observation in the order of FIELDS."""
        return np.column_stack([getattr(self, f).astype(float) for f in self.FIELDS])

    def copy(self) -> "EnvState":
        return replace(self, **{f: getattr(self, f).copy()
                                for f in self.FIELDS + ("ev_remaining",)})


@dataclass
class StepInfo:
    p_batt: np.ndarray
    p_ev: np.ndarray
    p_imp: np.ndarray
    p_exp: np.ndarray


def _scalar_out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def clamp_battery_power(requested, soc, capacity, dt=1.0):
    """Limit a charge/discharge request to what fits in one step."""
    upper = (np.asarray(capacity) - soc) / dt
    lower = -np.asarray(soc) / dt
    out = np.where(requested > upper, upper, np.where(requested < lower, lower, requested))
    return _scalar_out(out)


def clamp_ev_power(requested, soc_ev, present, consts: EnvConstants = EnvConstants()):
    req = np.clip(requested, -consts.ev_power_max, consts.ev_power_max)
    upper = (consts.ev_capacity - np.asarray(soc_ev)) / consts.dt
    lower = -(np.asarray(soc_ev) - consts.ev_soc_min) / consts.dt
    p = np.where(req > upper, upper, np.where(req < lower, lower, req))
    p = np.where(np.asarray(present) > 0, p, 0.0)
    return _scalar_out(p)


def update_soc(soc, power, efficiency, dt=1.0, lo=None, hi=None):
    gain = np.where(power >= 0, power * dt * efficiency, power * dt / efficiency)
    out = soc + gain
    if lo is not None or hi is not None:
        out = np.clip(out, lo, hi)
    return _scalar_out(out)


def advance_clock(hour, day, n_days: int = DAYS_PER_YEAR):
    """Next (hour, day); the day rolls over exactly when the hour wraps."""
    nh = (np.asarray(hour) + 1) % HOURS_PER_DAY
    nd = np.where(nh == 0, (np.asarray(day) + 1) % n_days, day)
    if nh.ndim == 0:
        return int(nh), int(nd)
    return nh, nd


def grid_exchange(load, pv, p_batt, p_ev):
    net = np.asarray(load) - pv + p_batt + p_ev
    return _scalar_out(np.maximum(net, 0.0)), _scalar_out(np.maximum(-net, 0.0))


def annuity_factor(rate: float, lifetime: float, horizon_hours: float) -> float:
    growth = (1.0 + rate) ** lifetime
    return rate * growth / (growth - 1.0) * horizon_hours / HOURS_PER_YEAR


def fixed_cost_per_step(designs, consts: EnvConstants, horizon: float | None = None):
    """Capex (annuitised) plus opex attributed to one step, CHF, per design row."""
    d = design_array(designs) if not isinstance(designs, np.ndarray) else np.atleast_2d(designs)
    T = consts.horizon if horizon is None else horizon
    pv, cap = d[:, 0], d[:, 1]
    r_pv = annuity_factor(consts.discount_rate, consts.pv_lifetime, T)
    r_b = annuity_factor(consts.discount_rate, consts.batt_lifetime, T)
    capex = ((consts.pv_capex_fix + consts.pv_capex_var * pv) * r_pv
             + (consts.batt_capex_fix + consts.batt_capex_var * cap) * r_b)
    opex = ((consts.pv_opex_fix + consts.pv_opex_var * pv)
            + (consts.batt_opex_fix + consts.batt_opex_var * cap)) * (T / HOURS_PER_YEAR)
    return (capex + opex) / T * consts.dt


def step_reward(state: EnvState, p_imp, p_exp, p_ev, designs, consts: EnvConstants,
                horizon: float | None = None):
    dt = consts.dt
    reward = -fixed_cost_per_step(designs, consts, horizon)
    reward = reward + p_imp * dt * state.c_imp_grid + p_exp * dt * state.c_exp_grid
    if consts.ev_reward:
        present = state.ev_present > 0
        discharge = np.where(present, np.maximum(-p_ev, 0.0), 0.0)
        charge = np.where(present, np.maximum(p_ev, 0.0), 0.0)
        reward = reward + discharge * dt * consts.ev_price_imp + charge * dt * consts.ev_price_exp
    return reward


class BuildingEnv:
    """Design-conditioned MDP over one year of hourly data.

    ``split`` selects which days an episode walks through: the clock moves to the
    next day of the chosen split when the hour wraps (modular within the split),
    so an episode never leaks into the other split.
    """

    def __init__(self, series: YearSeries, split: DatasetSplit, consts: EnvConstants = EnvConstants()):
        self.series = series
        self.split = split
        self.consts = consts
        self._next_day = {}
        self._days = {}
        for name in ("training", "validation", "year"):
            days = np.asarray(split.days(name), dtype=np.int64)
            if days.size == 0:
                continue
            nxt = np.full(DAYS_PER_YEAR, -1, dtype=np.int64)
            nxt[days] = np.roll(days, -1)
            self._next_day[name] = nxt
            self._days[name] = days

    def days(self, split: str) -> np.ndarray:
        if split not in self._days:
            raise ConfigurationError(f"split {split!r} is empty")
        return self._days[split]

    def split_hours(self, split: str) -> int:
        return int(self.days(split).size * HOURS_PER_DAY)

    def _lookup(self, hour, day, designs):
        idx = day * HOURS_PER_DAY + hour
        s = self.series
        return (designs[:, 0] * s.normalized_pv[idx], s.load[idx].copy(),
                s.c_imp_grid[hour].copy(), s.c_exp_grid[hour].copy())

    def _draws(self, rng, n, draws):
        if draws is None:
            return rng.random((n, EV_DRAWS_PER_STEP))
        draws = np.asarray(draws, dtype=float)
        if draws.shape != (n, EV_DRAWS_PER_STEP):
            raise ValueError(f"draws must have shape ({n}, {EV_DRAWS_PER_STEP})")
        return draws

    def _ev_process(self, hour, present, soc_ev, remaining, u):
        c = self.consts
        remaining = np.where(present > 0, remaining - 1, 0)
        departed = (present > 0) & (remaining <= 0)
        present = np.where(departed, 0, present)
        soc_ev = np.where(departed, 0.0, soc_ev)
        remaining = np.where(departed, 0, remaining)

        span = c.ev_max_stay - c.ev_min_stay + 1
        arrive = (present == 0) & (u[:, 0] < self.series.ev_arrival_prob[hour])
        stay = c.ev_min_stay + np.minimum((u[:, 1] * span).astype(np.int64), span - 1)
        init = c.ev_soc_min + u[:, 2] * (c.ev_capacity - c.ev_soc_min)
        present = np.where(arrive, 1, present)
        soc_ev = np.where(arrive, init, soc_ev)
        remaining = np.where(arrive, stay, remaining)
        return present.astype(np.int64), soc_ev, remaining.astype(np.int64)

    def reset(self, mode: str, designs, rng: np.random.Generator, n: int | None = None,
              split: str | None = None, draws=None, init_uniform=None) -> EnvState:
        """Initial state batch.

        mode "training": random start day within the split and soc ~ U[0, B].
        mode "validation": earliest day of the split and soc = B / 2.
        ``split`` defaults to ``mode``. ``init_uniform`` (n, 2) and ``draws``
        (n, 3) replace the uniforms otherwise taken from ``rng``.
        """
        if mode not in ("training", "validation"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        split = mode if split is None else split
        days = self.days(split)
        if n is None:
            n = 1 if isinstance(designs, Design) else np.atleast_2d(designs).shape[0]
        d = design_array(designs, n)
        cap = d[:, 1]
        if mode == "training":
            u = rng.random((n, 2)) if init_uniform is None else np.asarray(init_uniform, float)
            if u.shape != (n, 2):
                raise ValueError(f"init_uniform must have shape ({n}, 2)")
            day = days[np.minimum((u[:, 0] * days.size).astype(np.int64), days.size - 1)]
            soc = u[:, 1] * cap
        else:
            day = np.full(n, days[0], dtype=np.int64)
            soc = cap / 2.0
        hour = np.zeros(n, dtype=np.int64)
        pv, load, cimp, cexp = self._lookup(hour, day, d)
        present, soc_ev, remaining = self._ev_process(
            hour, np.zeros(n, dtype=np.int64), np.zeros(n), np.zeros(n, dtype=np.int64),
            self._draws(rng, n, draws))
        return EnvState(hour=hour, day=day.astype(np.int64), soc=soc, pv_prod=pv, load=load,
                        c_imp_grid=cimp, c_exp_grid=cexp, ev_present=present, soc_ev=soc_ev,
                        ev_remaining=remaining, t=0, split=split)

    def transition(self, state: EnvState, action, designs, rng=None, draws=None):
        """Full step returning (next_state, reward, truncated, StepInfo)."""
        c = self.consts
        n = state.n
        d = design_array(designs, n)
        action = np.asarray(action, dtype=float).reshape(n, 2)
        cap = d[:, 1]

        p_b = clamp_battery_power(action[:, 0], state.soc, cap, c.dt)
        p_ev = clamp_ev_power(action[:, 1], state.soc_ev, state.ev_present, c)
        p_imp, p_exp = grid_exchange(state.load, state.pv_prod, p_b, p_ev)
        reward = step_reward(state, p_imp, p_exp, p_ev, d, c)

        soc = update_soc(state.soc, p_b, c.batt_efficiency, c.dt, 0.0, cap)
        present = state.ev_present
        soc_ev = np.where(present > 0,
                          update_soc(state.soc_ev, p_ev, c.ev_efficiency, c.dt,
                                     c.ev_soc_min, c.ev_capacity),
                          0.0)

        hour = (state.hour + 1) % HOURS_PER_DAY
        day = np.where(hour == 0, self._next_day[state.split][state.day], state.day)
        pv, load, cimp, cexp = self._lookup(hour, day, d)
        present, soc_ev, remaining = self._ev_process(
            hour, present, soc_ev, state.ev_remaining, self._draws(rng, n, draws))

        t = state.t + 1
        nxt = EnvState(hour=hour, day=day, soc=np.asarray(soc, dtype=float), pv_prod=pv,
                       load=load, c_imp_grid=cimp, c_exp_grid=cexp, ev_present=present,
                       soc_ev=soc_ev, ev_remaining=remaining, t=t, split=state.split)
        info = StepInfo(p_batt=np.asarray(p_b), p_ev=np.asarray(p_ev),
                        p_imp=np.asarray(p_imp), p_exp=np.asarray(p_exp))
        return nxt, reward, t >= c.horizon, info

    def step(self, state: EnvState, action, designs, rng=None, draws=None):
        nxt, reward, truncated, _ = self.transition(state, action, designs, rng, draws)
        return nxt, reward, truncated
