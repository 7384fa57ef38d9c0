"""Hourly year series (normalised PV, load, tariffs, EV arrivals) and train/validation splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HOURS_PER_DAY = 24
DAYS_PER_YEAR = 365
HOURS_PER_YEAR = HOURS_PER_DAY * DAYS_PER_YEAR
CSV_HEADER = ("hour_of_year", "normalized_pv", "load_kw")

# Synthetic tariff and EV arrival table (CHF/kWh as signed reward rates).
IMPORT_PRICE = np.array(
    [-0.3] * 6 + [-0.5] * 4 + [-0.3] * 6 + [-0.5] * 6 + [-0.3] * 2, dtype=float
)
EXPORT_PRICE = np.zeros(HOURS_PER_DAY)
EV_ARRIVAL_PROB = np.array(
    [0.0] * 7 + [0.75, 0.9, 0.9, 0.75, 0.1, 0.1, 0.1] + [0.0] * 10, dtype=float
)

MEAN_LOAD_KW = 2.5


class DataError(ValueError):
    """Base class for dataset problems."""


class RowCountError(DataError):
    pass


class CellParseError(DataError):
    pass


class RangeError(DataError):
    pass


class ConfigurationError(DataError):
    pass


@dataclass(frozen=True)
class YearSeries:
    normalized_pv: np.ndarray
    load: np.ndarray
    c_imp_grid: np.ndarray = field(default_factory=IMPORT_PRICE.copy)
    c_exp_grid: np.ndarray = field(default_factory=EXPORT_PRICE.copy)
    ev_arrival_prob: np.ndarray = field(default_factory=EV_ARRIVAL_PROB.copy)

    def __post_init__(self):
        for name, n in (("normalized_pv", HOURS_PER_YEAR), ("load", HOURS_PER_YEAR),
                        ("c_imp_grid", HOURS_PER_DAY), ("c_exp_grid", HOURS_PER_DAY),
                        ("ev_arrival_prob", HOURS_PER_DAY)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DataError(f"{name}: expected length {n}, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name}: non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.normalized_pv.min() < 0 or self.normalized_pv.max() > 1:
            raise RangeError("normalized_pv outside [0, 1]")
        if self.load.min() < 0:
            raise RangeError("negative load")
        if self.ev_arrival_prob.min() < 0 or self.ev_arrival_prob.max() > 1:
            raise RangeError("ev_arrival_prob outside [0, 1]")


@dataclass(frozen=True)
class DatasetSplit:
    """Day indices of each split. Both tuples are sorted ascending."""

    training_days: tuple[int, ...]
    validation_days: tuple[int, ...]

    def __post_init__(self):
        train, val = set(self.training_days), set(self.validation_days)
        if train & val:
            raise ConfigurationError("training and validation days overlap")
        if train | val != set(range(DAYS_PER_YEAR)):
            raise ConfigurationError("splits do not cover the year")

    @property
    def training_hours(self) -> int:
        return len(self.training_days) * HOURS_PER_DAY

    @property
    def validation_hours(self) -> int:
        return len(self.validation_days) * HOURS_PER_DAY

    def days(self, mode: str) -> tuple[int, ...]:
        if mode == "training":
            return self.training_days
        if mode == "validation":
            return self.validation_days
        if mode == "year":
            return tuple(range(DAYS_PER_YEAR))
        raise ConfigurationError(f"unknown split mode {mode!r}")

    def validation_weeks(self) -> list[int]:
        """Start day of every contiguous validation block."""
        days = self.validation_days
        return [d for i, d in enumerate(days) if i == 0 or days[i - 1] != d - 1]


def load_year_csv(path) -> YearSeries:
    """Parse a ``hour_of_year,normalized_pv,load_kw`` file with exactly 8760 rows."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise DataError(f"expected header {','.join(CSV_HEADER)}")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if len(body) != HOURS_PER_YEAR:
        raise RowCountError(f"expected {HOURS_PER_YEAR} rows, got {len(body)}")

    pv = np.empty(HOURS_PER_YEAR)
    load = np.empty(HOURS_PER_YEAR)
    for i, row in enumerate(body):
        rowno = i + 1
        if len(row) != 3:
            raise CellParseError(f"row {rowno}: expected 3 columns, got {len(row)}")
        try:
            hour = int(row[0])
            p = float(row[1])
            l = float(row[2])
        except ValueError:
            raise CellParseError(f"row {rowno}: non-numeric cell in {row!r}") from None
        if hour != i:
            raise CellParseError(f"row {rowno}: hour_of_year {hour} out of sequence")
        if not (np.isfinite(p) and np.isfinite(l)):
            raise CellParseError(f"row {rowno}: non-finite value")
        if not 0.0 <= p <= 1.0:
            raise RangeError(f"row {rowno}: normalized_pv {p} outside [0, 1]")
        if l < 0:
            raise RangeError(f"row {rowno}: negative load {l}")
        pv[i] = p
        load[i] = l
    return YearSeries(normalized_pv=pv, load=load)


def write_year_csv(series: YearSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(HOURS_PER_YEAR):
            w.writerow([i, repr(float(series.normalized_pv[i])), repr(float(series.load[i]))])
    return path


def synthesize_year(seed: int = 0) -> YearSeries:
    """Seeded stand-in for a monitored office building: clear-sky PV shape with
    seasonal amplitude and daily cloudiness, weekday office load scaled to 2.5 kW mean."""
    rng = np.random.default_rng(seed)
    h = np.tile(np.arange(HOURS_PER_DAY), DAYS_PER_YEAR)
    d = np.repeat(np.arange(DAYS_PER_YEAR), HOURS_PER_DAY)

    sun = np.maximum(0.0, np.sin(np.pi * (h - 6) / 12.0))
    season = 0.55 + 0.45 * np.cos(2 * np.pi * (d - 172) / DAYS_PER_YEAR)
    # cloudiness persists a few days
    raw = rng.normal(size=DAYS_PER_YEAR)
    smooth = np.convolve(np.concatenate([raw[-2:], raw]), np.ones(3) / 3.0, mode="valid")
    weather = 0.3 + 0.7 / (1.0 + np.exp(-1.5 * smooth))
    pv = np.clip(sun * season * weather[d], 0.0, 1.0)

    weekday = (d % 7) < 5
    office = weekday & (h >= 8) & (h <= 18)
    base = np.where(office, 4.0, 1.0)
    noise = rng.normal(scale=np.where(office, 0.5, 0.15))
    load = np.maximum(base + noise, 0.0)
    load *= MEAN_LOAD_KW / load.mean()
    return YearSeries(normalized_pv=pv, load=load)


QUARTERS = ((0, 90), (91, 181), (182, 272), (273, 364))


def make_split(series: YearSeries | None = None, seed: int = 0, week_days: int = 7) -> DatasetSplit:
    """One contiguous validation week per quarter; the remaining days train."""
    rng = np.random.default_rng(seed)
    val = []
    for lo, hi in QUARTERS:
        start = int(rng.integers(lo, hi - week_days + 2))
        val.extend(range(start, start + week_days))
    val_set = set(val)
    train = tuple(d for d in range(DAYS_PER_YEAR) if d not in val_set)
    return DatasetSplit(training_days=train, validation_days=tuple(sorted(val_set)))
