"""Figure data and matplotlib renderings for sweeps, grid searches and datasets.

Every figure is written twice: a CSV with the plotted numbers and a PNG.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import yaml  # noqa: E402

from .data import DatasetSplit, YearSeries  # noqa: E402
from .design_dist import MixtureParams, sample_designs  # noqa: E402
from .experiment import TABLE_METRICS, aggregate, final_table, read_metrics  # noqa: E402

CURVES = (("weekly_mean", "weekly return (T=168)"),
          ("long_term_mean", "long-term return"),
          ("validation_mean", "validation return"))
SCENARIO_COLORS = {"co_optimisation": "tab:blue", "design_only": "tab:orange",
                   "fixed_design": "tab:green"}

plt.rcParams.update({"figure.dpi": 100, "axes.grid": True, "grid.alpha": 0.3,
                     "axes.spines.top": False, "axes.spines.right": False})


def _write_rows(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


def find_sweeps(root) -> dict[str, dict]:
    """Locate seed directories under ``root``.

    A directory holding ``seed_<k>/metrics.jsonl`` children is one sweep; its
    label is the scenario recorded in the seeds' config.yaml (falling back to
    the directory name). Returns {label: {"dir": Path, "seeds": {k: Path}}}.
    """
    root = Path(root)
    sweeps: dict[str, dict] = {}
    for metrics in sorted(root.rglob("seed_*/metrics.jsonl")):
        seed_dir = metrics.parent
        parent = seed_dir.parent
        try:
            seed = int(seed_dir.name.split("_", 1)[1])
        except ValueError:
            continue
        label = _scenario_of(seed_dir) or parent.name
        if label in sweeps and sweeps[label]["dir"] != parent:
            label = f"{label}:{parent.name}"
        sweeps.setdefault(label, {"dir": parent, "seeds": {}})["seeds"][seed] = seed_dir
    return sweeps


def _scenario_of(seed_dir: Path) -> str | None:
    cfg = seed_dir / "config.yaml"
    if not cfg.exists():
        return None
    data = yaml.safe_load(cfg.read_text()) or {}
    return data.get("scenario")


def learning_curves(sweeps: dict, out_dir) -> list[Path]:
    """Median and interquartile band per iteration of each return curve."""
    out = Path(out_dir)
    written = []
    fig, axes = plt.subplots(1, len(CURVES), figsize=(5 * len(CURVES), 3.6))
    for label, sw in sweeps.items():
        runs = {k: read_metrics(p / "metrics.jsonl") for k, p in sw["seeds"].items()}
        agg = aggregate(runs)
        if not agg:
            continue
        fields = [key for key, _ in CURVES]
        header = ["iteration"] + [f"{f}_{s}" for f in fields for s in ("median", "q25", "q75")]
        rows = [[a["iteration"]] + [a[f"{f}_{s}"] for f in fields for s in ("median", "q25", "q75")]
                for a in agg]
        written.append(_write_rows(out / f"curves_{_slug(label)}.csv", header, rows))
        it = np.array([a["iteration"] for a in agg])
        color = SCENARIO_COLORS.get(label.split(":")[0])
        for ax, (key, title) in zip(axes, CURVES):
            med = np.array([a[f"{key}_median"] for a in agg])
            ax.plot(it, med, color=color, label=label)
            ax.fill_between(it, [a[f"{key}_q25"] for a in agg], [a[f"{key}_q75"] for a in agg],
                            color=color, alpha=0.25, lw=0)
            ax.set_title(title)
            ax.set_xlabel("iteration")
    axes[0].set_ylabel("return [CHF]")
    axes[0].legend(frameon=False)
    fig.tight_layout()
    png = out / "curves.png"
    fig.savefig(png)
    plt.close(fig)
    return written + [png]


def design_quartile_curves(sweeps: dict, out_dir) -> list[Path]:
    """Median design quartiles over iterations (how the distribution narrows)."""
    out = Path(out_dir)
    written = []
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    dims = (("pv", "PV [kWp]"), ("battery", "battery [kWh]"))
    for label, sw in sweeps.items():
        if label.startswith("fixed_design"):
            continue
        runs = {k: read_metrics(p / "metrics.jsonl") for k, p in sw["seeds"].items()}
        agg = aggregate(runs)
        if not agg:
            continue
        keys = [f"{d}_{q}" for d, _ in dims for q in ("q25", "median", "q75")]
        rows = [[a["iteration"]] + [a[f"{k}_median"] for k in keys] for a in agg]
        written.append(_write_rows(out / f"design_quartiles_{_slug(label)}.csv",
                                   ["iteration"] + keys, rows))
        it = np.array([a["iteration"] for a in agg])
        color = SCENARIO_COLORS.get(label.split(":")[0])
        for ax, (d, title) in zip(axes, dims):
            ax.plot(it, [a[f"{d}_median_median"] for a in agg], color=color, label=label)
            ax.fill_between(it, [a[f"{d}_q25_median"] for a in agg],
                            [a[f"{d}_q75_median"] for a in agg], color=color, alpha=0.25, lw=0)
            ax.set_title(title)
            ax.set_xlabel("iteration")
    axes[0].legend(frameon=False)
    fig.tight_layout()
    png = out / "design_quartiles.png"
    fig.savefig(png)
    plt.close(fig)
    return written + [png]


def final_designs(sweeps: dict, out_dir, n: int = 1000, seed: int = 0) -> list[Path]:
    """Boxplots of designs drawn from each seed's final mixture."""
    out = Path(out_dir)
    samples = {}
    rows = []
    for label, sw in sweeps.items():
        chunks = []
        for k, p in sorted(sw["seeds"].items()):
            f = p / "final_mixture.json"
            if not f.exists():
                continue
            phi = MixtureParams.from_dict(json.loads(f.read_text()))
            x = sample_designs(phi, n, np.random.default_rng([seed, k]))
            chunks.append(x)
            rows.extend([label, k, float(a), float(b)] for a, b in x)
        if chunks:
            samples[label] = np.concatenate(chunks)
    if not samples:
        return []
    written = [_write_rows(out / "final_designs.csv", ["scenario", "seed", "pv_kwp", "battery_kwh"],
                           rows)]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.6))
    labels = list(samples)
    for ax, j, title in zip(axes, (0, 1), ("PV [kWp]", "battery [kWh]")):
        ax.boxplot([samples[s][:, j] for s in labels], showfliers=False)
        ax.set_xticks(range(1, len(labels) + 1), labels, rotation=15)
        ax.set_title(title)
    fig.tight_layout()
    png = out / "final_designs.png"
    fig.savefig(png)
    plt.close(fig)
    return written + [png]


def final_summary(sweeps: dict, out_dir) -> list[Path]:
    """Last-iteration mean and std per scenario (training / long-term / validation)."""
    rows = []
    for label, sw in sweeps.items():
        runs = {k: read_metrics(p / "metrics.jsonl") for k, p in sw["seeds"].items()}
        rows.append(final_table(runs, label))
    if not rows:
        return []
    header = ["scenario", "n_seeds"] + [f"{name}_{s}" for name, _ in TABLE_METRICS
                                        for s in ("mean", "std")]
    return [_write_rows(Path(out_dir) / "final_table.csv", header,
                        [[r[h] for h in header] for r in rows])]


def grid_heatmap(result, path) -> Path:
    """Heatmap of mean return over the (PV, battery) lattice, best point marked."""
    lat = result.lattice
    pv, b = np.unique(lat[:, 0]), np.unique(lat[:, 1])
    grid = np.full((b.size, pv.size), np.nan)
    for (x, y), m in zip(lat, result.mean):
        grid[np.searchsorted(b, y), np.searchsorted(pv, x)] = m
    fig, ax = plt.subplots(figsize=(7, 4.5))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis",
                   extent=(-0.5, pv.size - 0.5, -0.5, b.size - 0.5))
    step_x, step_y = max(1, pv.size // 8), max(1, b.size // 8)
    ax.set_xticks(range(0, pv.size, step_x), [f"{v:g}" for v in pv[::step_x]])
    ax.set_yticks(range(0, b.size, step_y), [f"{v:g}" for v in b[::step_y]])
    bx, by = result.best
    ax.plot(np.searchsorted(pv, bx), np.searchsorted(b, by), "r*", ms=12)
    ax.set_xlabel("PV [kWp]")
    ax.set_ylabel("battery [kWh]")
    ax.grid(False)
    fig.colorbar(im, ax=ax, label="mean return [CHF]")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def dataset_overview(series: YearSeries, split: DatasetSplit, path) -> Path:
    """Daily PV and load profile of the year with the validation weeks shaded."""
    pv = series.normalized_pv.reshape(-1, 24)
    load = series.load.reshape(-1, 24)
    days = np.arange(pv.shape[0])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
    a1.plot(days, pv.sum(axis=1), lw=0.8, color="tab:orange")
    a1.set_ylabel("PV yield [kWh/kWp/day]")
    a2.plot(days, load.mean(axis=1), lw=0.8, color="tab:blue")
    a2.set_ylabel("mean load [kW]")
    a2.set_xlabel("day of year")
    for lo in split.validation_weeks():
        hi = lo + 6
        for ax in (a1, a2):
            ax.axvspan(lo, hi + 1, color="grey", alpha=0.25, lw=0)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweeps(in_dir, out_dir) -> list[Path]:
    sweeps = find_sweeps(in_dir)
    if not sweeps:
        raise FileNotFoundError(f"no seed_<k>/metrics.jsonl found under {in_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    paths += learning_curves(sweeps, out)
    paths += design_quartile_curves(sweeps, out)
    paths += final_designs(sweeps, out)
    paths += final_summary(sweeps, out)
    return paths


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)
