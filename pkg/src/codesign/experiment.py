"""Joint design/control training loop, periodic evaluation and seed sweeps."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ddpg, nn
from .baselines import RuleBasedController
from .config import ExperimentConfig, dump_config
from .data import load_year_csv, make_split, synthesize_year
from .design_dist import (
    EntropySchedule,
    MixtureParams,
    adam_init_mixture,
    design_loss,
    init_mixture,
    sample_designs,
    summarize,
    update_design,
)
from .env import BuildingEnv, Design
from .rollout import PolicyController, collect_episodes, evaluate

log = logging.getLogger(__name__)

# independent random streams per seed
_INIT, _ROLLOUT, _NOISE, _REPLAY, _DESIGN, _EVAL_VAL, _EVAL_LT, _SUMMARY = range(8)

METRIC_FIELDS = (
    "iteration", "entropy_weight",
    "weekly_mean", "weekly_std",
    "long_term_mean", "long_term_std", "long_term_evaluated",
    "validation_mean", "validation_std",
    "pv_q25", "pv_median", "pv_q75", "battery_q25", "battery_median", "battery_q75",
    "critic_loss", "actor_objective", "design_loss",
)
TABLE_METRICS = (("training", "weekly_mean"), ("long_term", "long_term_mean"),
                 ("validation", "validation_mean"))


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, keys)])


def build_env(cfg: ExperimentConfig) -> BuildingEnv:
    if cfg.data.csv_path:
        series = load_year_csv(cfg.data.csv_path)
    else:
        series = synthesize_year(cfg.data.synthetic_seed)
    return BuildingEnv(series, make_split(series, cfg.data.split_seed), cfg.env)


@dataclass
class TrainingState:
    cfg: ExperimentConfig
    env: BuildingEnv
    seed: int
    agent: ddpg.DdpgAgent | None
    buffer: ddpg.ReplayBuffer | None
    phi: MixtureParams | None
    phi_opt: nn.AdamState | None
    schedule: EntropySchedule
    rngs: dict = field(default_factory=dict)
    iteration: int = 0
    last_long_term: tuple[float, float] = (math.nan, math.nan)


def init_training(cfg: ExperimentConfig, seed: int, env: BuildingEnv | None = None) -> TrainingState:
    env = build_env(cfg) if env is None else env
    init_rng = _rng(seed, _INIT)
    agent = buffer = None
    if cfg.controller == "ddpg":
        agent = ddpg.DdpgAgent.create(cfg.ddpg, init_rng)
        buffer = ddpg.ReplayBuffer(cfg.ddpg.buffer_capacity)
    phi = phi_opt = None
    if cfg.scenario != "fixed_design":
        phi = init_mixture(init_rng, cfg.design.n_components, 2, cfg.design.sigma_init)
        phi_opt = adam_init_mixture(phi)
    rngs = {k: _rng(seed, k) for k in (_ROLLOUT, _NOISE, _REPLAY, _DESIGN)}
    return TrainingState(cfg=cfg, env=env, seed=seed, agent=agent, buffer=buffer, phi=phi,
                         phi_opt=phi_opt, rngs=rngs,
                         schedule=EntropySchedule(cfg.design.entropy_weight, cfg.iterations))


def controller_for(ts: TrainingState):
    if ts.agent is not None:
        return PolicyController(ts.agent.actor, ts.env.consts, ts.agent.hyper)
    return RuleBasedController(ts.env.consts)


def _eval_designs(ts: TrainingState, n: int, rng) -> np.ndarray:
    if ts.phi is None:
        return np.repeat(np.asarray(ts.cfg.fixed_design, float)[None, :], n, axis=0)
    return sample_designs(ts.phi, n, rng)


def _design_summary(ts: TrainingState, rng) -> dict:
    if ts.phi is None:
        pv, b = ts.cfg.fixed_design
        return {"pv_kwp": {"q25": pv, "median": pv, "q75": pv},
                "battery_kwh": {"q25": b, "median": b, "q75": b}}
    return summarize(ts.phi, ts.cfg.design.summary_samples, rng)


def run_iteration(ts: TrainingState) -> dict:
    """Sample designs, roll out, train the controller and the design distribution, evaluate."""
    cfg, env, i = ts.cfg, ts.env, ts.iteration
    d, n_ep = cfg.designs_per_iteration, cfg.episodes_per_iteration

    # 1. designs for this iteration, spread round-robin over the episodes
    if ts.phi is None:
        designs = np.repeat(np.asarray(cfg.fixed_design, float)[None, :], d, axis=0)
    else:
        designs = sample_designs(ts.phi, d, ts.rngs[_DESIGN])
    owner = np.arange(n_ep) % d
    # episode k of every design shares start day, soc, EV draws and noise
    slots = np.arange(n_ep) // d
    rows = designs[owner]

    # 2-3. rollouts and control training
    critic_losses, actor_objs = [], []
    if ts.agent is not None:
        returns = collect_episodes(env, rows, ts.rngs[_ROLLOUT], agent=ts.agent, buffer=ts.buffer,
                                   sigma=cfg.ddpg.noise_sigma, rng_noise=ts.rngs[_NOISE],
                                   horizon=cfg.episode_length, slots=slots)
        for _ in range(cfg.ddpg.updates_per_iteration):
            diag = ddpg.train_step(ts.agent, ts.buffer, ts.rngs[_REPLAY])
            if not diag["skipped"]:
                critic_losses.append(diag["critic_loss"])
                actor_objs.append(diag["actor_objective"])
    else:
        returns = collect_episodes(env, rows, ts.rngs[_ROLLOUT],
                                   controller=RuleBasedController(env.consts),
                                   horizon=cfg.episode_length, slots=slots)

    # 4-5. design update from the mean return of each design's episodes
    lam = ts.schedule(i) if ts.phi is not None else 0.0
    dloss = 0.0
    if ts.phi is not None:
        per_design = np.array([returns[owner == k].mean() for k in range(d)])
        dloss, grads = design_loss(ts.phi, designs, per_design, lam,
                                   standardize_returns=cfg.design.standardize_returns)
        ts.phi, ts.phi_opt = update_design(ts.phi, grads, ts.phi_opt, cfg.design.lr)

    # 6. evaluations with the deterministic controller
    controller = controller_for(ts)
    n_eval = cfg.eval.episodes
    rng_v = _rng(ts.seed, _EVAL_VAL, i)
    v_mean, v_std, _ = evaluate(controller, env, _eval_designs(ts, n_eval, rng_v), "validation",
                                cfg.eval.validation_horizon, n_eval, rng_v)
    lt_now = i % cfg.eval.long_term_every == 0 or i == cfg.iterations - 1
    if lt_now:
        rng_l = _rng(ts.seed, _EVAL_LT, i)
        lt_mean, lt_std, _ = evaluate(controller, env, _eval_designs(ts, n_eval, rng_l), "training",
                                      cfg.eval.long_term_horizon, n_eval, rng_l)
        ts.last_long_term = (lt_mean, lt_std)
    summary = _design_summary(ts, _rng(ts.seed, _SUMMARY, i))

    record = {
        "iteration": i,
        "entropy_weight": float(lam),
        "weekly_mean": float(np.mean(returns)),
        "weekly_std": float(np.std(returns)),
        "long_term_mean": float(ts.last_long_term[0]),
        "long_term_std": float(ts.last_long_term[1]),
        "long_term_evaluated": int(lt_now),
        "validation_mean": v_mean,
        "validation_std": v_std,
        "pv_q25": float(summary["pv_kwp"]["q25"]),
        "pv_median": float(summary["pv_kwp"]["median"]),
        "pv_q75": float(summary["pv_kwp"]["q75"]),
        "battery_q25": float(summary["battery_kwh"]["q25"]),
        "battery_median": float(summary["battery_kwh"]["median"]),
        "battery_q75": float(summary["battery_kwh"]["q75"]),
        "critic_loss": float(np.mean(critic_losses)) if critic_losses else 0.0,
        "actor_objective": float(np.mean(actor_objs)) if actor_objs else 0.0,
        "design_loss": float(dloss),
    }
    ts.iteration += 1
    return record


def _write_csv(path: Path, rows: list[dict], fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(r[f]) if isinstance(r[f], float) else r[f] for f in fields])


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir=None, env: BuildingEnv | None = None,
                   progress=None) -> tuple[list[dict], TrainingState]:
    """Train one seed for ``cfg.iterations`` iterations.

    When ``out_dir`` is given it receives metrics.jsonl / metrics.csv (fully
    deterministic), timing.csv (wall clock), the final mixture and network checkpoints.
    """
    ts = init_training(cfg, seed, env)
    out = Path(out_dir) if out_dir is not None else None
    records, timing = [], []
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "DONE").unlink(missing_ok=True)
        dump_config(cfg.replace(seeds=(seed,)), out / "config.yaml")
        fh = open(out / "metrics.jsonl", "w")
    try:
        for _ in range(cfg.iterations):
            t0 = time.perf_counter()
            rec = run_iteration(ts)
            timing.append({"iteration": rec["iteration"], "wall_time_s": time.perf_counter() - t0})
            records.append(rec)
            if fh is not None:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if progress is not None:
                progress(rec)
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        _write_csv(out / "metrics.csv", records, METRIC_FIELDS)
        _write_csv(out / "timing.csv", timing, ("iteration", "wall_time_s"))
        if ts.phi is not None:
            (out / "final_mixture.json").write_text(json.dumps(ts.phi.to_dict(), indent=1))
        if ts.agent is not None:
            nn.save_network(ts.agent.actor, out / "actor.ckpt")
            nn.save_network(ts.agent.critic, out / "critic.ckpt")
        (out / "DONE").write_text(cfg.fingerprint() + "\n")
    return records, ts


def aggregate(per_seed: dict[int, list[dict]]) -> list[dict]:
    """Per-iteration median and quartiles of every metric across seeds."""
    runs = [r for r in per_seed.values() if r]
    if not runs:
        return []
    n_iter = min(len(r) for r in runs)
    rows = []
    for i in range(n_iter):
        row = {"iteration": i, "n_seeds": len(runs)}
        for f in METRIC_FIELDS[1:]:
            vals = np.array([r[i][f] for r in runs], dtype=float)
            q25, q50, q75 = np.percentile(vals, [25, 50, 75])
            row[f"{f}_median"], row[f"{f}_q25"], row[f"{f}_q75"] = float(q50), float(q25), float(q75)
        rows.append(row)
    return rows


def final_table(per_seed: dict[int, list[dict]], scenario: str) -> dict:
    """Last-iteration mean and std across seeds for training / long-term / validation returns."""
    lasts = [r[-1] for r in per_seed.values() if r]
    row = {"scenario": scenario, "n_seeds": len(lasts)}
    for name, key in TABLE_METRICS:
        vals = np.array([r[key] for r in lasts], dtype=float)
        row[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
        row[f"{name}_std"] = float(vals.std()) if vals.size else math.nan
    return row


def _seed_done(seed_dir: Path, cfg: ExperimentConfig) -> bool:
    done = seed_dir / "DONE"
    return done.exists() and done.read_text().strip() == cfg.fingerprint()


def run_seed_sweep(cfg: ExperimentConfig, out_dir, seeds=None, env: BuildingEnv | None = None,
                   progress=None) -> dict:
    """Run every seed into ``out_dir/seed_<k>``; skips seeds already finished with the
    same config. A failing seed is logged to ``error.txt`` and the sweep continues."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("seed list is empty")
    env = build_env(cfg) if env is None else env
    per_seed, failures = {}, {}
    for seed in seeds:
        seed_dir = out / f"seed_{seed}"
        if _seed_done(seed_dir, cfg):
            per_seed[seed] = read_metrics(seed_dir / "metrics.jsonl")
            continue
        try:
            per_seed[seed], _ = run_experiment(cfg, seed, seed_dir, env=env, progress=progress)
            (seed_dir / "error.txt").unlink(missing_ok=True)
        except Exception:
            failures[seed] = traceback.format_exc()
            seed_dir.mkdir(parents=True, exist_ok=True)
            (seed_dir / "error.txt").write_text(failures[seed])
            log.error("seed %s failed:\n%s", seed, failures[seed])
    agg = aggregate(per_seed)
    if agg:
        _write_csv(out / "aggregate.csv", agg, list(agg[0].keys()))
    table = final_table(per_seed, cfg.scenario)
    _write_csv(out / "final_summary.csv", [table], list(table.keys()))
    return {"per_seed": per_seed, "aggregate": agg, "final": table, "failures": failures}


def fixed_baseline_config(cfg: ExperimentConfig, design) -> ExperimentConfig:
    d = design.as_array() if isinstance(design, Design) else np.asarray(design, float)
    return cfg.replace(scenario="fixed_design", fixed_design=(float(d[0]), float(d[1])),
                       fixed_controller="rule_based")
