import json

import numpy as np
import pytest

from codesign.config import DesignHyper, EvalConfig, ExperimentConfig
from codesign.ddpg import DdpgHyper
from codesign.experiment import (
    METRIC_FIELDS,
    aggregate,
    final_table,
    fixed_baseline_config,
    init_training,
    read_metrics,
    run_experiment,
    run_iteration,
    run_seed_sweep,
)

FAST_EVAL = EvalConfig(episodes=4, long_term_every=2, long_term_horizon=48, validation_horizon=48)


def tiny(scenario="co_optimisation", **kw):
    base = dict(scenario=scenario, iterations=3, designs_per_iteration=2, episodes_per_iteration=4,
                episode_length=24, seeds=(0,), eval=FAST_EVAL,
                ddpg=DdpgHyper(hidden=(16,), batch_size=16, updates_per_iteration=3))
    base.update(kw)
    return ExperimentConfig(**base)


def test_metrics_complete_and_finite(env):
    recs, _ = run_experiment(tiny(), 0, env=env)
    assert len(recs) == 3
    for r in recs:
        assert set(r) == set(METRIC_FIELDS)
        assert all(np.isfinite(float(r[f])) for f in METRIC_FIELDS)
    assert [r["long_term_evaluated"] for r in recs] == [1, 0, 1]
    assert recs[1]["long_term_mean"] == recs[0]["long_term_mean"]


def test_design_only_never_touches_networks(env):
    ts = init_training(tiny("design_only"), 0, env)
    assert ts.agent is None
    phi0 = ts.phi.flat().copy()
    recs = [run_iteration(ts) for _ in range(3)]
    assert ts.phi.flat().tobytes() != phi0.tobytes()
    assert all(r["critic_loss"] == 0.0 for r in recs)


def test_scenario_controllers():
    assert tiny().controller == "ddpg"
    assert tiny("design_only").controller == "rule_based"
    assert tiny("fixed_design", fixed_design=(1.0, 1.0)).controller == "rule_based"


def test_fixed_design_keeps_everything(env):
    cfg = tiny("fixed_design", fixed_design=(4.0, 6.0))
    ts = init_training(cfg, 0, env)
    recs = [run_iteration(ts) for _ in range(3)]
    assert ts.phi is None and ts.agent is None
    for r in recs:
        assert r["pv_median"] == 4.0 and r["battery_q75"] == 6.0 and r["design_loss"] == 0.0


def test_fixed_design_with_ddpg_keeps_design(env):
    cfg = tiny("fixed_design", fixed_design=(4.0, 6.0), fixed_controller="ddpg")
    ts = init_training(cfg, 0, env)
    a0 = ts.agent.actor.flat().copy()
    run_iteration(ts)
    run_iteration(ts)
    assert ts.phi is None and ts.agent.actor.flat().tobytes() != a0.tobytes()


def test_entropy_weight_reaches_zero_halfway(env):
    recs, _ = run_experiment(tiny("design_only", iterations=6), 0, env=env)
    assert recs[0]["entropy_weight"] == pytest.approx(0.1)
    assert all(r["entropy_weight"] == 0.0 for r in recs[3:])


def test_run_is_bit_reproducible(env, tmp_path):
    run_experiment(tiny(), 5, tmp_path / "a", env=env)
    run_experiment(tiny(), 5, tmp_path / "b", env=env)
    for name in ("metrics.jsonl", "metrics.csv", "actor.ckpt", "final_mixture.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_output_files(env, tmp_path):
    run_experiment(tiny(), 0, tmp_path, env=env)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.yaml", "metrics.jsonl", "metrics.csv", "timing.csv", "final_mixture.json",
            "actor.ckpt", "critic.ckpt", "DONE"} <= names
    assert len(read_metrics(tmp_path / "metrics.jsonl")) == 3
    assert "wall_time_s" in (tmp_path / "timing.csv").read_text()


def test_sweep_files_and_resume(env, tmp_path):
    cfg = tiny("design_only", seeds=(0, 1, 2))
    res = run_seed_sweep(cfg, tmp_path, env=env)
    assert sorted(p.name for p in tmp_path.glob("seed_*")) == ["seed_0", "seed_1", "seed_2"]
    assert (tmp_path / "aggregate.csv").exists() and (tmp_path / "final_summary.csv").exists()
    assert not res["failures"]
    stamp = (tmp_path / "seed_1" / "metrics.jsonl").stat().st_mtime_ns
    again = run_seed_sweep(cfg, tmp_path, env=env)
    assert (tmp_path / "seed_1" / "metrics.jsonl").stat().st_mtime_ns == stamp
    assert again["per_seed"] == res["per_seed"]


def test_sweep_records_failures(env, tmp_path, monkeypatch):
    import codesign.experiment as ex

    real = ex.run_experiment

    def flaky(cfg, seed, *a, **kw):
        if seed == 1:
            raise RuntimeError("boom")
        return real(cfg, seed, *a, **kw)

    monkeypatch.setattr(ex, "run_experiment", flaky)
    res = run_seed_sweep(tiny("design_only", seeds=(0, 1)), tmp_path, env=env)
    assert list(res["failures"]) == [1] and list(res["per_seed"]) == [0]
    assert "boom" in (tmp_path / "seed_1" / "error.txt").read_text()


def test_sweep_needs_seeds(env, tmp_path):
    with pytest.raises(ValueError):
        run_seed_sweep(tiny(), tmp_path, seeds=(), env=env)


def test_aggregate_of_identical_runs_is_the_run(env):
    recs, _ = run_experiment(tiny("design_only"), 0, env=env)
    agg = aggregate({0: recs, 1: recs, 2: recs})
    for a, r in zip(agg, recs):
        for f in METRIC_FIELDS[1:]:
            assert a[f"{f}_median"] == a[f"{f}_q25"] == a[f"{f}_q75"] == pytest.approx(r[f])


def test_final_table_schema():
    recs = {k: [{"weekly_mean": k, "long_term_mean": 2 * k, "validation_mean": -k}] for k in (1, 3)}
    row = final_table(recs, "design_only")
    assert row["training_mean"] == 2 and row["long_term_mean"] == 4 and row["validation_std"] == 1
    assert set(row) == {"scenario", "n_seeds", "training_mean", "training_std", "long_term_mean",
                        "long_term_std", "validation_mean", "validation_std"}


def test_fixed_baseline_config():
    cfg = fixed_baseline_config(tiny(), np.array([12.0, 0.01]))
    assert cfg.scenario == "fixed_design" and cfg.fixed_design == (12.0, 0.01)
    assert cfg.controller == "rule_based"


def test_mixture_file_matches_final_state(env, tmp_path):
    _, ts = run_experiment(tiny("design_only"), 0, tmp_path, env=env)
    saved = json.loads((tmp_path / "final_mixture.json").read_text())
    np.testing.assert_array_equal(saved["mu"], ts.phi.mu)
