import numpy as np
import pytest

from codesign import ddpg, nn
from codesign.env import Design, EnvConstants


def small_agent(rng, hidden=(16, 16), **kw):
    return ddpg.DdpgAgent.create(ddpg.DdpgHyper(hidden=hidden, **kw), rng)


def test_fresh_actor_is_near_zero(env, rng):
    agent = small_agent(rng, hidden=(256, 256))
    st = env.reset("training", Design(5, 10), rng, n=32)
    feats = ddpg.state_features(st, np.tile([5.0, 10.0], (32, 1)), env.consts, agent.hyper)
    u = ddpg.policy_unit(agent.actor, feats, ddpg.design_features(np.tile([5.0, 10.0], (32, 1)),
                                                                  agent.hyper))
    assert np.max(np.abs(u)) < 0.05


def test_unit_to_physical_mapping():
    c = EnvConstants()
    a = ddpg.to_physical(np.array([[1.0, -1.0]]), np.array([[3.0, 10.0]]), c)
    np.testing.assert_array_equal(a, [[10.0, -5.0]])
    b = ddpg.action_bounds(np.array([[3.0, 5.0], [3.0, 10.0]]), c)
    assert b[1, 0] == 2 * b[0, 0] and b[0, 1] == b[1, 1]


def test_features_are_scaled(env, rng):
    d = np.tile([5.0, 10.0], (16, 1))
    st = env.reset("training", d, rng)
    f = ddpg.state_features(st, d, env.consts, ddpg.DdpgHyper())
    assert f.shape == (16, ddpg.STATE_DIM)
    assert np.all(np.abs(f) <= 2.0)


def test_exploration(rng):
    agent = small_agent(rng)
    s = rng.random((5, 9))
    x = rng.random((5, 2))
    c = EnvConstants()
    d = np.tile([4.0, 8.0], (5, 1))
    det = ddpg.policy_action(agent.actor, s, d, c, agent.hyper)
    np.testing.assert_array_equal(ddpg.explore_action(agent.actor, s, d, c, agent.hyper, 0.0, rng), det)
    wild = ddpg.explore_action(agent.actor, s, d, c, agent.hyper, 50.0, rng)
    assert np.all(np.abs(wild) <= ddpg.action_bounds(d, c) + 1e-12)
    # small noise, far from the box edge: mean matches the deterministic action
    s1, x1 = np.repeat(s[:1], 100_000, 0), np.repeat(x[:1], 100_000, 0)
    u = ddpg.explore_unit(agent.actor, s1, x1, 0.1, rng)
    u0 = ddpg.policy_unit(agent.actor, s[:1], x[:1])[0]
    assert np.all(np.abs(u.mean(axis=0) - u0) < 3 * 0.1 / np.sqrt(100_000))


def test_replay_buffer_ring(rng):
    buf = ddpg.ReplayBuffer(5)
    for k in range(3):
        n = 3
        buf.add(np.full((n, 9), k), np.zeros((n, 2)), np.zeros((n, 2)), np.full(n, float(k)),
                np.zeros((n, 9)), np.zeros(n, bool))
    assert len(buf) == 5 and buf.inserted == 9
    # oldest four evicted: remaining rewards are 1 (one copy) and 2 (three) plus one 1
    assert sorted(buf.rewards.tolist()) == [1.0, 1.0, 2.0, 2.0, 2.0]
    batch = buf.sample(64, rng)
    assert batch["states"].shape == (64, 9)
    assert set(batch["rewards"].tolist()) <= {1.0, 2.0}


def test_critic_targets(rng):
    agent = small_agent(rng)
    buf = ddpg.ReplayBuffer(10)
    buf.add(rng.random((4, 9)), rng.random((4, 2)), rng.random((4, 2)), rng.normal(size=4),
            rng.random((4, 9)), np.zeros(4, bool))
    batch = buf.sample(4, rng)
    y0 = ddpg.critic_targets(batch, agent.actor_target, agent.critic_target, 0.0)
    np.testing.assert_array_equal(y0, batch["rewards"])
    zero = agent.critic_target.with_flat(np.zeros_like(agent.critic_target.flat()))
    np.testing.assert_array_equal(ddpg.critic_targets(batch, agent.actor_target, zero, 0.99),
                                  batch["rewards"])


def test_critic_target_hand_computed():
    # actor: a = tanh(sum of inputs * 0.1); critic: q = sum of inputs
    actor = nn.NetworkParams([np.full((11, 2), 0.1)], [np.zeros(2)], ["tanh"])
    critic = nn.NetworkParams([np.ones((13, 1))], [np.zeros(1)], ["linear"])
    s2 = np.arange(9, dtype=float)[None] / 10
    x = np.array([[0.5, 0.25]])
    batch = {"next_states": s2, "designs": x, "rewards": np.array([2.0])}
    a = np.tanh(0.1 * (s2.sum() + x.sum()))
    expected = 2.0 + 0.9 * (s2.sum() + x.sum() + 2 * a)
    assert ddpg.critic_targets(batch, actor, critic, 0.9)[0] == pytest.approx(expected, rel=1e-12)


def test_critic_loss_decreases_on_fixed_batch(rng):
    agent = small_agent(rng)
    buf = ddpg.ReplayBuffer(256)
    buf.add(rng.random((256, 9)), rng.random((256, 2)), rng.uniform(-1, 1, (256, 2)),
            rng.normal(size=256), rng.random((256, 9)), np.zeros(256, bool))
    batch = buf.sample(256, rng)
    y = ddpg.critic_targets(batch, agent.actor_target, agent.critic_target, 0.9)
    losses = []
    critic, opt = agent.critic, agent.critic_opt
    for _ in range(50):
        critic, opt, loss = ddpg.critic_step(critic, opt, batch, y, 1e-3, 1.0)
        losses.append(loss)
    assert losses[-1] < losses[0]


def test_actor_gradient_matches_finite_differences(rng):
    agent = small_agent(rng, hidden=(6, 5))
    s, x = rng.random((7, 9)), rng.random((7, 2))
    g, _ = ddpg.actor_gradient(agent.actor, s, x, agent.critic_dq_da)

    def objective(v):
        u = ddpg.policy_unit(agent.actor.with_flat(v), s, x)
        return -float(nn.forward(agent.critic, ddpg.critic_input(s, x, u)).mean())

    from gradcheck import numeric_grad, rel_error
    assert rel_error(g.flat(), numeric_grad(objective, agent.actor.flat())) < 1e-6


def test_quadratic_bowl_one_dim(rng):
    agent = small_agent(rng)
    c = 0.4

    def bowl(s, x, u):
        return -(u[:, 0] - c) ** 2, np.column_stack([-2 * (u[:, 0] - c), np.zeros(len(u))])

    actor, opt = agent.actor, agent.actor_opt
    for _ in range(500):
        actor, opt, _ = ddpg.actor_step(actor, opt, rng.random((32, 9)), rng.random((32, 2)),
                                        bowl, 1e-3, 1.0)
    u = ddpg.policy_unit(actor, rng.random((64, 9)), rng.random((64, 2)))
    # 5% of the unit action range [-1, 1]
    assert np.all(np.abs(u[:, 0] - c) < 0.1)


def test_train_step_skips_small_buffer(rng):
    agent = small_agent(rng, batch_size=32)
    before = agent.actor.flat().copy(), agent.critic.flat().copy()
    buf = ddpg.ReplayBuffer(100)
    assert ddpg.train_step(agent, buf, rng)["skipped"]
    buf.add(rng.random((10, 9)), rng.random((10, 2)), rng.random((10, 2)), rng.random(10),
            rng.random((10, 9)), np.zeros(10, bool))
    assert ddpg.train_step(agent, buf, rng)["skipped"]
    assert agent.actor.flat().tobytes() == before[0].tobytes()
    assert agent.critic.flat().tobytes() == before[1].tobytes()
    buf.add(rng.random((30, 9)), rng.random((30, 2)), rng.random((30, 2)), rng.random(30),
            rng.random((30, 9)), np.zeros(30, bool))
    out = ddpg.train_step(agent, buf, rng)
    assert not out["skipped"] and np.isfinite(out["critic_loss"])
    assert agent.actor.flat().tobytes() != before[0].tobytes()
    assert agent.updates == 1


def test_hyper_validation():
    with pytest.raises(ValueError):
        ddpg.DdpgHyper(gamma=1.0)
    with pytest.raises(ValueError):
        ddpg.DdpgHyper(noise_sigma=-0.1)
