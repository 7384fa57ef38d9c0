import math

import numpy as np
import pytest

from codesign.design_dist import (
    DomainError,
    EntropySchedule,
    MixtureParams,
    adam_init_mixture,
    design_loss,
    init_mixture,
    log_prob,
    log_prob_grad,
    sample_designs,
    standardize,
    summarize,
    update_design,
)
from gradcheck import numeric_grad, rel_error


def random_phi(rng, K=3, D=2):
    return MixtureParams(rng.normal(size=K), rng.normal(size=(K, D)), rng.uniform(-0.7, 0.4, (K, D)))


def test_init(rng):
    phi = init_mixture(rng)
    np.testing.assert_allclose(phi.weights, [1 / 3] * 3)
    assert np.all(phi.sigma == 1.0)
    assert np.all((phi.mu >= 0) & (phi.mu < 1))


def test_samples_positive_and_degenerate_limit(rng):
    for _ in range(20):
        assert np.all(sample_designs(random_phi(rng), 500, rng) > 0)
    phi = MixtureParams([30.0, 0.0, 0.0], [[1.0, 2.0], [0, 0], [0, 0]], np.full((3, 2), math.log(1e-6)))
    x = sample_designs(phi, 200, rng)
    np.testing.assert_allclose(x, np.exp([[1.0, 2.0]] * 200), rtol=1e-4)
    s = summarize(phi, rng=rng)
    assert s["pv_kwp"]["median"] == pytest.approx(math.e, rel=1e-4)


def test_single_component_log_moments(rng):
    phi = MixtureParams([0.0], [[0.3, -1.2]], [[math.log(0.8), math.log(1.5)]])
    y = np.log(sample_designs(phi, 100_000, rng))
    se = np.array([0.8, 1.5]) / math.sqrt(100_000)
    assert np.all(np.abs(y.mean(axis=0) - [0.3, -1.2]) < 4 * se)


def test_log_prob_closed_form():
    phi = MixtureParams([0.0], [[0.0, 0.0]], [[0.0, 0.0]])
    assert log_prob(phi, [[1.0, 1.0]])[0] == pytest.approx(-math.log(2 * math.pi))
    assert log_prob(phi, [[1.0, 1.0]])[0] == pytest.approx(-1.8379, abs=1e-4)


def test_identical_components_equal_single(rng):
    one = MixtureParams([0.0], [[0.5, 1.0]], [[0.1, -0.3]])
    three = MixtureParams([0.2, -1.0, 3.0], [[0.5, 1.0]] * 3, [[0.1, -0.3]] * 3)
    x = sample_designs(one, 50, rng)
    np.testing.assert_allclose(log_prob(one, x), log_prob(three, x), rtol=1e-12)


def test_density_normalises(rng):
    phi = random_phi(rng)
    # importance sampling with a broad log-normal proposal
    m, s = 0.0, 3.0
    y = rng.normal(m, s, size=(200_000, 2))
    x = np.exp(y)
    log_q = np.sum(-y - math.log(s) - 0.5 * math.log(2 * math.pi) - 0.5 * ((y - m) / s) ** 2, axis=1)
    est = np.mean(np.exp(log_prob(phi, x) - log_q))
    assert est == pytest.approx(1.0, abs=0.02)


def test_domain_error():
    phi = MixtureParams([0.0], [[0.0, 0.0]], [[0.0, 0.0]])
    with pytest.raises(DomainError):
        log_prob(phi, [[0.0, 1.0]])
    with pytest.raises(DomainError):
        log_prob(phi, [[-1.0, 1.0]])


def test_log_prob_grad_finite_differences(rng):
    for _ in range(5):
        phi = random_phi(rng)
        x = sample_designs(phi, 6, rng)
        _, grads = log_prob_grad(phi, x)
        analytic = np.concatenate([g.sum(axis=0).ravel() for g in grads])
        num = numeric_grad(lambda v: float(log_prob(phi.with_flat(v), x).sum()), phi.flat())
        assert rel_error(analytic, num) < 1e-6


def test_design_loss_single_design_fd(rng):
    phi = random_phi(rng)
    x = sample_designs(phi, 1, rng)
    loss, g = design_loss(phi, x, [-3.0], 0.05, standardize_returns=False)
    f = lambda v: design_loss(phi.with_flat(v), x, [-3.0], 0.05, standardize_returns=False)[0]
    num = numeric_grad(f, phi.flat())
    assert rel_error(g.mu, num.reshape(-1)[3:9].reshape(3, 2)) < 1e-5
    assert rel_error(g.flat(), num) < 1e-5


def test_equal_returns_zero_advantage(rng):
    phi = random_phi(rng)
    x = sample_designs(phi, 8, rng)
    loss, g = design_loss(phi, x, np.full(8, -7.0), 0.0)
    assert loss == 0.0 and np.all(g.flat() == 0)
    assert np.all(standardize(np.full(4, 2.0)) == 0)


def test_entropy_pressure_on_frozen_sample(rng):
    phi = random_phi(rng)
    x = sample_designs(phi, 64, rng)
    before = -log_prob(phi, x).mean()
    _, g = design_loss(phi, x, np.zeros(64), 0.1)
    phi2, _ = update_design(phi, g, adam_init_mixture(phi), 1e-3)
    assert -log_prob(phi2, x).mean() > before


def test_update_design_zero_gradient_and_sigma_positive(rng):
    phi = random_phi(rng)
    st = adam_init_mixture(phi)
    zero = MixtureParams.from_arrays([np.zeros_like(a) for a in phi.arrays()])
    same, _ = update_design(phi, zero, st, 0.1)
    assert same.flat().tobytes() == phi.flat().tobytes()
    for _ in range(10_000):
        g = MixtureParams.from_arrays([rng.normal(scale=100, size=a.shape) for a in phi.arrays()])
        phi, st = update_design(phi, g, st, 0.1)
    assert np.all(phi.sigma > 0) and np.all(np.isfinite(phi.flat()))


def test_entropy_schedule():
    s = EntropySchedule(0.1, 500)
    assert s(0) == 0.1 and s(250) == 0.0 and s(499) == 0.0
    assert s(125) == pytest.approx(0.05)


def test_summary_quartiles_ordered(rng):
    s = summarize(random_phi(rng), rng=rng)
    for dim in s.values():
        assert dim["q25"] <= dim["median"] <= dim["q75"]
        assert dim["iqr"] == pytest.approx(dim["q75"] - dim["q25"])


def test_dict_roundtrip(rng):
    phi = random_phi(rng)
    assert MixtureParams.from_dict(phi.to_dict()).flat().tobytes() == phi.flat().tobytes()


def test_toy_convergence_one_dim(rng):
    phi = init_mixture(rng, dim=1)
    st = adam_init_mixture(phi)
    sched = EntropySchedule(0.1, 1500)
    for i in range(1500):
        x = sample_designs(phi, 8, rng)
        _, g = design_loss(phi, x, -(np.log(x[:, 0]) - 1.5) ** 2, sched(i))
        phi, st = update_design(phi, g, st, 5e-3)
    assert abs(phi.log_mean()[0] - 1.5) < 0.1
