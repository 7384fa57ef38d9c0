"""Log-normal mixture over positive designs and its score-function update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import AdamState, adam_update

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DomainError(ValueError):
    pass


@dataclass
class MixtureParams:
    """logits: (K,) unnormalised weights; mu, log_sigma: (K, D) in log-design space."""

    logits: np.ndarray
    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.log_sigma = np.asarray(self.log_sigma, dtype=float)
        k = self.logits.shape[0]
        if self.mu.shape != self.log_sigma.shape or self.mu.shape[0] != k:
            raise ValueError("inconsistent mixture shapes")

    @property
    def n_components(self) -> int:
        return self.logits.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def weights(self) -> np.ndarray:
        z = np.exp(self.logits - self.logits.max())
        return z / z.sum()

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    def arrays(self) -> list[np.ndarray]:
        return [self.logits, self.mu, self.log_sigma]

    @classmethod
    def from_arrays(cls, arrays) -> "MixtureParams":
        return cls(*[np.array(a, dtype=float) for a in arrays])

    def copy(self) -> "MixtureParams":
        return MixtureParams.from_arrays(self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec) -> "MixtureParams":
        out, i = [], 0
        for a in self.arrays():
            out.append(np.asarray(vec[i:i + a.size], dtype=float).reshape(a.shape))
            i += a.size
        return MixtureParams.from_arrays(out)

    def log_mean(self) -> np.ndarray:
        """Mixture mean of log(x), per dimension."""
        return self.weights @ self.mu

    def to_dict(self) -> dict:
        return {"logits": self.logits.tolist(), "mu": self.mu.tolist(),
                "log_sigma": self.log_sigma.tolist()}

    @classmethod
    def from_dict(cls, d) -> "MixtureParams":
        return cls(d["logits"], d["mu"], d["log_sigma"])


def init_mixture(rng: np.random.Generator, n_components: int = 3, dim: int = 2,
                 sigma: float = 1.0) -> MixtureParams:
    """Random log-means in [0, 1), wide equal sigmas, uniform weights."""
    return MixtureParams(
        logits=np.zeros(n_components),
        mu=rng.random((n_components, dim)),
        log_sigma=np.full((n_components, dim), np.log(sigma)),
    )


def sample_designs(phi: MixtureParams, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one sample")
    cdf = np.cumsum(phi.weights)
    k = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"),
                   phi.n_components - 1)
    z = rng.standard_normal((n, phi.dim))
    return np.exp(phi.mu[k] + phi.sigma[k] * z)


def _component_terms(phi: MixtureParams, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != phi.dim:
        raise ValueError(f"designs must have {phi.dim} columns")
    if not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise DomainError("log-normal mixture density is only defined for positive finite x")
    y = np.log(x)
    diff = y[:, None, :] - phi.mu[None, :, :]
    inv_var = np.exp(-2.0 * phi.log_sigma)[None, :, :]
    logw = phi.logits - phi.logits.max()
    logw = logw - np.log(np.exp(logw).sum())
    # (n, K) joint log weight + component log density
    comp = logw[None, :] + np.sum(
        -y[:, None, :] - phi.log_sigma[None] - LOG_SQRT_2PI - 0.5 * diff * diff * inv_var, axis=2)
    return comp, diff, inv_var


def _logsumexp(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def log_prob(phi: MixtureParams, x) -> np.ndarray:
    comp, _, _ = _component_terms(phi, x)
    return _logsumexp(comp, axis=1)


def log_prob_grad(phi: MixtureParams, x):
    """Per-sample log density and its gradient as a list [d_logits (n,K), d_mu (n,K,D), d_log_sigma (n,K,D)]."""
    comp, diff, inv_var = _component_terms(phi, x)
    lp = _logsumexp(comp, axis=1)
    resp = np.exp(comp - lp[:, None])
    d_logits = resp - phi.weights[None, :]
    d_mu = resp[:, :, None] * diff * inv_var
    d_log_sigma = resp[:, :, None] * (diff * diff * inv_var - 1.0)
    return lp, [d_logits, d_mu, d_log_sigma]


def standardize(returns, min_std: float = 1e-8) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    return (r - r.mean()) / max(float(r.std()), min_std)


def design_loss(phi: MixtureParams, designs, returns, lam: float, standardize_returns: bool = True):
    """Score-function loss -1/d * sum(log p(x_i) * R_i - lam * log p(x_i)).

    Returns (loss, gradient as MixtureParams-shaped container).
    """
    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    returns = np.asarray(returns, dtype=float).ravel()
    if designs.shape[0] != returns.shape[0] or returns.shape[0] < 1:
        raise ValueError("designs and returns must have the same nonzero length")
    adv = standardize(returns) if standardize_returns else returns
    coef = adv - lam
    lp, grads = log_prob_grad(phi, designs)
    d = returns.shape[0]
    loss = -float(np.sum(lp * coef)) / d
    g = [-np.tensordot(coef, gi, axes=(0, 0)) / d for gi in grads]
    return loss, MixtureParams.from_arrays(g)


def adam_init_mixture(phi: MixtureParams) -> AdamState:
    return AdamState.zeros_like(phi.arrays())


def update_design(phi: MixtureParams, grads: MixtureParams, state: AdamState, lr: float):
    """One Adam descent step on (logits, mu, log_sigma)."""
    new, state = adam_update(phi.arrays(), grads.arrays(), state, lr)
    return MixtureParams.from_arrays(new), state


@dataclass(frozen=True)
class EntropySchedule:
    """lam(i) = lam0 * max(0, 1 - 2 i / M): linear decay to zero at the halfway point."""

    initial: float = 0.1
    total_iterations: int = 500

    def __call__(self, i: int) -> float:
        return self.initial * max(0.0, 1.0 - 2.0 * i / self.total_iterations)


def summarize(phi: MixtureParams, n: int = 1000, rng: np.random.Generator | None = None,
              names=("pv_kwp", "battery_kwh")) -> dict:
    """Median and quartiles per design dimension from ``n`` samples."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    x = sample_designs(phi, n, rng)
    q25, q50, q75 = np.percentile(x, [25, 50, 75], axis=0)
    return {name: {"q25": float(q25[j]), "median": float(q50[j]), "q75": float(q75[j]),
                   "iqr": float(q75[j] - q25[j])}
            for j, name in enumerate(names)}
