"""Dense feedforward networks with hand-written backprop, Adam, soft updates and clipping.

Inputs are row batches of shape (batch, features); a 1-D input is treated as a
batch of one and the output is squeezed back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")
CHECKPOINT_MAGIC = b"CODESIGN-NET 1\n"


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bad shapes {w.shape}, {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input {w.shape[0]} does not chain")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                             list(self.activations))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "NetworkParams":
        arrays, i = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(vec[i:i + a.size], dtype=float).reshape(a.shape).copy())
            i += a.size
        return NetworkParams(arrays[0::2], arrays[1::2], list(self.activations))


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def scaled(self, k: float) -> "GradientSet":
        return GradientSet([w * k for w in self.weights], [b * k for b in self.biases])


def init_network(sizes, activations, rng: np.random.Generator, final_scale: float = 1.0) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; the last layer is multiplied by ``final_scale``."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    ws[-1] *= final_scale
    bs[-1] *= final_scale
    return NetworkParams(ws, bs, list(activations))


def mlp(in_dim: int, hidden, out_dim: int, out_activation: str, rng, final_scale: float = 1.0):
    sizes = [in_dim, *hidden, out_dim]
    acts = ["relu"] * len(hidden) + [out_activation]
    return init_network(sizes, acts, rng, final_scale)


def _activate(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    squeeze: bool = False


def forward(params: NetworkParams, x, cache: bool = False):
    """Evaluate the network. With ``cache=True`` also return the intermediates
    that ``backward`` needs."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input dim {h.shape[1]} != network input {params.weights[0].shape[0]}")
    fc = ForwardCache(squeeze=squeeze)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        fc.inputs.append(h)
        h = _activate(h @ w + b, act)
        fc.outputs.append(h)
    out = h[0] if squeeze else h
    return (out, fc) if cache else out


def backward(params: NetworkParams, fc: ForwardCache, upstream):
    """Gradients of sum(output * upstream) w.r.t. every parameter and the input.

    Returns (GradientSet, input_gradient). ReLU uses subgradient 0 at 0.
    """
    g = np.asarray(upstream, dtype=float)
    if fc.squeeze:
        g = g[None, :]
    if g.shape != fc.outputs[-1].shape:
        raise ValueError(f"upstream shape {g.shape} != output shape {fc.outputs[-1].shape}")
    n_layers = len(params.weights)
    dws, dbs = [None] * n_layers, [None] * n_layers
    for i in reversed(range(n_layers)):
        act, out = params.activations[i], fc.outputs[i]
        if act == "relu":
            g = g * (out > 0)
        elif act == "tanh":
            g = g * (1.0 - out * out)
        dws[i] = fc.inputs[i].T @ g
        dbs[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return GradientSet(dws, dbs), (g[0] if fc.squeeze else g)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)


def adam_update(arrays, grads, state: AdamState, lr: float):
    """Bias-corrected Adam on parallel lists of arrays. Returns (new_arrays, new_state)."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new, ms, vs = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new.append(a - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        ms.append(m)
        vs.append(v)
    return new, AdamState(ms, vs, t, b1, b2, state.eps)


def adam_init(params: NetworkParams) -> AdamState:
    return AdamState.zeros_like(params.arrays())


def optimizer_step(params: NetworkParams, grads: GradientSet, state: AdamState, lr: float):
    """One descent step (parameters move against ``grads``)."""
    new, state = adam_update(params.arrays(), grads.arrays(), state, lr)
    return NetworkParams(new[0::2], new[1::2], list(params.activations)), state


def soft_update(target: NetworkParams, source: NetworkParams, tau: float) -> NetworkParams:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    ws = [tau * s + (1.0 - tau) * t for s, t in zip(source.weights, target.weights)]
    bs = [tau * s + (1.0 - tau) * t for s, t in zip(source.biases, target.biases)]
    return NetworkParams(ws, bs, list(target.activations))


def clip_gradients(grads: GradientSet, max_norm: float) -> GradientSet:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = grads.norm()
    if norm > max_norm:
        return grads.scaled(max_norm / norm)
    return grads


def save_network(params: NetworkParams, path) -> Path:
    """Write a checkpoint: magic line, one JSON header line with the layer
    shapes and activations, then every W (row-major) and b as little-endian float64."""
    header = {"layers": [{"in": int(w.shape[0]), "out": int(w.shape[1]), "activation": a}
                         for w, a in zip(params.weights, params.activations)]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(params.flat().astype("<f8").tobytes())
    return path


def load_network(path) -> NetworkParams:
    with open(path, "rb") as fh:
        if fh.readline() != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        header = json.loads(fh.readline())
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    ws, bs, acts, i = [], [], [], 0
    for layer in header["layers"]:
        n_in, n_out = layer["in"], layer["out"]
        ws.append(flat[i:i + n_in * n_out].reshape(n_in, n_out).copy())
        i += n_in * n_out
        bs.append(flat[i:i + n_out].copy())
        i += n_out
        acts.append(layer["activation"])
    if i != flat.size:
        raise ValueError(f"{path}: payload size does not match header")
    return NetworkParams(ws, bs, acts)
