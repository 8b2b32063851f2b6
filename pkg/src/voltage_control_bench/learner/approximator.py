"""
Small fully-connected networks in numpy with hand-written backward passes.

Inputs are batched row-wise: X has shape (batch, features) and a layer computes X @ W.T + b with W of shape
(out, in). A 1-D input is treated as a batch of one and the output is returned 1-D.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "identity", "tanh")


class ShapeMismatch(ValueError):
    pass


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]

    def __post_init__(self) -> None:
        if not len(self.weights) == len(self.biases) == len(self.activations):
            raise ShapeMismatch("weights, biases and activations must have one entry per layer")
        for k, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ValueError(f"Unknown activation '{act}' in layer {k}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatch(f"Layer {k}: weight {w.shape} and bias {b.shape} are incompatible")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeMismatch(
                    f"Layer {k} expects {w.shape[1]} inputs, previous layer has {self.weights[k - 1].shape[0]}"
                )

    @property
    def input_size(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def output_size(self) -> int:
        return int(self.weights[-1].shape[0])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations))

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class GradientSet:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradientSet":
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


@dataclass
class AdamState:
    m: GradientSet
    v: GradientSet
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(GradientSet.zeros_like(params), GradientSet.zeros_like(params))


@dataclass
class Tape:
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    squeeze: bool = False


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, out: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.where(z > 0, 1.0, 0.0)
    if act == "tanh":
        return 1.0 - out**2
    return np.ones_like(z)


def init_mlp(
    sizes: Sequence[int], output_activation: str, rng: np.random.Generator, final_scale: float = 3e-3
) -> MlpParams:
    """He-initialised rectifier layers; the output layer is drawn uniformly in [-final_scale, final_scale]."""
    weights, biases, activations = [], [], []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        if last:
            weights.append(rng.uniform(-final_scale, final_scale, size=(n_out, n_in)))
            biases.append(rng.uniform(-final_scale, final_scale, size=n_out))
            activations.append(output_activation)
        else:
            weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in)))
            biases.append(np.zeros(n_out))
            activations.append("relu")
    return MlpParams(weights, biases, activations)


def forward(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    batch = x[None, :] if squeeze else x
    if batch.ndim != 2 or batch.shape[1] != params.input_size:
        raise ShapeMismatch(f"Expected input with {params.input_size} features, got shape {x.shape}")

    tape = Tape(squeeze=squeeze)
    a = batch
    for w, b, act in zip(params.weights, params.biases, params.activations):
        tape.inputs.append(a)
        z = a @ w.T + b
        a = _activate(z, act)
        tape.pre_activations.append(z)
        tape.outputs.append(a)
    return (a[0] if squeeze else a), tape


def backward(params: MlpParams, tape: Tape, upstream: np.ndarray) -> Tuple[GradientSet, np.ndarray]:
    """Gradients of sum(upstream * output), summed over the batch, w.r.t. parameters and input."""
    upstream = np.asarray(upstream, dtype=float)
    delta = upstream[None, :] if tape.squeeze else upstream
    if delta.shape != tape.outputs[-1].shape:
        raise ShapeMismatch(f"Upstream gradient {upstream.shape} does not match output {tape.outputs[-1].shape}")

    grad_w: List[np.ndarray] = [np.empty(0)] * len(params.weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(params.weights)
    for k in reversed(range(len(params.weights))):
        dz = delta * _activation_grad(tape.pre_activations[k], tape.outputs[k], params.activations[k])
        grad_w[k] = dz.T @ tape.inputs[k]
        grad_b[k] = dz.sum(axis=0)
        delta = dz @ params.weights[k]
    return GradientSet(grad_w, grad_b), (delta[0] if tape.squeeze else delta)


def _check_congruent(params: MlpParams, other: GradientSet) -> None:
    if len(params.weights) != len(other.weights) or any(
        w.shape != g.shape for w, g in zip(params.weights + params.biases, other.weights + other.biases)
    ):
        raise ShapeMismatch("Parameter and gradient shapes differ")


def adam_step(params: MlpParams, grads: GradientSet, state: AdamState, lr: float) -> Tuple[MlpParams, AdamState]:
    _check_congruent(params, grads)
    _check_congruent(params, state.m)
    step = state.step + 1
    m_new, v_new, w_new, b_new = GradientSet([], []), GradientSet([], []), [], []
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step

    def update(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, ...]:
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g**2
        p = p - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        return p, m, v

    for p, g, m, v in zip(params.weights, grads.weights, state.m.weights, state.v.weights):
        p, m, v = update(p, g, m, v)
        w_new.append(p)
        m_new.weights.append(m)
        v_new.weights.append(v)
    for p, g, m, v in zip(params.biases, grads.biases, state.m.biases, state.v.biases):
        p, m, v = update(p, g, m, v)
        b_new.append(p)
        m_new.biases.append(m)
        v_new.biases.append(v)

    new_state = AdamState(m_new, v_new, step, state.beta1, state.beta2, state.eps)
    return MlpParams(w_new, b_new, list(params.activations)), new_state


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    if [w.shape for w in target.weights + target.biases] != [w.shape for w in online.weights + online.biases]:
        raise ShapeMismatch("Target and online networks have different shapes")
    return MlpParams(
        [(1.0 - tau) * t + tau * o for t, o in zip(target.weights, online.weights)],
        [(1.0 - tau) * t + tau * o for t, o in zip(target.biases, online.biases)],
        list(target.activations),
    )


def save_checkpoint(path: str, networks: Dict[str, MlpParams], scalars: Dict[str, float]) -> None:
    arrays: Dict[str, np.ndarray] = {"format_version": np.array(CHECKPOINT_VERSION)}
    for name, params in networks.items():
        arrays[f"{name}/activations"] = np.array(params.activations)
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{name}/w{k}"] = w
            arrays[f"{name}/b{k}"] = b
    for name, value in scalars.items():
        arrays[f"scalar/{name}"] = np.array(value, dtype=float)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path: str) -> Tuple[Dict[str, MlpParams], Dict[str, float]]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"Checkpoint {path} has format version {version}, expected {CHECKPOINT_VERSION}")
        networks: Dict[str, MlpParams] = {}
        scalars: Dict[str, float] = {}
        for key in data.files:
            if key.startswith("scalar/"):
                scalars[key.split("/", 1)[1]] = float(data[key])
            elif key.endswith("/activations"):
                name = key.rsplit("/", 1)[0]
                activations = [str(a) for a in data[key]]
                n_layers = len(activations)
                networks[name] = MlpParams(
                    [data[f"{name}/w{k}"] for k in range(n_layers)],
                    [data[f"{name}/b{k}"] for k in range(n_layers)],
                    activations,
                )
    return networks, scalars
