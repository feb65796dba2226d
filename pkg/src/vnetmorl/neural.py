"""Dense ReLU networks with hand-written backpropagation and optimizers."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

CHECKPOINT_FORMAT = "vnetmorl-network"
CHECKPOINT_VERSION = 1

PRESETS = {
    "mlp128x3": (128, 128, 128),
    "mlp256x4": (256, 256, 256, 256),
    "mlp64x2": (64, 64),
}


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: Tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1 or not self.hidden:
            raise NetworkError("dimensions must be >= 1 and at least one hidden layer is required")
        if any(h < 1 for h in self.hidden):
            raise NetworkError("hidden widths must be >= 1")
        if self.activation != "relu":
            raise NetworkError(f"unsupported activation {self.activation!r}")
        if self.output_activation not in ("linear", "sigmoid"):
            raise NetworkError(f"unsupported output activation {self.output_activation!r}")

    @property
    def sizes(self) -> List[int]:
        return [self.input_dim, *self.hidden, self.output_dim]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 3e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise NetworkError("learning rate must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise NetworkError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Parameters:
    """Per-layer weights (fan_in x fan_out) and biases."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> List[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_parameters(spec: NetworkSpec, rng: np.random.Generator, scheme: str = "he_uniform") -> Parameters:
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        if scheme == "he_uniform":
            limit = math.sqrt(6.0 / fan_in)
        elif scheme == "glorot_uniform":
            limit = math.sqrt(6.0 / (fan_in + fan_out))
        else:
            raise NetworkError(f"unknown init scheme {scheme!r}")
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Parameters(weights, biases)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    output: np.ndarray
    squeeze: bool


def _check_shapes(spec: NetworkSpec, params: Parameters) -> None:
    sizes = spec.sizes
    if len(params.weights) != len(sizes) - 1:
        raise NetworkError("layer count does not match the network spec")
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
            raise NetworkError(f"layer {k} has shape {w.shape}/{b.shape}")


def forward(spec: NetworkSpec, params: Parameters, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise NetworkError(f"expected input width {spec.input_dim}, got shape {x.shape}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
        elif spec.output_activation == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-z))
        else:
            h = z
    out = h[0] if squeeze else h
    return out, ForwardCache(inputs, pre, h, squeeze)


def backward(spec: NetworkSpec, params: Parameters, cache: ForwardCache,
             output_gradient: np.ndarray) -> Parameters:
    """Reverse-mode gradients of ``sum(output * output_gradient)`` w.r.t. the parameters."""
    g = np.asarray(output_gradient, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.output.shape:
        raise NetworkError(f"output gradient shape {g.shape} != output shape {cache.output.shape}")
    if spec.output_activation == "sigmoid":
        g = g * cache.output * (1.0 - cache.output)
    n_layers = len(params.weights)
    grad_w: List[Optional[np.ndarray]] = [None] * n_layers
    grad_b: List[Optional[np.ndarray]] = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        grad_w[k] = cache.inputs[k].T @ g
        grad_b[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ params.weights[k].T) * (cache.pre_activations[k - 1] > 0)
    return Parameters(grad_w, grad_b)


class Optimizer:
    """SGD or Adam applied in place to a :class:`Parameters` object."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def apply_update(self, params: Parameters, grads: Parameters) -> Parameters:
        targets = params.arrays()
        steps = grads.arrays()
        if len(targets) != len(steps) or any(p.shape != g.shape for p, g in zip(targets, steps)):
            raise NetworkError("gradient shapes do not match parameters")
        if not all(np.isfinite(g).all() for g in steps):
            raise NetworkError("non-finite gradient; update rejected")
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            for p, g in zip(targets, steps):
                p -= lr * g
            return params
        if self.m is None:
            self.m = [np.zeros_like(p) for p in targets]
            self.v = [np.zeros_like(p) for p in targets]
        self.t += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(targets, steps, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
        return params


def clone_into(src: Parameters, dst: Parameters) -> None:
    if len(src.weights) != len(dst.weights):
        raise NetworkError("cannot clone between different architectures")
    for s, d in zip(src.arrays(), dst.arrays()):
        if s.shape != d.shape:
            raise NetworkError("cannot clone between different architectures")
        d[...] = s


def all_finite(params: Parameters) -> bool:
    return all(np.isfinite(a).all() for a in params.arrays())


class QNetwork:
    """A network spec bundled with its parameters."""

    def __init__(self, spec: NetworkSpec, params: Parameters):
        _check_shapes(spec, params)
        self.spec = spec
        self.params = params

    @classmethod
    def create(cls, spec: NetworkSpec, rng: np.random.Generator, scheme: str = "he_uniform") -> "QNetwork":
        return cls(spec, init_parameters(spec, rng, scheme))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.params, x)[0]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        return forward(self.spec, self.params, x)

    def backward(self, cache: ForwardCache, output_gradient: np.ndarray) -> Parameters:
        return backward(self.spec, self.params, cache, output_gradient)

    def clone(self) -> "QNetwork":
        return QNetwork(self.spec, self.params.copy())

    def load_from(self, other: "QNetwork") -> None:
        if other.spec != self.spec:
            raise NetworkError("network specs differ")
        clone_into(other.params, self.params)

    def to_dict(self) -> dict:
        spec = asdict(self.spec)
        spec["hidden"] = list(self.spec.hidden)
        return {
            "spec": spec,
            "layers": [{"weight": w.tolist(), "bias": b.tolist()}
                       for w, b in zip(self.params.weights, self.params.biases)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QNetwork":
        try:
            spec = NetworkSpec(**{**data["spec"], "hidden": tuple(data["spec"]["hidden"])})
            weights = [np.array(layer["weight"], dtype=float).reshape(i, o)
                       for layer, i, o in zip(data["layers"], spec.sizes[:-1], spec.sizes[1:])]
            biases = [np.array(layer["bias"], dtype=float) for layer in data["layers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed network record: {exc}") from exc
        return cls(spec, Parameters(weights, biases))


def save_checkpoint(path, networks: dict, metadata: Optional[dict] = None) -> None:
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": metadata or {},
        "networks": {name: net.to_dict() for name, net in networks.items()},
    }
    Path(path).write_text(json.dumps(record), encoding="utf-8")


def load_checkpoint(path) -> Tuple[dict, dict]:
    """Returns ``(networks, metadata)``; raises :class:`NetworkError` on corrupt files."""
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise NetworkError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(record, dict) or record.get("format") != CHECKPOINT_FORMAT:
        raise NetworkError(f"{path} is not a network checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise NetworkError(f"unsupported checkpoint version {record.get('version')}")
    networks = {name: QNetwork.from_dict(data) for name, data in record.get("networks", {}).items()}
    return networks, record.get("metadata", {})
