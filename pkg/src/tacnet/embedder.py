"""Fully-connected embedding network with explicit forward/backward passes.

The embedder maps raw feature vectors to the D-dimensional space where
centroids, references, and projections live.  Gradients are computed by hand
(and pinned by finite-difference tests); the optimizer is Adam over an
explicit parameter list so the training harness can extend it with the
reference vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidStateError,
    NumericalFailureError,
)
from .serialize import CHECKPOINT_MAGIC, read_container, write_container

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class EmbedderConfig:
    input_dim: int
    hidden_dims: tuple = (64, 64)
    output_dim: int = 64
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("all layer dims must be positive")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def dims(self) -> tuple:
        return (self.input_dim, *self.hidden_dims, self.output_dim)


def parameter_count(config: EmbedderConfig) -> int:
    dims = config.dims
    return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class ActivationCache:
    """Everything the backward pass needs: per-layer inputs and pre-activations."""

    layer_inputs: list
    pre_activations: list
    batch: int


@dataclass
class ParameterGradients:
    weights: list
    biases: list


@dataclass
class Embedder:
    """Stack of linear layers; the activation is applied on hidden layers only."""

    config: EmbedderConfig
    weights: list = field(default_factory=list)  # layer i: (dims[i+1], dims[i])
    biases: list = field(default_factory=list)

    @classmethod
    def initialize(cls, config: EmbedderConfig) -> "Embedder":
        """Seeded uniform init scaled by 1/sqrt(fan_in) per layer."""
        rng = np.random.default_rng(config.seed)
        dims = config.dims
        weights, biases = [], []
        for i in range(len(dims) - 1):
            bound = 1.0 / np.sqrt(dims[i])
            weights.append(rng.uniform(-bound, bound, size=(dims[i + 1], dims[i])))
            biases.append(rng.uniform(-bound, bound, size=dims[i + 1]))
        return cls(config=config, weights=weights, biases=biases)

    def clone(self) -> "Embedder":
        return Embedder(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def parameters(self) -> list:
        return [*self.weights, *self.biases]

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.config.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _activate_grad(self, z: np.ndarray) -> np.ndarray:
        if self.config.activation == "relu":
            return (z > 0.0).astype(np.float64)
        return 1.0 - np.tanh(z) ** 2

    def forward(self, x: np.ndarray) -> tuple:
        """Embed a batch (batch x input_dim) -> (batch x output_dim, cache)."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise InvalidDimensionError(
                f"expected batch x {self.config.input_dim}, got {x.shape}"
            )
        h = x
        inputs, pre_acts = [], []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre_acts.append(z)
            h = z if i == last else self._activate(z)
        return h, ActivationCache(layer_inputs=inputs, pre_activations=pre_acts, batch=x.shape[0])

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Forward pass without keeping the cache."""
        return self.forward(x)[0]

    def backward(self, cache: ActivationCache, grad_out: np.ndarray) -> ParameterGradients:
        """Backpropagate grad_out (batch x output_dim) to all parameters."""
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if len(cache.layer_inputs) != len(self.weights):
            raise InvalidStateError("cache does not match this embedder's layers")
        if grad_out.shape != (cache.batch, self.config.output_dim):
            raise InvalidStateError(
                f"grad_out shape {grad_out.shape} does not match cache batch "
                f"({cache.batch} x {self.config.output_dim})"
            )
        d_weights = [None] * len(self.weights)
        d_biases = [None] * len(self.biases)
        delta = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * self._activate_grad(cache.pre_activations[i])
            d_weights[i] = delta.T @ cache.layer_inputs[i]
            d_biases[i] = delta.sum(axis=0)
            if i:
                delta = delta @ self.weights[i]
        return ParameterGradients(weights=d_weights, biases=d_biases)


@dataclass
class OptimizerState:
    """Adam moments for an explicit parameter list (order is the contract)."""

    m: list
    v: list
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list, learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: list, grads: list, state: OptimizerState) -> None:
    """One in-place Adam update; increments the step count."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise InvalidStateError("parameter/gradient/moment lists disagree")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalFailureError("non-finite gradient in optimizer step")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


def apply_gradients(embedder: Embedder, state: OptimizerState, grads: ParameterGradients) -> None:
    """Adam update of the embedder parameters in place."""
    adam_step(embedder.parameters(), [*grads.weights, *grads.biases], state)


def save_checkpoint(path, embedder: Embedder, state: OptimizerState,
                    extra_arrays: dict | None = None, extra_header: dict | None = None) -> None:
    """Serialize parameters, optimizer state, and config (binary container).

    ``extra_arrays``/``extra_header`` let the training harness ride along
    additional parameters (the reference vectors) in the same file.
    """
    cfg = embedder.config
    header = {
        "format": "tacnet-checkpoint-v1",
        "config": {
            "input_dim": cfg.input_dim,
            "hidden_dims": list(cfg.hidden_dims),
            "output_dim": cfg.output_dim,
            "activation": cfg.activation,
            "seed": cfg.seed,
        },
        "optimizer": {
            "step": state.step,
            "learning_rate": state.learning_rate,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
        },
    }
    if extra_header:
        header["extra"] = extra_header
    arrays = {}
    for i, w in enumerate(embedder.weights):
        arrays[f"w{i}"] = w
    for i, b in enumerate(embedder.biases):
        arrays[f"b{i}"] = b
    for i, m in enumerate(state.m):
        arrays[f"adam_m{i}"] = m
    for i, v in enumerate(state.v):
        arrays[f"adam_v{i}"] = v
    for name, arr in (extra_arrays or {}).items():
        arrays[name] = arr
    write_container(path, CHECKPOINT_MAGIC, header, arrays)


def load_checkpoint(path) -> tuple:
    """Inverse of :func:`save_checkpoint`.

    Returns (embedder, optimizer_state, extra_arrays, header); the optimizer
    moment list keeps the order it was saved with.
    """
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    cfg_d = header["config"]
    config = EmbedderConfig(
        input_dim=int(cfg_d["input_dim"]),
        hidden_dims=tuple(cfg_d["hidden_dims"]),
        output_dim=int(cfg_d["output_dim"]),
        activation=cfg_d["activation"],
        seed=int(cfg_d["seed"]),
    )
    n_layers = len(config.dims) - 1
    weights = [arrays.pop(f"w{i}") for i in range(n_layers)]
    biases = [arrays.pop(f"b{i}") for i in range(n_layers)]
    embedder = Embedder(config=config, weights=weights, biases=biases)
    opt_d = header["optimizer"]
    m, v, i = [], [], 0
    while f"adam_m{i}" in arrays:
        m.append(arrays.pop(f"adam_m{i}"))
        v.append(arrays.pop(f"adam_v{i}"))
        i += 1
    state = OptimizerState(
        m=m, v=v, step=int(opt_d["step"]),
        learning_rate=float(opt_d["learning_rate"]),
        beta1=float(opt_d["beta1"]), beta2=float(opt_d["beta2"]), eps=float(opt_d["eps"]),
    )
    return embedder, state, arrays, header
