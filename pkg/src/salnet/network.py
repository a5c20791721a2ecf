"""Stacking layers into trainable networks and running training steps.

Three network kinds share one interface: "sal" (routed-area layers with
fixed-feedback updates), "bp" (dense layers with exact backprop, the
baseline), and "moe" (top-1 gated mixtures trained with backprop). A
training step always computes the global cross-entropy error at the output
once; the sal update hands that same error to every layer, while bp and moe
chain it backwards layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import FcLayer, LayerCache, MoeLayer, SalLayer
from .numerics import Activation, Prng, softmax_ce_grad, softmax_ce_loss

KINDS = ("sal", "bp", "moe")

# Default selector step size. The router is a small linear classifier whose
# job is to become confident within the short training budget; at the
# network's step size it never leaves its random init and the areas see an
# unstable mix of classes all run.
SELECTOR_LR = 1e-3


@dataclass
class NetworkConfig:
    """Shape and training hyperparameters for one network."""

    input_dim: int
    output_dim: int
    kind: str = "sal"
    depth: int = 2
    hidden_dim: int = 256
    n_areas: list[int] = field(default_factory=lambda: [1, 1])
    activations: list[Activation] = field(
        default_factory=lambda: [Activation.RELU, Activation.LINEAR]
    )
    residual: bool = False
    lr_net: float = 1e-4
    lr_sel: float | None = None  # None: use SELECTOR_LR
    local_weight: float = 1.0
    routing_dim: int | None = None  # None: use output_dim

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_dim] * (self.depth - 1) + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def residual_layers(self) -> list[bool]:
        # Residual connections only on hidden->hidden layers, never the first
        # or the last, so dimensions always match.
        return [self.residual and 0 < i < self.depth - 1 for i in range(self.depth)]

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if len(self.n_areas) != self.depth:
            raise ValueError(f"n_areas has {len(self.n_areas)} entries for depth {self.depth}")
        if any(n < 1 for n in self.n_areas):
            raise ValueError("n_areas entries must be >= 1")
        if len(self.activations) != self.depth:
            raise ValueError(
                f"activation schedule has {len(self.activations)} entries for depth {self.depth}"
            )


def basic_config(input_dim: int, n_areas: int = 16, kind: str = "sal", **overrides) -> NetworkConfig:
    """Two-layer setup: hidden 256 ReLU, linear output, areas on the first layer."""
    cfg = NetworkConfig(
        input_dim=input_dim,
        output_dim=overrides.pop("output_dim", 10),
        kind=kind,
        depth=2,
        hidden_dim=overrides.pop("hidden_dim", 256),
        n_areas=[n_areas, 1],
        activations=[Activation.RELU, Activation.LINEAR],
    )
    for name, value in overrides.items():
        setattr(cfg, name, value)
    return cfg


def deep_config(
    input_dim: int, depth: int, n_areas: int = 4, kind: str = "sal", **overrides
) -> NetworkConfig:
    """Deep setup: tanh hidden layers with linear ends, residual hidden connections.

    Areas are on the input and all hidden layers; the output layer has one.
    """
    if depth < 2:
        raise ValueError("deep config needs depth >= 2")
    cfg = NetworkConfig(
        input_dim=input_dim,
        output_dim=overrides.pop("output_dim", 10),
        kind=kind,
        depth=depth,
        hidden_dim=overrides.pop("hidden_dim", 256),
        n_areas=[n_areas] * (depth - 1) + [1],
        activations=[Activation.LINEAR]
        + [Activation.TANH] * (depth - 2)
        + [Activation.LINEAR],
        residual=True,
    )
    for name, value in overrides.items():
        setattr(cfg, name, value)
    return cfg


class Network:
    """An ordered stack of layers of one kind plus its training configuration."""

    def __init__(self, config: NetworkConfig, layers: list):
        self.config = config
        self.layers = layers
        self._residuals = config.residual_layers()

    def forward(self, x: np.ndarray) -> list[LayerCache]:
        """Run all layers, returning each layer's cache (last cache holds the logits)."""
        caches = []
        h = x
        for layer, residual in zip(self.layers, self._residuals):
            cache = layer.forward(h, residual=residual)
            caches.append(cache)
            h = cache.outputs
        return caches

    def train_step(self, x: np.ndarray, labels) -> float:
        """One SGD step on a batch; returns the pre-update global loss."""
        caches = self.forward(x)
        logits = caches[-1].outputs
        loss = softmax_ce_loss(logits, labels)
        output_error = softmax_ce_grad(logits, labels)
        cfg = self.config
        if cfg.kind == "sal":
            lr_sel = SELECTOR_LR if cfg.lr_sel is None else cfg.lr_sel
            # The same output error goes to every layer; updates read only the
            # caches, so layer order does not matter here.
            for layer, cache in zip(self.layers, caches):
                layer.update(cache, output_error, labels, cfg.lr_net, lr_sel, cfg.local_weight)
        else:
            grad = output_error
            for layer, cache in zip(reversed(self.layers), reversed(caches)):
                grad = layer.backward(cache, grad, cfg.lr_net)
        return loss

    def evaluate(self, x: np.ndarray, labels) -> tuple[float, float]:
        """(mean cross-entropy, accuracy) on a batch, no parameter changes."""
        logits = self.forward(x)[-1].outputs
        loss = softmax_ce_loss(logits, labels)
        labels = np.asarray(labels)
        accuracy = float(np.mean(logits.argmax(axis=1) == labels))
        return loss, accuracy


def build_network(config: NetworkConfig, rng: Prng) -> Network:
    """Construct and initialize a network; same (config, rng seed) gives identical bits."""
    config.validate()
    layers = []
    dims = config.layer_dims()
    for i, (d_in, d_out) in enumerate(dims):
        layer_rng = rng.child(i)
        is_output = i == config.depth - 1
        if config.kind == "sal":
            layers.append(
                SalLayer(
                    d_in,
                    d_out,
                    config.n_areas[i],
                    class_count=config.output_dim,
                    activation=config.activations[i],
                    rng=layer_rng,
                    is_output=is_output,
                    routing_dim=config.routing_dim,
                )
            )
        elif config.kind == "bp":
            layers.append(FcLayer(d_in, d_out, config.activations[i], layer_rng))
        else:
            layers.append(MoeLayer(d_in, d_out, config.n_areas[i], config.activations[i], layer_rng))
    return Network(config, layers)
