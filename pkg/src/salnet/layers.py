"""The three layer kinds: routed-area layers, dense BP layers, top-1 gated mixtures.

A routed-area layer (`SalLayer`) sends each sample through exactly one of N
area-specific weight sets, picked by a learned projection matched against
frozen prototype directions. Its update rule needs no backward chain: a
global output error plus a per-layer local error are pulled into the layer's
width through a frozen feedback matrix. `FcLayer` is the standard dense
layer with exact backpropagation, and `MoeLayer` is a top-1 gated mixture
trained end-to-end with backprop, used as the conditional-computation
comparator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    Activation,
    Prng,
    activation_derivative,
    apply_activation,
    kaiming_init,
    matmul,
    softmax_ce_grad,
    softmax_rows,
)

# Child-stream roles used when initializing a layer; keeping learnable and
# frozen draws on separate streams lets paired builds (e.g. a routed layer
# and its dense twin) share the learnable parameters exactly.
_LEARNABLE_STREAM = 0
_FROZEN_STREAM = 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass
class RoutingDecision:
    """Per-batch routing outcome: projected features, area scores, chosen areas."""

    features: np.ndarray  # (batch, routing_dim)
    scores: np.ndarray  # (batch, n_areas)
    selected: np.ndarray  # (batch,) int, argmax of scores (lowest index on ties)


@dataclass
class LayerCache:
    """Everything a layer's update phase re-reads from its forward pass."""

    inputs: np.ndarray
    routing: RoutingDecision | None
    preactivation: np.ndarray
    outputs: np.ndarray
    residual: bool = False


class SalLayer:
    """Dense layer with hard routing into area-specific parameters.

    Learnable: ``selector`` (in_dim x routing_dim) and the per-area
    ``area_weights`` / ``area_biases``. Frozen after construction:
    ``prototypes`` (routing_dim x n_areas) and ``feedback``
    (out_dim x routing_dim); both are marked read-only to enforce the
    contract. The feedback matrix is the identity whenever out_dim equals
    the routing dimension, which is always the case for the output layer.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        n_areas: int,
        class_count: int,
        activation: Activation,
        rng: Prng,
        is_output: bool = False,
        routing_dim: int | None = None,
    ):
        if n_areas < 1:
            raise ValueError("n_areas must be >= 1")
        d_f = class_count if routing_dim is None else routing_dim
        # The selector and local losses are cross-entropies against the class
        # labels, so the routing feature space must be class-dimensional.
        if d_f != class_count:
            raise ValueError(
                f"routing_dim {d_f} != class count {class_count}; "
                "the selector and local losses require class-dimensional features"
            )
        if is_output and out_dim != d_f:
            raise ValueError(f"output layer needs out_dim == routing_dim, got {out_dim} != {d_f}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.n_areas = n_areas
        self.routing_dim = d_f
        self.activation = activation
        self.is_output = is_output

        learn = rng.child(_LEARNABLE_STREAM)
        frozen = rng.child(_FROZEN_STREAM)
        # Area weights are drawn first so that area 0 matches the weights of a
        # dense layer built from the same stream.
        self.area_weights = [kaiming_init(in_dim, out_dim, learn) for _ in range(n_areas)]
        self.area_biases = [np.zeros(out_dim) for _ in range(n_areas)]
        self.selector = kaiming_init(in_dim, d_f, learn)
        self.prototypes = _freeze(kaiming_init(d_f, n_areas, frozen))
        if out_dim == d_f:
            self.feedback = _freeze(np.eye(out_dim))
        else:
            # Unit-scale entries, not fan-in-scaled: the feedback path must
            # carry class-space error into the layer width at full strength,
            # and the local logits H·B need to reach saturation-scale for the
            # local loss to steer the area weights.
            self.feedback = _freeze(frozen.normal(out_dim, d_f, std=1.0))

    def route(self, x: np.ndarray) -> RoutingDecision:
        """Project inputs, score them against the frozen prototypes, pick argmax.

        The prototype match uses the softmaxed routing features, not the raw
        logits. Raw logits carry per-sample structure in the non-argmax
        coordinates that a dense frozen projection turns into routing noise;
        once the selector is confident, the softmax is near one-hot and every
        sample of a class lands in the same area, which is what lets that
        area specialize.
        """
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]} != layer in_dim {self.in_dim}")
        features = matmul(x, self.selector)
        scores = matmul(softmax_rows(features), self.prototypes)
        selected = scores.argmax(axis=1)  # np.argmax: lowest index wins ties
        return RoutingDecision(features, scores, selected)

    def forward(self, x: np.ndarray, residual: bool = False) -> LayerCache:
        """Area-conditional affine + activation, grouped by active area.

        With ``residual`` the input is added to the activated output, which
        requires in_dim == out_dim.
        """
        if residual and self.in_dim != self.out_dim:
            raise ValueError(f"residual needs in_dim == out_dim, got {self.in_dim} != {self.out_dim}")
        routing = self.route(x)
        pre = np.empty((x.shape[0], self.out_dim))
        for k in np.unique(routing.selected):
            rows = routing.selected == k
            pre[rows] = matmul(x[rows], self.area_weights[k]) + self.area_biases[k]
        out = apply_activation(self.activation, pre)
        if residual:
            out = out + x
        return LayerCache(x, routing, pre, out, residual)

    def local_error(self, cache: LayerCache, labels) -> np.ndarray:
        """Gradient of the layer-local cross-entropy w.r.t. the projected logits.

        The local loss scores the layer output pushed through the frozen
        feedback matrix against the labels; the returned gradient lives in
        class space (batch x class_count).
        """
        return softmax_ce_grad(matmul(cache.outputs, self.feedback), labels)

    def update(
        self,
        cache: LayerCache,
        output_error: np.ndarray,
        labels,
        lr_net: float,
        lr_sel: float,
        local_weight: float = 1.0,
    ) -> None:
        """Apply one training step in place.

        The selector trains against its own cross-entropy on the routing
        features. The area parameters train on the sum of the broadcast
        output error and the local error, pulled into the layer width by the
        transposed feedback matrix and gated by the activation derivative;
        only areas that received samples are touched. The output layer skips
        the local term (its feedback is the identity, so the local loss would
        just double the output error).
        """
        if output_error.shape[0] != cache.inputs.shape[0]:
            raise ValueError(
                f"error batch {output_error.shape[0]} != cache batch {cache.inputs.shape[0]}"
            )
        # Per-sample (summed) reduction: the router shares the network
        # learning rate, and a batch-averaged step at that rate leaves the
        # routing features near their random init for the whole run. The
        # areas only specialize once argmax(features) tracks the label.
        selector_grad = softmax_ce_grad(cache.routing.features, labels)
        batch = cache.inputs.shape[0]
        self.selector -= lr_sel * batch * matmul(cache.inputs.T, selector_grad)

        if self.is_output or local_weight == 0.0:
            combined = output_error
        else:
            combined = output_error + local_weight * self.local_error(cache, labels)
        delta = activation_derivative(self.activation, cache.preactivation) * matmul(
            combined, self.feedback.T
        )
        # Each area trains on the mean over its own routed samples. The error
        # rows carry a full-batch mean factor, so rescale by batch / |S_k|;
        # with a single area this reduces to the plain batch mean.
        for k in np.unique(cache.routing.selected):
            rows = cache.routing.selected == k
            step = lr_net * (batch / rows.sum())
            self.area_weights[k] -= step * matmul(cache.inputs[rows].T, delta[rows])
            self.area_biases[k] -= step * delta[rows].sum(axis=0)


class FcLayer:
    """Plain dense layer trained with exact backpropagation."""

    def __init__(self, in_dim: int, out_dim: int, activation: Activation, rng: Prng):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        learn = rng.child(_LEARNABLE_STREAM)
        self.weights = kaiming_init(in_dim, out_dim, learn)
        self.bias = np.zeros(out_dim)

    def forward(self, x: np.ndarray, residual: bool = False) -> LayerCache:
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]} != layer in_dim {self.in_dim}")
        if residual and self.in_dim != self.out_dim:
            raise ValueError(f"residual needs in_dim == out_dim, got {self.in_dim} != {self.out_dim}")
        pre = matmul(x, self.weights) + self.bias
        out = apply_activation(self.activation, pre)
        if residual:
            out = out + x
        return LayerCache(x, None, pre, out, residual)

    def backward(self, cache: LayerCache, upstream: np.ndarray, lr: float) -> np.ndarray:
        """SGD step from the upstream output gradient; returns the input gradient."""
        if upstream.shape != cache.outputs.shape:
            raise ValueError(f"upstream shape {upstream.shape} != output {cache.outputs.shape}")
        delta = upstream * activation_derivative(self.activation, cache.preactivation)
        downstream = matmul(delta, self.weights.T)
        if cache.residual:
            downstream = downstream + upstream
        self.weights -= lr * matmul(cache.inputs.T, delta)
        self.bias -= lr * delta.sum(axis=0)
        return downstream


@dataclass
class MoeCache(LayerCache):
    """Layer cache plus the gate quantities the mixture backward needs."""

    gate_probs: np.ndarray | None = None
    expert_outputs: np.ndarray | None = None  # activated expert outputs, pre gate scaling


class MoeLayer:
    """Top-1 gated mixture of dense experts, trained end-to-end with backprop.

    Each sample is dispatched to the expert with the highest gate logit and
    the expert output is scaled by that expert's softmax gate probability, so
    the gate receives gradient through the probability of the chosen expert.
    """

    def __init__(self, in_dim: int, out_dim: int, n_experts: int, activation: Activation, rng: Prng):
        if n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.n_experts = n_experts
        self.activation = activation
        learn = rng.child(_LEARNABLE_STREAM)
        self.expert_weights = [kaiming_init(in_dim, out_dim, learn) for _ in range(n_experts)]
        self.expert_biases = [np.zeros(out_dim) for _ in range(n_experts)]
        self.gate = kaiming_init(in_dim, n_experts, learn)

    def forward(self, x: np.ndarray, residual: bool = False, selection: np.ndarray | None = None) -> MoeCache:
        """Dispatch each sample to its top-1 expert and scale by the gate probability.

        ``selection`` overrides the argmax choice, which the gradient checks
        use to hold routing fixed while perturbing parameters.
        """
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]} != layer in_dim {self.in_dim}")
        if residual and self.in_dim != self.out_dim:
            raise ValueError(f"residual needs in_dim == out_dim, got {self.in_dim} != {self.out_dim}")
        gate_logits = matmul(x, self.gate)
        gate_probs = softmax_rows(gate_logits)
        selected = gate_logits.argmax(axis=1) if selection is None else np.asarray(selection)
        pre = np.empty((x.shape[0], self.out_dim))
        for j in np.unique(selected):
            rows = selected == j
            pre[rows] = matmul(x[rows], self.expert_weights[j]) + self.expert_biases[j]
        expert_out = apply_activation(self.activation, pre)
        out = gate_probs[np.arange(x.shape[0]), selected][:, None] * expert_out
        if residual:
            out = out + x
        return MoeCache(
            inputs=x,
            routing=RoutingDecision(gate_logits, gate_probs, selected),
            preactivation=pre,
            outputs=out,
            residual=residual,
            gate_probs=gate_probs,
            expert_outputs=expert_out,
        )

    def backward(self, cache: MoeCache, upstream: np.ndarray, lr: float) -> np.ndarray:
        """Exact SGD step for the forward pass as routed; returns the input gradient."""
        if upstream.shape != cache.outputs.shape:
            raise ValueError(f"upstream shape {upstream.shape} != output {cache.outputs.shape}")
        batch = upstream.shape[0]
        rows = np.arange(batch)
        selected = cache.routing.selected
        picked_prob = cache.gate_probs[rows, selected]  # (batch,)

        # Through the expert path: out = p_sel * phi(pre).
        d_expert_out = upstream * picked_prob[:, None]
        delta = d_expert_out * activation_derivative(self.activation, cache.preactivation)

        # Through the gate path: d loss / d p_sel, then softmax jacobian row.
        d_picked = (upstream * cache.expert_outputs).sum(axis=1)  # (batch,)
        onehot = np.zeros_like(cache.gate_probs)
        onehot[rows, selected] = 1.0
        gate_logit_grad = (
            d_picked[:, None] * picked_prob[:, None] * (onehot - cache.gate_probs)
        )

        downstream = matmul(gate_logit_grad, self.gate.T)
        for j in np.unique(selected):
            members = selected == j
            downstream[members] += matmul(delta[members], self.expert_weights[j].T)
            self.expert_weights[j] -= lr * matmul(cache.inputs[members].T, delta[members])
            self.expert_biases[j] -= lr * delta[members].sum(axis=0)
        self.gate -= lr * matmul(cache.inputs.T, gate_logit_grad)
        if cache.residual:
            downstream = downstream + upstream
        return downstream
