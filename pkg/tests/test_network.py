"""Network assembly, config validation, and training-step semantics."""

import math

import numpy as np
import pytest

from salnet.layers import FcLayer, MoeLayer, SalLayer
from salnet.network import (
    SELECTOR_LR,
    Network,
    NetworkConfig,
    basic_config,
    build_network,
    deep_config,
)
from salnet.numerics import Activation, Prng


def toy_xy(seed=1, n=12, dim=8, classes=3):
    x = Prng(seed).child(0).normal(n, dim)
    y = Prng(seed).child(1).integers(0, classes, size=n)
    return x, y


# --- configuration -------------------------------------------------------------


def test_validate_rejects_unknown_kind():
    cfg = basic_config(8, kind="sal")
    cfg.kind = "sgd"
    with pytest.raises(ValueError, match="kind"):
        cfg.validate()


def test_validate_rejects_bad_depth_and_schedules():
    with pytest.raises(ValueError, match="depth"):
        NetworkConfig(8, 3, depth=0, n_areas=[], activations=[]).validate()
    with pytest.raises(ValueError, match="n_areas"):
        NetworkConfig(8, 3, depth=2, n_areas=[2],
                      activations=[Activation.RELU, Activation.LINEAR]).validate()
    with pytest.raises(ValueError, match="activation"):
        NetworkConfig(8, 3, depth=2, n_areas=[2, 1],
                      activations=[Activation.RELU]).validate()
    with pytest.raises(ValueError, match="n_areas"):
        NetworkConfig(8, 3, depth=2, n_areas=[0, 1],
                      activations=[Activation.RELU, Activation.LINEAR]).validate()


def test_basic_config_shape():
    cfg = basic_config(64, n_areas=8, kind="sal", hidden_dim=32, output_dim=10)
    assert cfg.layer_dims() == [(64, 32), (32, 10)]
    assert cfg.n_areas == [8, 1]
    assert cfg.activations == [Activation.RELU, Activation.LINEAR]
    assert cfg.residual_layers() == [False, False]


def test_deep_config_shape():
    cfg = deep_config(16, depth=5, n_areas=4, hidden_dim=12, output_dim=3)
    assert cfg.layer_dims() == [(16, 12), (12, 12), (12, 12), (12, 12), (12, 3)]
    assert cfg.n_areas == [4, 4, 4, 4, 1]
    assert cfg.activations == [Activation.LINEAR] + [Activation.TANH] * 3 + [Activation.LINEAR]
    # Residual wiring skips the first and last layers so widths always match.
    assert cfg.residual_layers() == [False, True, True, True, False]


def test_deep_config_needs_depth_two():
    with pytest.raises(ValueError, match="depth"):
        deep_config(16, depth=1)


def test_config_overrides_apply():
    cfg = basic_config(8, kind="bp", lr_net=0.5, local_weight=0.0)
    assert cfg.lr_net == 0.5
    assert cfg.local_weight == 0.0


# --- assembly -------------------------------------------------------------------


def test_build_network_layer_kinds():
    for kind, cls in (("sal", SalLayer), ("bp", FcLayer), ("moe", MoeLayer)):
        net = build_network(basic_config(8, n_areas=2, kind=kind, hidden_dim=6,
                                         output_dim=3), Prng(1))
        assert all(isinstance(layer, cls) for layer in net.layers)
        assert len(net.layers) == 2


def test_sal_output_flag_on_last_layer_only():
    net = build_network(basic_config(8, kind="sal", hidden_dim=6, output_dim=3), Prng(1))
    assert not net.layers[0].is_output
    assert net.layers[1].is_output
    assert np.array_equal(net.layers[1].feedback, np.eye(3))


def test_depth_one_network_is_a_single_output_layer():
    cfg = NetworkConfig(8, 3, kind="sal", depth=1, n_areas=[2],
                        activations=[Activation.LINEAR])
    net = build_network(cfg, Prng(2))
    assert len(net.layers) == 1
    assert net.layers[0].is_output
    assert np.array_equal(net.layers[0].feedback, np.eye(3))


def test_build_is_deterministic_per_seed():
    cfg = basic_config(8, kind="sal", hidden_dim=6, output_dim=3)
    a = build_network(cfg, Prng(5))
    b = build_network(cfg, Prng(5))
    c = build_network(cfg, Prng(6))
    assert np.array_equal(a.layers[0].selector, b.layers[0].selector)
    assert np.array_equal(a.layers[0].area_weights[0], b.layers[0].area_weights[0])
    assert not np.array_equal(a.layers[0].area_weights[0], c.layers[0].area_weights[0])


def test_forward_cache_chain():
    net = build_network(basic_config(8, kind="bp", hidden_dim=6, output_dim=3), Prng(1))
    x, _ = toy_xy()
    caches = net.forward(x)
    assert len(caches) == 2
    assert caches[0].outputs.shape == (12, 6)
    assert caches[1].outputs.shape == (12, 3)
    assert np.array_equal(caches[1].inputs, caches[0].outputs)


def test_deep_forward_marks_residual_caches():
    cfg = deep_config(8, depth=4, n_areas=2, hidden_dim=8, output_dim=3, kind="sal")
    net = build_network(cfg, Prng(3))
    caches = net.forward(toy_xy(dim=8)[0])
    assert [c.residual for c in caches] == [False, True, True, False]


# --- training behavior ------------------------------------------------------------


def test_uniform_logits_evaluate_to_log_c():
    net = build_network(basic_config(8, kind="bp", hidden_dim=6, output_dim=10), Prng(1))
    net.layers[1].weights[:] = 0.0  # zero the output layer: logits become 0
    x, _ = toy_xy(classes=10)
    loss, acc = net.evaluate(x, [0] * len(x))
    assert abs(loss - math.log(10)) < 1e-12
    assert acc == 1.0  # argmax of all-zero logits is class 0


def test_evaluate_perfect_predictions():
    cfg = NetworkConfig(3, 3, kind="bp", depth=1, n_areas=[1],
                        activations=[Activation.LINEAR])
    net = build_network(cfg, Prng(1))
    net.layers[0].weights[:] = np.eye(3) * 10.0
    x = np.eye(3)[[0, 1, 2, 0]]
    loss, acc = net.evaluate(x, [0, 1, 2, 0])
    assert acc == 1.0
    assert loss < 1e-4


def test_train_step_returns_pre_update_loss():
    net = build_network(basic_config(8, kind="bp", hidden_dim=6, output_dim=3,
                                     lr_net=0.1), Prng(2))
    x, y = toy_xy()
    before, _ = net.evaluate(x, y)
    reported = net.train_step(x, y)
    assert abs(reported - before) < 1e-12


@pytest.mark.parametrize("kind,areas,lr", [("bp", 1, 0.3), ("sal", 2, 0.05),
                                           ("moe", 2, 0.3)])
def test_training_reduces_loss(kind, areas, lr):
    net = build_network(basic_config(8, n_areas=areas, kind=kind, hidden_dim=16,
                                     output_dim=3, lr_net=lr), Prng(4))
    x, y = toy_xy(n=30)
    first = net.train_step(x, y)
    for _ in range(150):
        last = net.train_step(x, y)
    assert last < first * 0.8


def test_selector_rate_defaults_and_override():
    x, y = toy_xy()
    moved = build_network(basic_config(8, kind="sal", hidden_dim=6, output_dim=3),
                          Prng(9))
    frozen = build_network(basic_config(8, kind="sal", hidden_dim=6, output_dim=3,
                                        lr_sel=0.0), Prng(9))
    assert moved.config.lr_sel is None and SELECTOR_LR == 1e-3
    sel_before = moved.layers[0].selector.copy()
    moved.train_step(x, y)
    frozen.train_step(x, y)
    assert not np.array_equal(moved.layers[0].selector, sel_before)
    assert np.array_equal(frozen.layers[0].selector, sel_before)


def test_sal_n1_depth1_matches_bp_exactly():
    # Degenerate case: one output layer, one area, identity feedback. The
    # routed network and the dense baseline must agree bit-for-bit in spirit
    # (1e-10 here) on forward outputs, loss, and post-step parameters.
    def cfg(kind):
        return NetworkConfig(6, 3, kind=kind, depth=1, n_areas=[1],
                             activations=[Activation.LINEAR], lr_net=1e-2,
                             local_weight=0.0)

    sal = build_network(cfg("sal"), Prng(7))
    bp = build_network(cfg("bp"), Prng(7))
    x, y = toy_xy(dim=6)
    assert np.allclose(sal.forward(x)[-1].outputs, bp.forward(x)[-1].outputs,
                       rtol=0, atol=1e-10)
    loss_sal = sal.train_step(x, y)
    loss_bp = bp.train_step(x, y)
    assert abs(loss_sal - loss_bp) < 1e-12
    assert np.allclose(sal.layers[0].area_weights[0], bp.layers[0].weights,
                       rtol=0, atol=1e-10)
    assert np.allclose(sal.layers[0].area_biases[0], bp.layers[0].bias,
                       rtol=0, atol=1e-10)
