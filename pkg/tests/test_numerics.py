"""Unit and property tests for the numeric primitives."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from salnet.numerics import (
    Activation,
    Prng,
    activation_derivative,
    apply_activation,
    count_multiplies,
    kaiming_init,
    matmul,
    softmax_ce_grad,
    softmax_ce_loss,
    softmax_rows,
)

finite_floats = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False,
                          allow_infinity=False)


# --- Prng ------------------------------------------------------------------


def test_same_seed_same_stream():
    a = Prng(42).normal(3, 4)
    b = Prng(42).normal(3, 4)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(Prng(1).normal(3, 3), Prng(2).normal(3, 3))


def test_child_streams_are_independent_of_parent_draws():
    parent = Prng(7)
    fresh = parent.child(3).normal(2, 2)
    parent.normal(5, 5)  # consume parent entropy
    again = parent.child(3).normal(2, 2)
    assert np.array_equal(fresh, again)


def test_child_key_path_addresses_distinct_streams():
    root = Prng(9)
    assert not np.array_equal(root.child(0).normal(2, 2), root.child(1).normal(2, 2))
    assert np.array_equal(root.child(1, 2).normal(2, 2), Prng(9).child(1).child(2).normal(2, 2))


def test_normal_std_scaling():
    draws = Prng(0).normal(2000, 50, std=3.0)
    assert abs(draws.std() - 3.0) < 0.05
    assert abs(draws.mean()) < 0.05


@settings(deadline=None)
@given(st.integers(min_value=1, max_value=200))
def test_permutation_is_a_permutation(n):
    perm = Prng(11).permutation(n)
    assert sorted(perm.tolist()) == list(range(n))


def test_integers_bounds():
    draws = Prng(3).integers(2, 7, size=500)
    assert draws.min() >= 2 and draws.max() < 7


# --- matmul + instrumentation ----------------------------------------------


def test_matmul_matches_triple_loop_oracle():
    rng = Prng(13)
    for trial in range(100):
        r = int(rng.child(trial, 0).integers(1, 6))
        k = int(rng.child(trial, 1).integers(1, 6))
        c = int(rng.child(trial, 2).integers(1, 6))
        a = rng.child(trial, 3).normal(r, k)
        b = rng.child(trial, 4).normal(k, c)
        want = np.zeros((r, c))
        for i in range(r):
            for j in range(c):
                for m in range(k):
                    want[i, j] += a[i, m] * b[m, j]
        assert np.allclose(matmul(a, b), want, atol=1e-12)


def test_matmul_rejects_non_2d():
    with pytest.raises(ValueError):
        matmul(np.ones(3), np.ones((3, 2)))
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3, 1)))


def test_matmul_rejects_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        matmul(np.ones((2, 3)), np.ones((4, 2)))


def test_count_multiplies_accumulates_per_product():
    a, b = np.ones((3, 4)), np.ones((4, 5))
    with count_multiplies() as counter:
        matmul(a, b)
        matmul(a, b)
    assert counter.multiplies == 2 * 3 * 4 * 5


def test_count_multiplies_scoped_to_block():
    a, b = np.ones((2, 2)), np.ones((2, 2))
    matmul(a, b)
    with count_multiplies() as counter:
        pass
    matmul(a, b)
    assert counter.multiplies == 0


# --- initialization ---------------------------------------------------------


def test_kaiming_shape_and_moments():
    w = kaiming_init(4, 3, Prng(1))
    assert w.shape == (4, 3)
    big = kaiming_init(400, 300, Prng(2))
    assert abs(big.std() - math.sqrt(2.0 / 400)) < 0.005
    assert abs(big.mean()) < 0.005


def test_kaiming_rejects_empty_dims():
    with pytest.raises(ValueError):
        kaiming_init(0, 3, Prng(1))
    with pytest.raises(ValueError):
        kaiming_init(3, 0, Prng(1))


# --- softmax family ----------------------------------------------------------


def test_softmax_symmetry():
    assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])


def test_softmax_extreme_logits_stay_finite():
    out = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.isfinite(out).all()
    assert out[0, 0] > 1.0 - 1e-12
    assert out[0, 1] < 1e-12


def test_softmax_direct_oracle():
    z = np.array([[1.0, 2.0, 3.0]])
    want = np.exp(z) / np.exp(z).sum()
    assert np.allclose(softmax_rows(z), want, atol=1e-12)


@settings(deadline=None, max_examples=60)
@given(st.lists(st.lists(finite_floats, min_size=3, max_size=3), min_size=1, max_size=5))
def test_softmax_rows_are_distributions(rows):
    out = softmax_rows(np.array(rows))
    # exp underflows to exactly 0.0 once a row's logit gap passes ~745, so
    # the lower bound is closed in float64.
    assert np.all(out >= 0.0)
    assert np.all(out <= 1.0)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


def test_softmax_shift_invariance():
    z = Prng(4).normal(5, 6)
    assert np.allclose(softmax_rows(z), softmax_rows(z + 123.0), atol=1e-12)


def test_ce_loss_uniform_is_log_c():
    assert abs(softmax_ce_loss(np.zeros((4, 10)), [0, 3, 7, 9]) - math.log(10)) < 1e-12


def test_ce_loss_confident_correct_approaches_zero():
    logits = np.zeros((1, 5))
    logits[0, 2] = 50.0
    assert softmax_ce_loss(logits, [2]) < 1e-8


def test_ce_loss_matches_per_sample_oracle():
    logits = Prng(8).normal(4, 3)
    labels = [0, 2, 1, 1]
    per_sample = []
    for row, lab in zip(logits, labels):
        p = np.exp(row - row.max())
        p /= p.sum()
        per_sample.append(-math.log(p[lab]))
    assert abs(softmax_ce_loss(logits, labels) - np.mean(per_sample)) < 1e-10


def test_ce_loss_rejects_bad_labels():
    with pytest.raises(ValueError):
        softmax_ce_loss(np.zeros((2, 3)), [0, 3])
    with pytest.raises(ValueError):
        softmax_ce_loss(np.zeros((2, 3)), [-1, 0])
    with pytest.raises(ValueError):
        softmax_ce_loss(np.zeros((2, 3)), [0])


def test_ce_grad_uniform_single_sample():
    grad = softmax_ce_grad(np.zeros((1, 2)), [0])
    assert np.allclose(grad, [[-0.5, 0.5]], atol=1e-12)


def test_ce_grad_mean_scaling():
    single = softmax_ce_grad(np.array([[0.3, -1.2, 0.8]]), [2])
    double = softmax_ce_grad(np.array([[0.3, -1.2, 0.8]] * 2), [2, 2])
    assert np.allclose(double, single / 2.0, atol=1e-12)


def test_ce_grad_matches_finite_differences():
    logits = Prng(21).normal(3, 4)
    labels = [1, 0, 3]
    grad = softmax_ce_grad(logits.copy(), labels)
    h = 1e-5
    fd = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            up, down = logits.copy(), logits.copy()
            up[i, j] += h
            down[i, j] -= h
            fd[i, j] = (softmax_ce_loss(up, labels) - softmax_ce_loss(down, labels)) / (2 * h)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5


@settings(deadline=None, max_examples=40)
@given(st.lists(st.lists(finite_floats, min_size=4, max_size=4), min_size=1, max_size=4),
       st.data())
def test_ce_grad_rows_sum_to_zero(rows, data):
    # softmax sums to 1 and the one-hot subtracts 1, so each row nets out.
    logits = np.array(rows)
    labels = [data.draw(st.integers(min_value=0, max_value=3)) for _ in rows]
    grad = softmax_ce_grad(logits, labels)
    assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-9)


# --- activations -------------------------------------------------------------


def test_relu_values_and_derivative():
    u = np.array([[-1.0, 0.0, 2.0]])
    assert np.array_equal(apply_activation(Activation.RELU, u), [[0.0, 0.0, 2.0]])
    # The kink at exactly 0 is defined to have derivative 0.
    assert np.array_equal(activation_derivative(Activation.RELU, u), [[0.0, 0.0, 1.0]])


def test_tanh_values_and_derivative():
    u = np.zeros((1, 1))
    assert apply_activation(Activation.TANH, u)[0, 0] == 0.0
    assert activation_derivative(Activation.TANH, u)[0, 0] == 1.0


def test_tanh_derivative_matches_finite_differences():
    u = Prng(17).normal(3, 3)
    h = 1e-6
    fd = (np.tanh(u + h) - np.tanh(u - h)) / (2 * h)
    assert np.allclose(activation_derivative(Activation.TANH, u), fd, atol=1e-6)


def test_linear_is_identity():
    u = Prng(19).normal(2, 5)
    assert np.array_equal(apply_activation(Activation.LINEAR, u), u)
    assert np.array_equal(activation_derivative(Activation.LINEAR, u), np.ones_like(u))
