"""Unit tests for the dense-network engine.

Analytic gradients are validated against central finite differences;
closed-form values were worked out by hand and frozen here.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from declink.errors import ConfigError, TrainingError, ValidationError
from declink.numerics import (
    Activation,
    AdamState,
    DenseLayer,
    EarlyStopper,
    LayerStack,
    RngStream,
    adam_step,
    bce_with_logits,
    dense_backward,
    dense_forward,
    derive_seed,
    dropout,
    grad_check,
    init_dense,
    mse_loss,
    sigmoid,
    stack_backward,
    stack_forward,
)


# ---------------------------------------------------------------------------
# RngStream / derive_seed
# ---------------------------------------------------------------------------


def test_rng_stream_reproducible():
    a = RngStream(7, "init").generator().random(5)
    b = RngStream(7, "init").generator().random(5)
    np.testing.assert_array_equal(a, b)


def test_rng_stream_label_independence():
    a = RngStream(7, "init").generator().random(5)
    b = RngStream(7, "dropout").generator().random(5)
    assert not np.array_equal(a, b)


def test_rng_stream_seed_sensitivity():
    a = RngStream(7, "init").generator().random(5)
    b = RngStream(8, "init").generator().random(5)
    assert not np.array_equal(a, b)


def test_derive_seed_stable_and_distinct():
    s1 = derive_seed(7, "cluster:0")
    s2 = derive_seed(7, "cluster:0")
    s3 = derive_seed(7, "cluster:1")
    assert s1 == s2
    assert s1 != s3
    assert 0 <= s1 < 2**63


# ---------------------------------------------------------------------------
# Dense forward/backward
# ---------------------------------------------------------------------------


def test_dense_forward_hand_value():
    # x=[[1,2]], W=[[1,1],[-1,-1]], b=[0,0], relu -> [[3,0]]
    layer = DenseLayer(
        weights=np.array([[1.0, 1.0], [-1.0, -1.0]]),
        bias=np.zeros(2),
        activation=Activation.RELU,
    )
    out, _ = dense_forward(np.array([[1.0, 2.0]]), layer)
    np.testing.assert_allclose(out, [[3.0, 0.0]], atol=0, rtol=0)


def test_dense_forward_identity():
    layer = DenseLayer(
        weights=np.array([[2.0, 0.0], [0.0, -3.0]]),
        bias=np.array([1.0, 1.0]),
        activation=Activation.IDENTITY,
    )
    out, _ = dense_forward(np.array([[1.0, 1.0]]), layer)
    np.testing.assert_allclose(out, [[3.0, -2.0]], atol=0, rtol=0)


def test_dense_forward_rejects_bad_shape():
    layer = DenseLayer(np.zeros((3, 2)), np.zeros(3), Activation.RELU)
    with pytest.raises(ConfigError):
        dense_forward(np.zeros((4, 5)), layer)


def test_dense_gradients_match_finite_differences():
    rng = RngStream(11, "fdtest").generator()
    x = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 2))
    layer = init_dense(3, 2, Activation.RELU, RngStream(11, "fdtest-init"))
    # Shift bias so some relu units sit on both sides of zero but none at it.
    layer.bias += 0.1

    def fn(params):
        lay = DenseLayer(params[0], params[1], Activation.RELU)
        out, cache = dense_forward(x, lay)
        loss, grad = mse_loss(out, target)
        _, gw, gb = dense_backward(grad, cache, lay)
        return loss, [gw, gb]

    err = grad_check(fn, [layer.weights, layer.bias], step=1e-5)
    assert err <= 1e-6


def test_stack_gradients_match_finite_differences():
    rng = RngStream(13, "stackfd").generator()
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 2))
    stack = LayerStack([
        init_dense(4, 3, Activation.RELU, RngStream(13, "l0")),
        init_dense(3, 2, Activation.IDENTITY, RngStream(13, "l1")),
    ])
    stack.layers[0].bias += 0.05

    def fn(params):
        s = LayerStack([
            DenseLayer(params[0], params[1], Activation.RELU),
            DenseLayer(params[2], params[3], Activation.IDENTITY),
        ])
        out, caches = stack_forward(x, s)
        loss, grad = mse_loss(out, target)
        _, grads = stack_backward(grad, caches, s)
        return loss, grads

    err = grad_check(fn, stack.parameters(), step=1e-5)
    assert err <= 1e-6


def test_stack_grad_input_matches_fd():
    # Differentiate wrt the input rather than the weights.
    rng = RngStream(17, "inputfd").generator()
    x0 = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 2))
    stack = LayerStack([
        init_dense(4, 4, Activation.RELU, RngStream(17, "l0")),
        init_dense(4, 2, Activation.IDENTITY, RngStream(17, "l1")),
    ])
    stack.layers[0].bias += 0.05

    def fn(params):
        out, caches = stack_forward(params[0], stack)
        loss, grad = mse_loss(out, target)
        grad_in, _ = stack_backward(grad, caches, stack)
        return loss, [grad_in]

    err = grad_check(fn, [x0.copy()], step=1e-5)
    assert err <= 1e-6


def test_set_parameters_restores_snapshot():
    stack = LayerStack([init_dense(3, 2, Activation.RELU, RngStream(5, "a"))])
    snapshot = [p.copy() for p in stack.parameters()]
    stack.layers[0].weights += 1.0
    stack.set_parameters(snapshot)
    np.testing.assert_array_equal(stack.layers[0].weights, snapshot[0])


def test_init_dense_bounds():
    layer = init_dense(100, 50, Activation.RELU, RngStream(1, "b"))
    bound = math.sqrt(6.0 / 100)
    assert np.all(np.abs(layer.weights) <= bound)
    assert np.all(layer.bias == 0.0)
    xavier = init_dense(100, 50, Activation.IDENTITY, RngStream(1, "c"))
    assert np.all(np.abs(xavier.weights) <= math.sqrt(6.0 / 150))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def test_mse_hand_value():
    loss, grad = mse_loss(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
    assert loss == 2.5
    np.testing.assert_allclose(grad, [1.0, 2.0])


def test_mse_gradient_fd():
    rng = RngStream(3, "mse").generator()
    p = rng.normal(size=(4, 3))
    t = rng.normal(size=(4, 3))

    def fn(params):
        loss, grad = mse_loss(params[0], t)
        return loss, [grad]

    assert grad_check(fn, [p], step=1e-6) <= 1e-7


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert abs(sigmoid(math.log(3.0)) - 0.75) < 1e-15
    # Extreme logits saturate without overflow.
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(-1000.0) == 0.0


@given(st.floats(-700, 700))
def test_sigmoid_symmetry(x):
    assert abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12


def test_bce_hand_values():
    loss, grad = bce_with_logits(np.array([0.0]), np.array([1.0]))
    assert abs(loss - math.log(2.0)) < 1e-15
    np.testing.assert_allclose(grad, [-0.5])


def test_bce_matches_probability_identity():
    # BCE(x, y) == -[y log sigmoid(x) + (1-y) log sigmoid(-x)]
    rng = RngStream(9, "bce").generator()
    x = rng.uniform(-30, 30, size=200)
    y = (rng.random(200) < 0.5).astype(float)
    loss, _ = bce_with_logits(x, y)
    naive = float(np.mean(-(y * np.log(sigmoid(x)) + (1 - y) * np.log(sigmoid(-x)))))
    assert abs(loss - naive) < 1e-12


def test_bce_extreme_logits_finite():
    loss, grad = bce_with_logits(np.array([1e4, -1e4]), np.array([0.0, 1.0]))
    assert math.isfinite(loss)
    assert np.all(np.isfinite(grad))


def test_bce_gradient_fd():
    rng = RngStream(21, "bcefd").generator()
    x = rng.normal(size=12)
    y = (rng.random(12) < 0.5).astype(float)

    def fn(params):
        loss, grad = bce_with_logits(params[0], y)
        return loss, [grad]

    assert grad_check(fn, [x], step=1e-6) <= 1e-8


def test_bce_rejects_soft_labels():
    with pytest.raises(ValidationError):
        bce_with_logits(np.array([0.0]), np.array([0.5]))


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def test_dropout_inference_identity():
    x = np.arange(12, dtype=float).reshape(3, 4)
    out, mask = dropout(x, 0.5, RngStream(1, "d"), training=False)
    np.testing.assert_array_equal(out, x)
    assert np.all(mask == 1.0)


def test_dropout_zero_rate_identity():
    x = np.ones((2, 2))
    out, _ = dropout(x, 0.0, RngStream(1, "d"), training=True)
    np.testing.assert_array_equal(out, x)


def test_dropout_scaling_preserves_expectation():
    x = np.ones((2000, 50))
    out, mask = dropout(x, 0.3, RngStream(42, "dropmc"), training=True)
    kept = out[mask == 1.0]
    assert np.allclose(kept, 1.0 / 0.7)
    assert np.all(out[mask == 0.0] == 0.0)
    # Drop fraction concentrates near the rate.
    assert abs((mask == 0.0).mean() - 0.3) < 0.01
    assert abs(out.mean() - 1.0) < 0.01


def test_dropout_rejects_rate_one():
    with pytest.raises(ConfigError):
        dropout(np.ones(3), 1.0, RngStream(1, "d"), training=True)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_first_step_magnitude():
    # With zero state the bias-corrected first step is lr * g/(|g| + eps*...)
    # which for a scalar gradient is ~lr regardless of magnitude.
    p = [np.array([1.0])]
    state = AdamState.for_params(p, lr=0.1)
    adam_step(p, [np.array([4.0])], state)
    assert abs(p[0][0] - (1.0 - 0.1)) < 1e-6
    assert state.t == 1


def test_adam_trajectory_deterministic():
    def run():
        p = [np.array([1.0, -2.0]), np.array([[0.5]])]
        g = [np.array([0.3, 0.7]), np.array([[-0.2]])]
        state = AdamState.for_params(p, lr=0.01)
        for _ in range(25):
            adam_step(p, g, state)
        return np.concatenate([p[0], p[1].ravel()])

    np.testing.assert_array_equal(run(), run())


def test_adam_converges_on_quadratic():
    # Minimize w^2: |w| should be ~0 after a few hundred steps.
    p = [np.array([3.0])]
    state = AdamState.for_params(p, lr=0.05)
    for _ in range(500):
        adam_step(p, [2.0 * p[0]], state)
    assert abs(p[0][0]) < 1e-3


def test_adam_decoupled_weight_decay_shrinks_params():
    p = [np.array([10.0])]
    state = AdamState.for_params(p, lr=0.1, weight_decay=0.5)
    adam_step(p, [np.array([0.0])], state)
    # decay: 10 * (1 - 0.1*0.5) = 9.5; zero gradient leaves moments at 0.
    assert abs(p[0][0] - 9.5) < 1e-12


def test_adam_rejects_nonfinite_gradient():
    p = [np.array([1.0])]
    state = AdamState.for_params(p)
    with pytest.raises(TrainingError):
        adam_step(p, [np.array([math.nan])], state)


def test_adam_rejects_bad_hyperparams():
    with pytest.raises(ConfigError):
        AdamState.for_params([np.zeros(1)], lr=0.0)
    with pytest.raises(ConfigError):
        AdamState.for_params([np.zeros(1)], beta1=1.0)


# ---------------------------------------------------------------------------
# Early stopping
# ---------------------------------------------------------------------------


def test_early_stopper_counts_exact_patience():
    stopper = EarlyStopper(patience=10, min_delta=1e-6, mode="min")
    assert stopper.update(1.0) is False
    stops = [stopper.update(1.0) for _ in range(10)]
    assert stops == [False] * 9 + [True]
    assert stopper.best_index == 0
    assert stopper.count == 11


def test_early_stopper_improvement_resets():
    stopper = EarlyStopper(patience=3, mode="min")
    stopper.update(1.0)
    stopper.update(1.0)  # bad 1
    stopper.update(1.0)  # bad 2
    assert stopper.update(0.5) is False  # improvement resets the counter
    assert stopper.bad_epochs == 0
    assert stopper.best == 0.5
    assert stopper.best_index == 3


def test_early_stopper_min_delta_boundary():
    stopper = EarlyStopper(patience=2, min_delta=1e-6, mode="min")
    stopper.update(1.0)
    # Improvement smaller than min_delta does not count.
    assert stopper.update(1.0 - 5e-7) is False
    assert stopper.bad_epochs == 1
    assert stopper.update(1.0 - 3e-6) is False  # > min_delta below best
    assert stopper.bad_epochs == 0


def test_early_stopper_max_mode():
    stopper = EarlyStopper(patience=2, mode="max")
    stopper.update(0.5)
    stopper.update(0.9)
    stopper.update(0.8)
    assert stopper.update(0.85) is True
    assert stopper.best == 0.9
    assert stopper.best_index == 1


# ---------------------------------------------------------------------------
# grad_check self-test
# ---------------------------------------------------------------------------


def test_grad_check_flags_wrong_gradient():
    def fn(params):
        loss = float(np.sum(params[0] ** 2))
        return loss, [3.0 * params[0]]  # wrong: true grad is 2w

    err = grad_check(fn, [np.array([1.0, -2.0])], step=1e-5)
    assert err > 0.3
