import math

import numpy as np
import pytest

from src.tensor_core import (
    BackwardError,
    NonDeterministicFunctionError,
    ShapeError,
    TargetRangeError,
    Tape,
    Tensor,
    TensorError,
    cross_entropy_label_smoothed,
    finite_diff_check,
    is_grad_enabled,
    no_grad,
    ops,
)

GRAD_TOLERANCE = 1e-6


def _leaf(shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, name="x")


def _fixed(shape, seed=1):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


def test_integer_data_becomes_float64():
    assert Tensor([1, 2, 3]).dtype == np.float64


def test_matmul_gradient():
    weight = _fixed((4, 3))
    probe = _fixed((2, 5, 3), seed=2)
    error = finite_diff_check(lambda x: ops.sum(ops.mul(ops.matmul(x, weight), probe)), _leaf((2, 5, 4)),
                              floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_weight_gradient_of_matmul():
    inputs = _fixed((2, 5, 4))
    probe = _fixed((2, 5, 3), seed=2)
    error = finite_diff_check(lambda w: ops.sum(ops.mul(ops.matmul(inputs, w), probe)), _leaf((4, 3)), floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_batched_matmul_gradient():
    other = _fixed((2, 3, 4, 5))
    probe = _fixed((2, 3, 6, 5), seed=3)
    error = finite_diff_check(lambda x: ops.sum(ops.mul(ops.matmul(x, other), probe)), _leaf((2, 3, 6, 4)),
                              floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_softmax_gradient_with_mask():
    probe = _fixed((2, 3, 5))
    mask = np.array([True, True, True, False, False])
    error = finite_diff_check(lambda x: ops.sum(ops.mul(ops.softmax(x, axis=-1, mask=mask), probe)),
                              _leaf((2, 3, 5)), floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_masked_softmax_entries_are_zero():
    probs = ops.softmax(Tensor(np.zeros((2, 4))), mask=np.array([True, False, True, False])).data
    np.testing.assert_allclose(probs, [[0.5, 0.0, 0.5, 0.0]] * 2)


@pytest.mark.parametrize("target", ["x", "gain", "bias"])
def test_layer_norm_gradient(target):
    tensors = {"x": _fixed((3, 4, 6)), "gain": _fixed((6,), seed=4), "bias": _fixed((6,), seed=5)}
    tensors[target] = Tensor(tensors[target].data.copy(), requires_grad=True)
    probe = _fixed((3, 4, 6), seed=6)

    def f(leaf):
        args = dict(tensors, **{target: leaf})
        return ops.sum(ops.mul(ops.layer_norm(args["x"], args["gain"], args["bias"]), probe))

    assert finite_diff_check(f, tensors[target], floor=1e-8) < GRAD_TOLERANCE


def test_layer_norm_output_is_standardized():
    out = ops.layer_norm(_fixed((5, 8)), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


def test_relu_and_bias_gradients():
    bias = _fixed((4,))
    probe = _fixed((3, 4), seed=2)
    x = Tensor(np.array([[0.5, -1.2, 2.0, -0.3], [1.1, 0.7, -0.8, 0.2], [-2.0, 0.4, 0.9, -0.6]]),
               requires_grad=True)
    error = finite_diff_check(lambda t: ops.sum(ops.mul(ops.relu(ops.add_bias(t, bias)), probe)), x, floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_mul_last_gradient_for_both_inputs():
    x = _fixed((2, 3, 4))
    probe = _fixed((2, 3, 4), seed=3)
    error = finite_diff_check(lambda w: ops.sum(ops.mul(ops.mul_last(x, w), probe)), _leaf((4,)), floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_transpose_and_reshape_gradients():
    probe = _fixed((4, 2, 3))

    def f(x):
        moved = ops.transpose(ops.reshape(x, (2, 3, 4)), (2, 0, 1))
        return ops.sum(ops.mul(moved, probe))

    assert finite_diff_check(f, _leaf((6, 4)), floor=1e-8) < GRAD_TOLERANCE


def test_embedding_gradient_sums_repeated_ids():
    table = Tensor(np.arange(15.0).reshape(5, 3), requires_grad=True)
    ops.sum(ops.embedding(table, np.array([[1, 1], [3, 0]]))).backward()
    np.testing.assert_array_equal(table.grad[:, 0], [1.0, 2.0, 0.0, 1.0, 0.0])


def test_embedding_rejects_out_of_range_ids():
    with pytest.raises(ShapeError):
        ops.embedding(Tensor(np.zeros((4, 2))), np.array([4]))


def test_leaf_used_twice_receives_summed_gradient():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    ops.sum(ops.add(ops.mul(w, w), w)).backward()
    np.testing.assert_array_equal(w.grad, 2 * w.data + 1)


def test_backward_accumulates_across_calls():
    w = Tensor(np.ones(3), requires_grad=True)
    ops.sum(ops.scale(w, 2.0)).backward()
    ops.sum(ops.scale(w, 2.0)).backward()
    np.testing.assert_array_equal(w.grad, [4.0, 4.0, 4.0])


def test_tape_is_topologically_ordered():
    w = Tensor(np.ones(2), requires_grad=True)
    hidden = ops.scale(w, 3.0)
    loss = ops.sum(ops.mul(hidden, hidden))
    tape = Tape.record(loss)
    position = {id(node): i for i, node in enumerate(tape.nodes)}
    assert position[id(w)] < position[id(hidden)] < position[id(loss)]


def test_backward_needs_scalar_that_requires_grad():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(BackwardError):
        ops.scale(w, 2.0).backward()
    with pytest.raises(BackwardError):
        ops.sum(Tensor(np.ones(3))).backward()


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        out = ops.sum(ops.scale(w, 2.0))
    assert is_grad_enabled()
    assert not out.requires_grad
    assert out.is_leaf


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_uniform_logits_give_log_vocab():
    loss = cross_entropy_label_smoothed(Tensor(np.zeros((3, 8))), np.array([3, 4, 5]), smoothing=0.0)
    assert loss.item() == pytest.approx(math.log(8), abs=1e-12)


def test_smoothing_does_not_change_uniform_loss():
    loss = cross_entropy_label_smoothed(Tensor(np.zeros((4, 8))), np.array([3, 4, 5, 6]), smoothing=0.1)
    assert loss.item() == pytest.approx(math.log(8), abs=1e-12)


def test_cross_entropy_ignores_pad_positions():
    logits = np.random.default_rng(0).standard_normal((4, 6))
    targets = np.array([3, 4, 0, 0])
    full = cross_entropy_label_smoothed(Tensor(logits), targets, smoothing=0.1).item()
    trimmed = cross_entropy_label_smoothed(Tensor(logits[:2]), targets[:2], smoothing=0.1).item()
    assert full == pytest.approx(trimmed, abs=1e-12)

    leaf = Tensor(logits, requires_grad=True)
    cross_entropy_label_smoothed(leaf, targets, smoothing=0.1).backward()
    np.testing.assert_array_equal(leaf.grad[2:], 0.0)


def test_cross_entropy_gradient():
    targets = np.array([3, 1, 0, 5, 2])
    error = finite_diff_check(lambda x: cross_entropy_label_smoothed(x, targets, smoothing=0.1), _leaf((5, 7)),
                              floor=1e-8)
    assert error < GRAD_TOLERANCE


def test_cross_entropy_rejects_targets_outside_vocabulary():
    with pytest.raises(TargetRangeError):
        cross_entropy_label_smoothed(Tensor(np.zeros((2, 8))), np.array([3, 9]))


def test_dropout_is_a_function_of_its_key():
    x = Tensor(np.ones((4, 16)))
    key = ops.site_key(7, 3, "enc.layer1.ffn")
    first = ops.dropout(x, 0.5, key).data
    np.testing.assert_array_equal(first, ops.dropout(x, 0.5, key).data)
    assert set(np.unique(first)) <= {0.0, 2.0}
    other = ops.dropout(x, 0.5, ops.site_key(7, 4, "enc.layer1.ffn")).data
    assert not np.array_equal(first, other)


def test_dropout_identity_without_key_or_rate():
    x = Tensor(np.ones(5))
    assert ops.dropout(x, 0.5, None) is x
    assert ops.dropout(x, 0.0, 123) is x


def test_gradient_check_detects_changing_dropout_keys():
    calls = []

    def f(x):
        calls.append(1)
        return ops.sum(ops.dropout(x, 0.5, ops.site_key(1, len(calls), "site")))

    x = Tensor(np.arange(1.0, 41.0), requires_grad=True)
    with pytest.raises(NonDeterministicFunctionError):
        finite_diff_check(f, x)


def test_gradient_check_needs_float64_leaf():
    with pytest.raises(TensorError):
        finite_diff_check(ops.sum, Tensor(np.ones(3, dtype=np.float32), requires_grad=True))
    with pytest.raises(TensorError):
        finite_diff_check(ops.sum, Tensor(np.ones(3)))


def test_matmul_by_hand():
    np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]])).data,
                                  [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data, [[11.0]])


def test_softmax_is_stable_and_shift_invariant():
    np.testing.assert_array_equal(ops.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])
    x = np.random.default_rng(3).standard_normal(5)
    expected = np.exp(x) / np.exp(x).sum()
    np.testing.assert_allclose(ops.softmax(Tensor(x)).data, expected, atol=1e-12)
    np.testing.assert_allclose(ops.softmax(Tensor(x + 50.0)).data, expected, atol=1e-12)


def test_layer_norm_degenerate_inputs():
    gain, bias = Tensor(np.ones(4)), Tensor(np.array([0.5, -1.0, 2.0, 0.0]))
    np.testing.assert_array_equal(ops.layer_norm(Tensor(np.full((2, 4), 3.0)), gain, Tensor(np.zeros(4))).data,
                                  np.zeros((2, 4)))
    out = ops.layer_norm(_fixed((3, 4)), Tensor(np.zeros(4)), bias).data
    np.testing.assert_array_equal(out, np.broadcast_to(bias.data, (3, 4)))


def test_all_pad_targets_give_zero_loss_and_gradient():
    logits = _leaf((3, 5))
    loss = cross_entropy_label_smoothed(logits, np.zeros(3, dtype=np.int64), smoothing=0.1)
    assert loss.item() == 0.0
    loss.backward()
    np.testing.assert_array_equal(logits.grad, 0.0)


def test_smoothed_loss_matches_direct_formula():
    logits = np.random.default_rng(8).standard_normal((4, 6))
    targets = np.array([3, 5, 1, 4])
    eps = 0.1
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    expected = np.mean([-(1 - eps) * log_probs[i, t] - eps / 6 * log_probs[i].sum() for i, t in enumerate(targets)])
    loss = cross_entropy_label_smoothed(Tensor(logits), targets, smoothing=eps).item()
    assert loss == pytest.approx(expected, abs=1e-12)


def test_square_sum_gradient_is_exact():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    assert finite_diff_check(lambda t: ops.sum(ops.mul(t, t)), x) < 1e-8
    ops.sum(ops.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_unused_parameter_keeps_zero_gradient():
    used = Tensor(np.ones(2), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    unused.zero_grad()
    ops.sum(used).backward()
    np.testing.assert_array_equal(unused.grad, [0.0, 0.0])


def _random_graph(seed):
    """A scalar function of k inputs, built from a seeded mix of binary and unary ops."""
    rng = np.random.default_rng(seed)
    uses = int(rng.integers(2, 5))
    binary = [ops.add, ops.mul, ops.matmul]
    unary = [ops.relu, ops.softmax, lambda t: ops.scale(t, 0.5), lambda t: t]
    steps = [(binary[rng.integers(3)], unary[rng.integers(4)]) for _ in range(uses - 1)]
    probe = _fixed((3, 3), seed=seed + 100)

    def f(inputs):
        hidden = inputs[0]
        for (combine, activate), x in zip(steps, inputs[1:]):
            hidden = activate(combine(hidden, x))
        return ops.sum(ops.mul(hidden, probe))

    return f, uses


@pytest.mark.parametrize("seed", range(12))
def test_shared_leaf_gradient_equals_sum_over_independent_copies(seed):
    f, uses = _random_graph(seed)
    data = np.random.default_rng(seed).standard_normal((3, 3))
    shared = Tensor(data.copy(), requires_grad=True)
    f([shared] * uses).backward()

    copies = [Tensor(data.copy(), requires_grad=True) for _ in range(uses)]
    f(copies).backward()
    np.testing.assert_allclose(shared.grad, sum(leaf.grad for leaf in copies), rtol=1e-12, atol=1e-14)
