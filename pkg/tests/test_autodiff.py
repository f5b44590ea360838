import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgait import autodiff as ad
from skelgait.errors import DimensionMismatch, EmptyNeighborhood, GraphNotRecorded


def grad_check(fn, *arrays, atol=1e-6, eps=1e-6):
    """Compare reverse-mode gradients of scalar fn(*leaves) with central FD."""
    leaves = [ad.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = fn(*leaves)
    loss.backward()
    for leaf, base in zip(leaves, arrays):
        base = np.asarray(base, dtype=np.float64)
        flat = leaf.data.ravel()
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + eps
            up = fn(*[ad.Tensor(l.data) for l in leaves]).item()
            flat[idx] = keep - eps
            down = fn(*[ad.Tensor(l.data) for l in leaves]).item()
            flat[idx] = keep
            np.testing.assert_allclose(
                leaf.grad.ravel()[idx], (up - down) / (2 * eps), atol=atol
            )


RNG = np.random.default_rng(7)


def test_backward_requires_recorded_graph():
    plain = ad.Tensor(np.ones(3))
    with pytest.raises(GraphNotRecorded):
        plain.backward()


def test_backward_on_vector_needs_seed():
    leaf = ad.Tensor(np.ones(3), requires_grad=True)
    doubled = ad.scale(leaf, 2.0)
    with pytest.raises(DimensionMismatch):
        doubled.backward()
    doubled.backward(seed=np.array([1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(leaf.grad, [2.0, 0.0, 4.0])


def test_add_broadcast_gradients():
    grad_check(
        lambda a, b: ad.tensor_sum(ad.mul(ad.add(a, b), ad.add(a, b))),
        RNG.normal(size=(3, 4)),
        RNG.normal(size=(4,)),
    )


def test_mul_broadcast_gradients():
    grad_check(
        lambda a, b: ad.tensor_sum(ad.mul(a, b)),
        RNG.normal(size=(2, 3, 4)),
        RNG.normal(size=(3, 1)),
    )


def test_matmul_gradients():
    grad_check(
        lambda a, b: ad.tensor_sum(ad.tanh(ad.matmul(a, b))),
        RNG.normal(size=(3, 4)),
        RNG.normal(size=(4, 2)),
    )


def test_matmul_batched_gradients():
    grad_check(
        lambda a, b: ad.tensor_sum(ad.matmul(a, b)),
        RNG.normal(size=(2, 3, 4)),
        RNG.normal(size=(2, 4, 2)),
    )


def test_matmul_rejects_vectors():
    with pytest.raises(DimensionMismatch):
        ad.matmul(ad.Tensor(np.ones(3)), ad.Tensor(np.ones((3, 2))))


def test_transpose_and_reshape_gradients():
    weigh = ad.Tensor(RNG.normal(size=(4, 3)))
    grad_check(
        lambda a: ad.tensor_sum(ad.mul(ad.transpose_last2(a), weigh)),
        RNG.normal(size=(3, 4)),
    )
    grad_check(
        lambda a: ad.tensor_sum(ad.sigmoid(ad.reshape(a, (6, 2)))),
        RNG.normal(size=(3, 4)),
    )


def test_narrow_gradients_and_bounds():
    weigh = ad.Tensor(RNG.normal(size=(2, 3)))
    grad_check(
        lambda a: ad.tensor_sum(ad.mul(ad.narrow(a, 1, 2), weigh)),
        RNG.normal(size=(5, 3)),
    )
    with pytest.raises(DimensionMismatch):
        ad.narrow(ad.Tensor(np.ones((3, 2))), 2, 2)


def test_take_scatter_adds_repeated_indices():
    leaf = ad.Tensor(RNG.normal(size=(4, 2)), requires_grad=True)
    picked = ad.take(leaf, np.array([1, 1, 3]), axis=0)
    ad.tensor_sum(picked).backward()
    np.testing.assert_array_equal(leaf.grad[:, 0], [0.0, 2.0, 0.0, 1.0])


def test_take_along_second_axis():
    grad_check(
        lambda a: ad.tensor_sum(ad.take(a, np.array([0, 2, 2]), axis=1)),
        RNG.normal(size=(2, 3, 2)),
    )


def test_take_frames_per_row_gather():
    x = RNG.normal(size=(2, 5, 3))
    idx = np.array([[0, 2], [1, 4]])
    picked = ad.take_frames(ad.Tensor(x), idx)
    np.testing.assert_array_equal(picked.data[0], x[0, [0, 2]])
    np.testing.assert_array_equal(picked.data[1], x[1, [1, 4]])
    grad_check(lambda a: ad.tensor_sum(ad.tanh(ad.take_frames(a, idx))), x)


def test_reductions_and_mean():
    grad_check(lambda a: ad.tensor_sum(a), RNG.normal(size=(3, 2)))
    grad_check(
        lambda a: ad.tensor_sum(ad.tensor_sum(a, axis=1, keepdims=True)),
        RNG.normal(size=(3, 2)),
    )
    grad_check(lambda a: ad.tensor_mean(a), RNG.normal(size=(4,)))
    grad_check(
        lambda a: ad.tensor_sum(ad.tensor_mean(a, axis=0)), RNG.normal(size=(3, 2))
    )


@pytest.mark.parametrize(
    "unary",
    [ad.tanh, ad.sigmoid, ad.elu, lambda t: ad.leaky_relu(t, 0.2)],
    ids=["tanh", "sigmoid", "elu", "leaky_relu"],
)
def test_unary_activations(unary):
    # offsets keep samples away from the kink at zero
    data = RNG.normal(size=(3, 3)) + np.sign(RNG.normal(size=(3, 3))) * 0.05
    grad_check(lambda a: ad.tensor_sum(unary(a)), data)


def test_log_clipped_zero_gradient_below_floor():
    leaf = ad.Tensor(np.array([0.5, 1e-15]), requires_grad=True)
    ad.tensor_sum(ad.log_clipped(leaf)).backward()
    np.testing.assert_allclose(leaf.grad, [2.0, 0.0])
    assert ad.log_clipped(ad.Tensor(np.array([0.0]))).data[0] == np.log(1e-12)


def test_masked_softmax_gradients_and_empty_row():
    mask = np.array([[True, True, False], [True, True, True]])
    weigh = ad.Tensor(RNG.normal(size=(2, 3)))
    grad_check(
        lambda a: ad.tensor_sum(ad.mul(ad.masked_softmax(a, mask), weigh)),
        RNG.normal(size=(2, 3)),
    )
    grad_check(
        lambda a: ad.tensor_sum(ad.mul(ad.masked_softmax(a, None), weigh)),
        RNG.normal(size=(2, 3)),
    )
    bad = np.array([[True, True, True], [False, False, False]])
    with pytest.raises(EmptyNeighborhood):
        ad.masked_softmax(ad.Tensor(np.zeros((2, 3))), bad)


def test_lstm_layer_gradients():
    hidden = 3
    weigh = ad.Tensor(RNG.normal(size=(2, 4, hidden)))
    grad_check(
        lambda x, wx, wh, b: ad.tensor_sum(ad.mul(ad.lstm_layer(x, wx, wh, b), weigh)),
        RNG.normal(size=(2, 4, 3)),
        RNG.normal(size=(4 * hidden, 3)) * 0.5,
        RNG.normal(size=(4 * hidden, hidden)) * 0.5,
        RNG.normal(size=(4 * hidden,)) * 0.1,
        atol=2e-6,
    )


def test_affine_gradients():
    grad_check(
        lambda x, w, b: ad.tensor_sum(ad.tanh(ad.affine(x, w, b))),
        RNG.normal(size=(3, 4)),
        RNG.normal(size=(2, 4)),
        RNG.normal(size=(2,)),
    )


def test_total_sum_accumulates_each_term():
    a = ad.Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    b = ad.Tensor(np.array([[3.0]]), requires_grad=True)
    total = ad.total_sum([ad.tensor_sum(ad.mul(a, a)), ad.tensor_sum(ad.scale(b, 4.0))])
    assert total.item() == pytest.approx(1 + 4 + 12)
    total.backward()
    np.testing.assert_array_equal(a.grad, [[2.0, 4.0]])
    np.testing.assert_array_equal(b.grad, [[4.0]])


def test_operator_sugar_matches_functions():
    a = ad.Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
    b = ad.Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
    w = ad.Tensor(RNG.normal(size=(3, 2)), requires_grad=True)
    combo = ((a + b) * a - b) @ w
    assert combo.data.shape == (2, 2)
    np.testing.assert_array_equal((a.mT).data, a.data.T)
    assert a.reshape((3, 2)).data.shape == (3, 2)
    assert a.sum().item() == pytest.approx(float(a.data.sum()))
    assert a.mean().item() == pytest.approx(float(a.data.mean()))
    combo.sum().backward()
    assert a.grad is not None and b.grad is not None and w.grad is not None


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_unbroadcast_inverts_numpy_broadcasting(seed):
    rng = np.random.default_rng(seed)
    full = tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(1, 4))))
    drop = int(rng.integers(0, len(full) + 1))
    reduced = tuple(1 if rng.random() < 0.5 else d for d in full[drop:])
    grad = rng.normal(size=full)
    shrunk = ad.unbroadcast(grad, reduced)
    assert shrunk.shape == reduced
    # summing over broadcast axes preserves the total
    np.testing.assert_allclose(shrunk.sum(), grad.sum(), atol=1e-9)


def test_gradients_accumulate_across_reuse():
    a = ad.Tensor(np.array([2.0, -1.0]), requires_grad=True)
    loss = ad.tensor_sum(ad.add(ad.mul(a, a), ad.scale(a, 3.0)))
    loss.backward()
    np.testing.assert_allclose(a.grad, [7.0, 1.0])  # 2x + 3
