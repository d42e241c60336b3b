import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgir.errors import (DimensionError, EmptyAxisError, EmptyGridError, NonFiniteError, ParameterError,
                         RankError, TapeError, UnsupportedKernelError)
from mgir.tensor import ops
from mgir.tensor.optim import Adam, adam_step
from mgir.tensor.tensor import Tape, Tensor, backward, check_finite, count_macs, precision
from mgir.model.params import ParameterStore


def test_default_and_shadow_precision():
    assert Tensor([1.0, 2.0]).data.dtype == np.float32
    with precision(np.float64):
        assert Tensor([1.0, 2.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32


def test_broadcast_add_gradients():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.arange(3.0), requires_grad=True)
    with Tape():
        loss = ops.sum(ops.add(a, b))
    backward(loss)
    np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


def test_operator_sugar_matches_primitives():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[0.5, -1.0], [2.0, 0.0]])
    np.testing.assert_array_equal((a + b).data, ops.add(a, b).data)
    np.testing.assert_array_equal((a @ b).data, a.data @ b.data)
    np.testing.assert_array_equal((-a).data, -a.data)
    assert a.sum().item() == 10.0


def test_gradients_accumulate_over_shared_inputs():
    x = Tensor([3.0], requires_grad=True)
    with Tape():
        loss = ops.sum(ops.mul(x, x))
    backward(loss)
    assert x.grad[0] == pytest.approx(6.0)


def test_second_backward_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        loss = ops.sum(ops.mul(x, x))
    backward(loss)
    with pytest.raises(TapeError):
        backward(loss)


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        y = ops.mul(x, 2.0)
    with pytest.raises(RankError):
        backward(y)


def test_backward_without_tape():
    loss = ops.sum(Tensor([1.0, 2.0], requires_grad=True))
    with pytest.raises(TapeError):
        backward(loss)


def test_unreached_leaves_get_zero_gradients():
    x = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape():
        loss = ops.sum(x)
    backward(loss, leaves=[x, unused])
    np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))


def test_sqrt_subgradient_at_zero():
    x = Tensor([0.0, 4.0], requires_grad=True)
    with Tape():
        loss = ops.sum(ops.sqrt(x))
    backward(loss)
    np.testing.assert_allclose(x.grad, [0.0, 0.25])


def test_checked_mode_names_the_primitive():
    with check_finite(True), np.errstate(divide='ignore'):
        with pytest.raises(NonFiniteError, match='div'):
            ops.div(Tensor([1.0]), Tensor([0.0]))
    with check_finite(False), np.errstate(divide='ignore'):
        assert np.isinf(ops.div(Tensor([1.0]), Tensor([0.0])).data[0])


def test_matmul_counts_macs_and_checks_extents():
    with count_macs() as counter:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
    assert counter.total == 24
    assert counter.by_op == {'matmul': 24}
    with pytest.raises(DimensionError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
    with pytest.raises(DimensionError):
        ops.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


def test_mean_over_empty_axis():
    with pytest.raises(EmptyAxisError):
        ops.mean(Tensor(np.zeros((0, 3))), axis=0)


def test_softmax_rows_sum_to_one(rng):
    out = ops.softmax(Tensor(rng.normal(size=(5, 7)) * 30.0), axis=-1)
    np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(5), atol=1e-6)


def test_layer_norm_errors():
    gamma, beta = Tensor(np.ones(4)), Tensor(np.zeros(4))
    with pytest.raises(DimensionError):
        ops.layer_norm(Tensor(np.ones((2, 3))), 4, gamma, beta)
    with pytest.raises(EmptyAxisError):
        ops.layer_norm(Tensor(np.ones((2, 0))), 0, Tensor(np.ones(0)), Tensor(np.zeros(0)))


def test_layer_norm_normalizes_last_axis(rng):
    x = Tensor(rng.normal(size=(3, 16)) * 5.0 + 2.0)
    out = ops.layer_norm(x, 16, Tensor(np.ones(16)), Tensor(np.zeros(16)))
    np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-3)


def _loop_conv3d(x, w, stride, padding):
    n, c_in, d, h, wd = x.shape
    c_out, _, kd, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding,) * 2, (padding,) * 2, (padding,) * 2))
    od = (d + 2 * padding - kd) // stride + 1
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, od, oh, ow))
    for b in range(n):
        for o in range(c_out):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        patch = xp[b, :, i * stride:i * stride + kd, j * stride:j * stride + kh,
                                   k * stride:k * stride + kw]
                        out[b, o, i, j, k] = np.sum(patch * w[o])
    return out


@pytest.mark.parametrize('stride,padding', [(1, 0), (1, 1), (2, 0), (2, 1)])
def test_conv3d_matches_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(1, 2, 5, 4, 6))
    w = rng.normal(size=(3, 2, 2, 3, 2))
    with precision(np.float64):
        out = ops.conv3d(Tensor(x), Tensor(w), stride=stride, padding=padding)
    np.testing.assert_allclose(out.data, _loop_conv3d(x, w, stride, padding), atol=1e-10)


def test_conv3d_errors():
    x = Tensor(np.ones((1, 2, 4, 4, 4)))
    with pytest.raises(DimensionError) as info:
        ops.conv3d(x, Tensor(np.ones((1, 3, 1, 1, 1))))
    assert info.value.axis == 'C_in'
    with pytest.raises(DimensionError):
        ops.conv3d(x, Tensor(np.ones((1, 2, 5, 1, 1))))
    with pytest.raises(ParameterError):
        ops.conv3d(x, Tensor(np.ones((1, 2, 1, 1, 1))), stride=0)


def test_conv3d_mac_count():
    with count_macs() as counter:
        out = ops.conv3d(Tensor(np.ones((1, 2, 4, 4, 4))), Tensor(np.ones((3, 2, 1, 1, 1))))
    assert counter.total == out.size * 2


def test_depthwise_conv3d_same_padding(rng):
    x = rng.normal(size=(1, 3, 4, 5, 6))
    w = rng.normal(size=(3, 1, 1, 3, 3))
    with precision(np.float64):
        out = ops.depthwise_conv3d(Tensor(x), Tensor(w))
    assert out.shape == x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros_like(x)
    for c in range(3):
        for j in range(3):
            for k in range(3):
                expected[0, c] += w[c, 0, 0, j, k] * xp[0, c, :, j:j + 5, k:k + 6]
    np.testing.assert_allclose(out.data, expected, atol=1e-10)


def test_depthwise_rejects_even_kernels():
    with pytest.raises(UnsupportedKernelError):
        ops.depthwise_conv3d(Tensor(np.ones((1, 2, 4, 4, 4))), Tensor(np.ones((2, 1, 2, 1, 1))))


def test_trilinear_sample_at_cell_centers(rng):
    grid = rng.normal(size=(2, 3, 4, 5))
    points = ops.cell_centers((3, 4, 5))
    with precision(np.float64):
        out = ops.trilinear_sample(Tensor(grid), Tensor(points))
    np.testing.assert_allclose(out.data, grid.reshape(2, -1).T, atol=1e-12)


def test_trilinear_sample_reproduces_linear_fields(rng):
    points = rng.uniform(-0.6, 0.6, size=(20, 3))
    centers = ops.cell_centers((4, 4, 4)).reshape(4, 4, 4, 3)
    coeffs = np.array([0.3, -1.2, 2.0])
    grid = (centers @ coeffs + 0.5)[None]
    with precision(np.float64):
        out = ops.trilinear_sample(Tensor(grid), Tensor(points))
    np.testing.assert_allclose(out.data[:, 0], points @ coeffs + 0.5, atol=1e-10)


def test_trilinear_sample_clamps_outside_points():
    grid = np.arange(8.0).reshape(1, 2, 2, 2)
    with precision(np.float64):
        inside = ops.trilinear_sample(Tensor(grid), Tensor([[-1.0, -1.0, -1.0]]))
        outside = ops.trilinear_sample(Tensor(grid), Tensor([[-3.0, -2.0, -5.0]]))
    assert inside.data[0, 0] == grid[0, 0, 0, 0]
    assert outside.data[0, 0] == grid[0, 0, 0, 0]


def test_trilinear_sample_empty_grid():
    with pytest.raises(EmptyGridError):
        ops.trilinear_sample(Tensor(np.zeros((1, 0, 2, 2))), Tensor(np.zeros((1, 3))))


def test_cell_centers_convention():
    np.testing.assert_array_equal(ops.cell_centers((1,))[:, 0], [0.0])
    np.testing.assert_array_equal(ops.cell_centers((2,))[:, 0], [-0.5, 0.5])
    coarse = ops.cell_centers((3,))[:, 0]
    fine = ops.cell_centers((9,))[:, 0]
    np.testing.assert_array_equal(coarse, fine[1::3])


@given(st.lists(st.integers(1, 7), min_size=1, max_size=3))
def test_cell_centers_stay_inside(extents):
    centers = ops.cell_centers(extents)
    assert centers.shape == (int(np.prod(extents)), len(extents))
    assert np.all(np.abs(centers) < 1.0)


def test_upsample_nearest_and_trilinear_shapes(rng):
    x = Tensor(rng.normal(size=(2, 2, 3, 3)))
    assert ops.upsample_nearest(x, (4, 6, 6)).shape == (2, 4, 6, 6)
    assert ops.upsample_trilinear(x, (4, 6, 6)).shape == (2, 4, 6, 6)
    constant = Tensor(np.full((1, 2, 2, 2), 3.0))
    np.testing.assert_allclose(ops.upsample_trilinear(constant, (3, 5, 4)).data, 3.0, atol=1e-6)


def test_take_and_pad_gradients():
    x = Tensor(np.arange(4.0), requires_grad=True)
    with Tape():
        loss = ops.sum(ops.take(x, [0, 0, 3]))
    backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 0.0, 1.0])

    y = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape():
        loss = ops.sum(ops.mul(ops.pad(y, [(1, 0), (0, 2)]), 3.0))
    backward(loss)
    np.testing.assert_array_equal(y.grad, np.full((2, 2), 3.0))


def test_adam_step_matches_closed_form_first_update():
    param = np.array([1.0, -2.0])
    grad = np.array([0.5, -0.1])
    m, v = np.zeros(2), np.zeros(2)
    adam_step(param, grad, m, v, t=1, lr=0.1)
    # after bias correction the first update is lr * g / (|g| + eps)
    np.testing.assert_allclose(param, [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)


def test_adam_zero_lr_leaves_parameters_unchanged():
    store = ParameterStore()
    store.add('w', np.array([1.0, 2.0, 3.0]))
    before = store['w'].data.copy()
    store['w'].grad = np.array([0.3, -0.2, 0.1], dtype=np.float32)
    Adam(lr=0.0).step(store)
    np.testing.assert_array_equal(store['w'].data, before)


def test_adam_state_roundtrip():
    store = ParameterStore()
    store.add('w', np.array([1.0, 2.0]))
    store['w'].grad = np.array([0.1, 0.2], dtype=np.float32)
    opt = Adam(lr=0.01)
    opt.step(store)
    other = Adam(lr=0.01)
    other.load_state_dict(opt.state_dict())
    assert other.t == 1
    np.testing.assert_array_equal(other.m['w'], opt.m['w'])
