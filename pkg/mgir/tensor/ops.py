"""
Description:
Differentiable primitives over mgir Tensors.

Each primitive computes its forward value with numpy and records a backward rule that maps
the output gradient to one gradient (or None) per input. Gradients are plain numpy arrays.
"""

import itertools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from mgir.errors import (DimensionError, EmptyAxisError, EmptyGridError, ParameterError,
                         UnsupportedKernelError)
from mgir.tensor.tensor import add_macs, as_tensor, record

_AXIS_NAMES = ('D', 'H', 'W')


def unbroadcast(grad, shape):
    # sum out broadcast axes so grad matches shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _triple(value):
    if isinstance(value, int):
        return (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ParameterError(f"expected three values, got {value}")
    return value


def cell_centers(extents):
    """
    Normalized cell-center coordinates of a grid, flattened in row-major order.
    Voxel i on an axis of extent N maps to -1 + (2i+1)/N.
    """
    axes = []
    for n in extents:
        # integer numerator over N is correctly rounded, so a coarse grid's centers coincide
        # bit-for-bit with the matching centers of any odd-multiple finer grid
        axes.append(-1.0 + (2.0 * np.arange(n, dtype=np.float64) + 1.0) / n)
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


# elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)

    return record('add', a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)

    return record('sub', a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)

    return record('mul', a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return (unbroadcast(grad / b.data, a.shape),
                unbroadcast(-grad * a.data / (b.data * b.data), b.shape))

    return record('div', a.data / b.data, (a, b), backward)


def neg(x):
    def backward(grad):
        return (-grad,)

    return record('neg', -x.data, (x,), backward)


def sqrt(x):
    out = np.sqrt(x.data)

    def backward(grad):
        # subgradient 0 where the root is exactly zero
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, grad * 0.5 / safe, 0.0),)

    return record('sqrt', out, (x,), backward)


def sin(x):
    def backward(grad):
        return (grad * np.cos(x.data),)

    return record('sin', np.sin(x.data), (x,), backward)


def cos(x):
    def backward(grad):
        return (-grad * np.sin(x.data),)

    return record('cos', np.cos(x.data), (x,), backward)


def relu(x):
    def backward(grad):
        return (grad * (x.data > 0),)

    return record('relu', np.maximum(x.data, 0), (x,), backward)


_GELU_K = math.sqrt(2.0 / math.pi)


def gelu(x):
    # tanh form
    inner = _GELU_K * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)

    def backward(grad):
        d_inner = _GELU_K * (1.0 + 3.0 * 0.044715 * x.data ** 2)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner),)

    return record('gelu', 0.5 * x.data * (1.0 + t), (x,), backward)


def clamp(x, low, high):
    def backward(grad):
        return (grad * ((x.data >= low) & (x.data <= high)),)

    return record('clamp', np.clip(x.data, low, high), (x,), backward)


# reductions and shape

def sum(x, axis=None, keepdims=False):
    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape),)

    return record('sum', np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    if count == 0:
        raise EmptyAxisError("mean over an empty axis", axis=axis)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad / count, x.shape),)

    return record('mean', np.mean(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}: {e}")

    def backward(grad):
        return (grad.reshape(x.shape),)

    return record('reshape', out, (x,), backward)


def permute(x, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        return (np.transpose(grad, inverse),)

    return record('permute', np.transpose(x.data, axes), (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat along axis {axis} failed: {e}", axis=axis)

    def backward(grad):
        return tuple(np.split(grad, np.cumsum(sizes)[:-1], axis=axis))

    return record('concat', out, tuple(tensors), backward)


def take(x, indices, axis=0):
    """Gather entries of x along axis; indices may have any shape."""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    out = np.take(x.data, indices, axis=axis)

    def backward(grad):
        full = np.zeros(x.shape, dtype=grad.dtype)
        k = indices.ndim
        moved = np.moveaxis(grad, list(range(axis, axis + k)), list(range(k)))
        np.add.at(np.moveaxis(full, axis, 0), indices, moved)
        return (full,)

    return record('take', out, (x,), backward)


def pad(x, widths):
    widths = [tuple(w) for w in widths]
    out = np.pad(x.data, widths)

    def backward(grad):
        index = tuple(slice(before, before + n) for (before, _), n in zip(widths, x.shape))
        return (grad[index],)

    return record('pad', out, (x,), backward)


# contractions

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}", axis=-1)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"matmul batch prefixes not broadcastable: {a.shape} @ {b.shape}: {e}")
    add_macs('matmul', out.size * a.shape[-1])

    def backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return record('matmul', out, (a, b), backward)


def softmax(x, axis=-1):
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(grad):
        return (out * (grad - np.sum(grad * out, axis=axis, keepdims=True)),)

    return record('softmax', out, (x,), backward)


def layer_norm(x, normalized_extent, gamma, beta, eps=1e-5):
    if normalized_extent == 0:
        raise EmptyAxisError("layer_norm over an empty axis", axis=-1)
    if x.shape[-1] != normalized_extent:
        raise DimensionError(f"layer_norm expects last extent {normalized_extent}, got {x.shape[-1]}", axis=-1)
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    n = normalized_extent
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(grad):
        lead = tuple(range(grad.ndim - 1))
        grad_gamma = np.sum(grad * xhat, axis=lead)
        grad_beta = np.sum(grad, axis=lead)
        gx = grad * gamma.data
        grad_x = inv / n * (n * gx - np.sum(gx, axis=-1, keepdims=True)
                            - xhat * np.sum(gx * xhat, axis=-1, keepdims=True))
        return grad_x, grad_gamma.reshape(gamma.shape), grad_beta.reshape(beta.shape)

    return record('layer_norm', out, (x, gamma, beta), backward)


def conv3d(x, weight, stride=1, padding=0):
    """
    Dense 3D cross-correlation, input [N,C_in,D,H,W], weight [C_out,C_in,kd,kh,kw].
    Windows come from a strided view of the zero-padded input and are contracted with tensordot.
    """
    stride, padding = _triple(stride), _triple(padding)
    if x.ndim != 5 or weight.ndim != 5:
        raise DimensionError(f"conv3d needs rank-5 input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv3d channel mismatch on axis C_in: input {x.shape[1]}, weight {weight.shape[1]}",
                             axis='C_in')
    if any(s < 1 for s in stride):
        raise ParameterError(f"conv3d stride components must be >= 1, got {stride}")
    kernel = weight.shape[2:]
    for name, extent, p, k in zip(_AXIS_NAMES, x.shape[2:], padding, kernel):
        if extent + 2 * p < k:
            raise DimensionError(f"conv3d kernel extent {k} exceeds padded input extent {extent + 2 * p} on axis {name}",
                                 axis=name)

    (pd, ph, pw), (sd, sh, sw) = padding, stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, kernel, axis=(2, 3, 4))[:, :, ::sd, ::sh, ::sw]
    out = np.moveaxis(np.tensordot(win, weight.data, axes=([1, 5, 6, 7], [1, 2, 3, 4])), -1, 1)
    add_macs('conv3d', out.size * int(np.prod(weight.shape[1:])))

    def backward(grad):
        grad_w = np.tensordot(grad, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        grad_win = np.tensordot(grad, weight.data, axes=([1], [0]))
        grad_xp = np.zeros(xp.shape, dtype=grad.dtype)
        d_out, h_out, w_out = grad.shape[2:]
        for i, j, k in itertools.product(*(range(n) for n in kernel)):
            grad_xp[:, :,
                    i:i + sd * (d_out - 1) + 1:sd,
                    j:j + sh * (h_out - 1) + 1:sh,
                    k:k + sw * (w_out - 1) + 1:sw] += np.moveaxis(grad_win[..., i, j, k], 4, 1)
        d, h, w = x.shape[2:]
        return grad_xp[:, :, pd:pd + d, ph:ph + h, pw:pw + w], grad_w

    return record('conv3d', out, (x, weight), backward)


def depthwise_conv3d(x, weight, padding=None):
    """Per-channel 3D convolution with same padding, input [N,C,D,H,W], weight [C,1,kd,kh,kw]."""
    if x.ndim != 5 or weight.ndim != 5:
        raise DimensionError(f"depthwise_conv3d needs rank-5 input and weight, got {x.shape} and {weight.shape}")
    if weight.shape[0] != x.shape[1] or weight.shape[1] != 1:
        raise DimensionError(f"depthwise weight {weight.shape} does not match {x.shape[1]} channels", axis='C')
    kernel = weight.shape[2:]
    if any(k % 2 == 0 for k in kernel):
        raise UnsupportedKernelError(f"same padding needs odd kernel extents, got {kernel}")
    same = tuple(k // 2 for k in kernel)
    if padding is not None and _triple(padding) != same:
        raise ParameterError(f"depthwise_conv3d only supports same padding {same}, got {padding}")

    pd, ph, pw = same
    d, h, w = x.shape[2:]
    xp = np.pad(x.data, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    taps = weight.data[:, 0]
    out = np.zeros(x.shape, dtype=np.result_type(x.data, weight.data))
    offsets = list(itertools.product(*(range(n) for n in kernel)))
    for i, j, k in offsets:
        out += xp[:, :, i:i + d, j:j + h, k:k + w] * taps[:, i, j, k][None, :, None, None, None]
    add_macs('depthwise_conv3d', out.size * len(offsets))

    def backward(grad):
        grad_xp = np.zeros(xp.shape, dtype=grad.dtype)
        grad_w = np.zeros(weight.shape, dtype=grad.dtype)
        for i, j, k in offsets:
            grad_xp[:, :, i:i + d, j:j + h, k:k + w] += grad * taps[:, i, j, k][None, :, None, None, None]
            grad_w[:, 0, i, j, k] = np.sum(grad * xp[:, :, i:i + d, j:j + h, k:k + w], axis=(0, 2, 3, 4))
        return grad_xp[:, :, pd:pd + d, ph:ph + h, pw:pw + w], grad_w

    return record('depthwise_conv3d', out, (x, weight), backward)


# sampling

def trilinear_sample(grid, points):
    """
    Sample grid [C,D,H,W] at normalized points [P,3] (order: D, H, W axes) -> [P,C].
    Points outside [-1,1] clamp to the boundary; the outermost half cell repeats the edge value.
    """
    if grid.ndim != 4:
        raise DimensionError(f"trilinear_sample needs a rank-4 grid, got {grid.shape}")
    if any(n == 0 for n in grid.shape):
        raise EmptyGridError(f"cannot sample a grid with a zero extent: {grid.shape}")
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionError(f"points must have shape [P,3], got {points.shape}", axis=1)

    extents = np.array(grid.shape[1:], dtype=np.float64)
    p = np.clip(points.data, -1.0, 1.0)
    continuous = ((p + 1.0) * extents - 1.0) / 2.0
    clamped = np.clip(continuous, 0.0, extents - 1.0)
    live = ((points.data > -1.0) & (points.data < 1.0)
            & (continuous > 0.0) & (continuous < extents - 1.0))
    upper = np.maximum(extents - 2.0, 0.0)
    i0 = np.clip(np.floor(clamped), 0.0, upper).astype(np.int64)
    t = (clamped - i0).astype(grid.data.dtype)
    i1 = np.minimum(i0 + 1, np.array(grid.shape[1:]) - 1)
    cells = np.moveaxis(grid.data, 0, -1)

    corners = []
    for bits in itertools.product((0, 1), repeat=3):
        index = tuple(np.where(bit, i1[:, axis], i0[:, axis]) for axis, bit in enumerate(bits))
        factors = [t[:, axis] if bit else 1.0 - t[:, axis] for axis, bit in enumerate(bits)]
        corners.append((bits, index, factors))

    out = np.zeros((points.shape[0], grid.shape[0]), dtype=np.result_type(grid.data, t))
    for _, index, factors in corners:
        out += (factors[0] * factors[1] * factors[2])[:, None] * cells[index]

    def backward(grad):
        grad_cells = np.zeros(cells.shape, dtype=grad.dtype)
        grad_t = np.zeros(t.shape, dtype=grad.dtype)
        for bits, index, factors in corners:
            weight = factors[0] * factors[1] * factors[2]
            np.add.at(grad_cells, index, grad * weight[:, None])
            along = np.sum(grad * cells[index], axis=1)
            for axis, bit in enumerate(bits):
                others = [factors[a] for a in range(3) if a != axis]
                grad_t[:, axis] += along * (1.0 if bit else -1.0) * others[0] * others[1]
        grad_points = grad_t * live * (extents / 2.0)
        return np.moveaxis(grad_cells, -1, 0), grad_points

    return record('trilinear_sample', out, (grid, points), backward)


def upsample_trilinear(x, size):
    """Resize [C,D,H,W] to [C,*size] by cell-center aligned trilinear interpolation."""
    from mgir.tensor.tensor import Tensor
    points = Tensor(cell_centers(size))
    sampled = trilinear_sample(x, points)
    return reshape(permute(sampled, (1, 0)), (x.shape[0],) + tuple(size))


def upsample_nearest(x, size):
    """Resize [C,D,H,W] to [C,*size] by nearest cell-center lookup."""
    out = x
    for axis, (n_in, n_out) in enumerate(zip(x.shape[1:], size), start=1):
        index = np.minimum(((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64), n_in - 1)
        out = take(out, index, axis=axis)
    return out
