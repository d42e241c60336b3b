"""
Description:
Dense row-major tensors with a reverse-mode autodiff tape.

A Tensor wraps a contiguous numpy buffer (float32 by default, float64 in shadow mode).
Primitives in mgir.tensor.ops record one TapeEntry per application on the active Tape;
backward(loss) walks the entries in reverse and fills .grad on every reachable leaf.
Tape, precision, finite-checking and MAC counting state is thread-local, so independent
tapes can run on independent threads.
"""

import threading
from contextlib import contextmanager

import numpy as np

import mgir.load_env as mgir_env
from mgir.errors import NonFiniteError, RankError, TapeError

_state = threading.local()


def _local(name, default):
    return getattr(_state, name, default)


def default_dtype():
    return _local('dtype', np.float32)


@contextmanager
def precision(dtype):
    # float64 is the shadow mode used by oracles and gradient checks
    previous = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


def finite_checking():
    return _local('check_finite', mgir_env.config.getboolean('RUNTIME', 'CHECK_FINITE', fallback=False))


@contextmanager
def check_finite(enabled=True):
    previous = finite_checking()
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = previous


class MacCounter(object):

    def __init__(self):
        self.total = 0
        self.by_op = {}

    def add(self, op, count):
        self.total += int(count)
        self.by_op[op] = self.by_op.get(op, 0) + int(count)


@contextmanager
def count_macs():
    previous = _local('macs', None)
    counter = MacCounter()
    _state.macs = counter
    try:
        yield counter
    finally:
        _state.macs = previous


def add_macs(op, count):
    counter = _local('macs', None)
    if counter is not None:
        counter.add(op, count)


class Tensor(object):

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=default_dtype()))
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        # tape that recorded this tensor as an output; None for leaves
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._tape is None

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise RankError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{label})"

    def __len__(self):
        return self.shape[0]

    # operator sugar, all routed through recorded primitives
    def __add__(self, other):
        from mgir.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from mgir.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from mgir.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from mgir.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from mgir.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from mgir.tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from mgir.tensor import ops
        return ops.div(self, other)

    def __neg__(self):
        from mgir.tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from mgir.tensor import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from mgir.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from mgir.tensor import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)

    def sum(self, axis=None, keepdims=False):
        from mgir.tensor import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from mgir.tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class TapeEntry(object):
    __slots__ = ('op', 'inputs', 'output', 'backward')

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape(object):
    """
    Ordered record of primitive applications. Entries are appended in execution order,
    which is a topological order of the graph. A tape is single-writer and can be
    traversed once.
    """

    def __init__(self):
        self.entries = []
        self.consumed = False

    def __enter__(self):
        stack = _local('tapes', None)
        if stack is None:
            stack = []
            _state.tapes = stack
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _state.tapes.pop()
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, op, inputs, output, backward):
        if self.consumed:
            raise TapeError("cannot record on a tape that has already been traversed")
        output._tape = self
        self.entries.append(TapeEntry(op, inputs, output, backward))

    def backward(self, loss, leaves=None):
        if loss.size != 1:
            raise RankError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise TapeError("tape already traversed; record the forward pass again before calling backward")
        self.consumed = True

        grads = {id(loss): np.ones_like(loss.data)}
        reached = {}
        if loss.is_leaf and loss.requires_grad:
            reached[id(loss)] = loss

        for entry in reversed(self.entries):
            grad = grads.pop(id(entry.output), None)
            if grad is None:
                continue
            input_grads = entry.backward(grad)
            for tensor, input_grad in zip(entry.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + input_grad
                else:
                    grads[key] = input_grad
                if tensor.is_leaf:
                    reached[key] = tensor

        for key, tensor in reached.items():
            grad = np.asarray(grads[key], dtype=tensor.data.dtype).reshape(tensor.shape)
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad

        if leaves is not None:
            for tensor in leaves:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)

        # drop references so intermediate buffers can be released
        self.entries = []


def active_tape():
    stack = _local('tapes', None)
    return stack[-1] if stack else None


def backward(loss, leaves=None):
    """Populate .grad on every requires_grad leaf reachable from a scalar loss."""
    if loss.size != 1:
        raise RankError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not recorded on a tape")
    tape.backward(loss, leaves)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def record(op, data, inputs, backward_fn):
    """Wrap a primitive's output and, when a gradient is needed, put it on the active tape."""
    out = Tensor(data)
    if finite_checking() and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward_fn)
    return out
