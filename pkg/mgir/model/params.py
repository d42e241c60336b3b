"""
Description:
ParameterStore: named, shaped, differentiable parameter tensors with gradient slots.
Names are dotted paths such as 'encoder.stage1.embed.weight'; insertion order is kept,
which fixes both the initialization order and the optimizer's iteration order.
"""

from collections import OrderedDict

import numpy as np

from mgir.errors import ConfigurationError, DimensionError
from mgir.tensor.tensor import Tensor


class ParameterStore(object):

    def __init__(self):
        self.params = OrderedDict()

    def add(self, name, value):
        if name in self.params:
            raise ConfigurationError(f"parameter '{name}' registered twice")
        tensor = Tensor(np.asarray(value, dtype=np.float32), requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def __getitem__(self, name):
        try:
            return self.params[name]
        except KeyError:
            raise ConfigurationError(f"missing parameter '{name}'")

    def __contains__(self, name):
        return name in self.params

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.grad = np.zeros_like(tensor.data)

    def count(self):
        return int(sum(t.size for t in self.params.values()))

    def state_dict(self):
        return OrderedDict((name, t.data.copy()) for name, t in self.params.items())

    def load_state_dict(self, state):
        missing = [name for name in self.params if name not in state]
        unexpected = [name for name in state if name not in self.params]
        if missing or unexpected:
            raise ConfigurationError("parameter set mismatch",
                                     [f"missing '{n}'" for n in missing] + [f"unexpected '{n}'" for n in unexpected])
        for name, tensor in self.params.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise DimensionError(f"parameter '{name}' has shape {value.shape}, expected {tensor.shape}")
            tensor.data = np.ascontiguousarray(value, dtype=tensor.data.dtype)

    def copy(self, dtype=np.float32):
        other = ParameterStore()
        for name, tensor in self.params.items():
            copied = Tensor(tensor.data, requires_grad=True, name=name)
            # bypass the constructor's default-dtype cast
            copied.data = np.array(tensor.data, dtype=dtype)
            other.params[name] = copied
        return other


def count_params(store):
    """Sum of element counts over all registered parameter tensors."""
    return store.count()


# initializers, all drawing from one numpy Generator so a seed fixes the whole store

def init_linear(store, rng, name, fan_in, fan_out, bias=True, zero=False):
    bound = 1.0 / np.sqrt(fan_in)
    weight = np.zeros((fan_in, fan_out)) if zero else rng.uniform(-bound, bound, size=(fan_in, fan_out))
    store.add(f"{name}.weight", weight)
    if bias:
        store.add(f"{name}.bias", np.zeros(fan_out) if zero else rng.uniform(-bound, bound, size=fan_out))


def init_conv(store, rng, name, c_in, c_out, kernel, bias=True):
    fan_in = c_in * int(np.prod(kernel))
    bound = 1.0 / np.sqrt(fan_in)
    store.add(f"{name}.weight", rng.uniform(-bound, bound, size=(c_out, c_in) + tuple(kernel)))
    if bias:
        store.add(f"{name}.bias", rng.uniform(-bound, bound, size=c_out))


def init_depthwise(store, rng, name, channels, kernel):
    bound = 1.0 / np.sqrt(int(np.prod(kernel)))
    store.add(f"{name}.weight", rng.uniform(-bound, bound, size=(channels, 1) + tuple(kernel)))
    store.add(f"{name}.bias", rng.uniform(-bound, bound, size=channels))


def init_norm(store, name, channels):
    store.add(f"{name}.gamma", np.ones(channels))
    store.add(f"{name}.beta", np.zeros(channels))
