"""
Description:
Adam optimizer over a ParameterStore.

Moments are kept per parameter name so they can be checkpointed next to the parameters.
"""

import numpy as np


def adam_step(param, grad, m, v, t, lr, betas=(0.9, 0.999), eps=1e-8):
    """
    One in-place Adam update of param (numpy arrays) at timestep t >= 1.
    m and v are updated in place as well.
    """
    beta1, beta2 = betas
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)
    return param


class Adam(object):

    def __init__(self, lr=4e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, store):
        self.t += 1
        for name, param in store.items():
            if param.grad is None:
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(param.data)
                self.v[name] = np.zeros_like(param.data)
            adam_step(param.data, param.grad, self.m[name], self.v[name], self.t, self.lr, self.betas, self.eps)

    def state_dict(self):
        return {'t': self.t, 'm': dict(self.m), 'v': dict(self.v)}

    def load_state_dict(self, state):
        self.t = int(state['t'])
        self.m = {name: np.array(value, dtype=np.float32) for name, value in state['m'].items()}
        self.v = {name: np.array(value, dtype=np.float32) for name, value in state['v'].items()}
