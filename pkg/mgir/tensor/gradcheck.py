"""
Description:
Central finite-difference gradient checks in 64-bit shadow precision.
"""

import numpy as np

from mgir.tensor.tensor import Tape, Tensor, backward, precision


def shadow(*arrays, requires_grad=True):
    """Wrap arrays as float64 leaves."""
    with precision(np.float64):
        return [Tensor(np.asarray(a, dtype=np.float64), requires_grad=requires_grad) for a in arrays]


def gradcheck(fn, inputs, step=1e-3):
    """
    Compare tape gradients of the scalar fn() with central differences over every element
    of every tensor in inputs. fn must close over the tensors in inputs and read their data
    on each call. Returns the worst norm-wise relative error across inputs.
    """
    with precision(np.float64):
        for tensor in inputs:
            tensor.data = tensor.data.astype(np.float64)
            tensor.grad = None
        with Tape():
            loss = fn()
        backward(loss, leaves=inputs)
        analytic = [np.array(t.grad, dtype=np.float64) for t in inputs]

        worst = 0.0
        for tensor, grad in zip(inputs, analytic):
            numeric = np.zeros_like(grad)
            flat = tensor.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                plus = fn().item()
                flat[i] = original - step
                minus = fn().item()
                flat[i] = original
                numeric.reshape(-1)[i] = (plus - minus) / (2.0 * step)
            scale = max(np.linalg.norm(grad) + np.linalg.norm(numeric), 1e-6)
            worst = max(worst, float(np.linalg.norm(grad - numeric) / scale))
        return worst
