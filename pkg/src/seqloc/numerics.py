"""Dense array helpers shared by every layer.

Arrays are plain ``numpy.ndarray`` objects in float64. Each activation comes
with a derivative expressed in terms of the activation *output*, which is
what the hand-written backward passes cache.
"""

import numpy as np

DTYPE = np.float64
_ABOVE_ZERO = np.finfo(DTYPE).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


def as_tensor(x):
    return np.asarray(x, dtype=DTYPE)


def matmul(a, b):
    """Matrix product with a shape check that reports both operands."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def sigmoid(x):
    x = as_tensor(x)
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # Keep the open interval (0, 1) even where float64 would round to an end.
    return np.clip(out, _ABOVE_ZERO, _BELOW_ONE, out=out)


def sigmoid_grad(y):
    """Derivative of the sigmoid given its output ``y``."""
    return y * (1.0 - y)


def tanh(x):
    return np.clip(np.tanh(as_tensor(x)), -_BELOW_ONE, _BELOW_ONE)


def tanh_grad(y):
    """Derivative of tanh given its output ``y``."""
    return 1.0 - y * y


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def relu_grad(y):
    return (y > 0).astype(DTYPE)


def softmax(x, axis=-1):
    x = as_tensor(x)
    if x.size == 0:
        raise ValueError("softmax of an empty array")
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def logsumexp(x, axis=-1):
    x = as_tensor(x)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def make_rng(seed):
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def glorot_bound(fan_in, fan_out):
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError(f"fans must be positive, got {fan_in}, {fan_out}")
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_uniform(shape, rng, fan_in, fan_out):
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)
