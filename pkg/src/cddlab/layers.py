"""Dense-array neural network primitives with hand-written backward passes.

Everything operates on [N, C, H, W] batches. Forward functions return
(output, cache); backward functions consume the cache and an upstream
gradient and return input/parameter gradients. Keeping the chain rule
explicit is what makes the finite-difference gradient contract checkable
layer by layer.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError

LEAKY_SLOPE = 0.1


# ---------------------------------------------------------------------------
# convolution (im2col + GEMM)

def conv2d_forward(x, w, b, stride=1, pad=1):
    """3x3-style convolution. x: [N,C,H,W], w: [Co,C,kh,kw], b: [Co]."""
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if ci != c:
        raise InputError(f"conv2d: input has {c} channels, kernel expects {ci}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, kh * kw, ho, wo), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki * kw + kj] = xp[:, :, ki:ki + stride * ho:stride,
                                          kj:kj + stride * wo:stride]
    cols2 = np.ascontiguousarray(cols.transpose(0, 3, 4, 1, 2)).reshape(n * ho * wo, c * kh * kw)
    y = cols2 @ w.reshape(co, -1).T + b
    y = y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2)
    cache = (cols2, x.shape, w, stride, pad, ho, wo)
    return y, cache


def conv2d_backward(dy, cache):
    """Returns (dx, dw, db) for conv2d_forward."""
    cols2, xshape, w, stride, pad, ho, wo = cache
    n, c, h, wd = xshape
    co, ci, kh, kw = w.shape
    dyf = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * ho * wo, co)
    dw = (dyf.T @ cols2).reshape(w.shape)
    db = dyf.sum(axis=0)
    dcols = dyf @ w.reshape(co, -1)
    dcols = dcols.reshape(n, ho, wo, c, kh * kw).transpose(0, 3, 4, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=dy.dtype)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, :, ki:ki + stride * ho:stride,
                kj:kj + stride * wo:stride] += dcols[:, :, ki * kw + kj]
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw, db


# ---------------------------------------------------------------------------
# resampling

def avg_pool_forward(x, factor):
    """Non-overlapping mean pooling by `factor` along both spatial axes."""
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise InputError(f"avg_pool: {h}x{w} not divisible by {factor}")
    y = x.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))
    return y, (x.shape, factor)


def avg_pool_backward(dy, cache):
    xshape, factor = cache
    dx = np.repeat(np.repeat(dy, factor, axis=2), factor, axis=3) / (factor * factor)
    return dx.astype(dy.dtype, copy=False)


def nearest_up_forward(x, factor):
    """Nearest-neighbor upsampling by integer `factor`."""
    y = np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)
    return y, (x.shape, factor)


def nearest_up_backward(dy, cache):
    xshape, factor = cache
    n, c, h, w = xshape
    return dy.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))


# ---------------------------------------------------------------------------
# activations

def act_forward(x, kind):
    if kind == "lrelu":
        return np.where(x >= 0, x, LEAKY_SLOPE * x), x
    if kind == "tanh":
        y = np.tanh(x)
        return y, y
    raise InputError(f"unknown nonlinearity {kind!r}")


def act_backward(dy, cache, kind):
    if kind == "lrelu":
        return np.where(cache >= 0, dy, LEAKY_SLOPE * dy)
    if kind == "tanh":
        return dy * (1.0 - cache * cache)
    raise InputError(f"unknown nonlinearity {kind!r}")


# ---------------------------------------------------------------------------
# parameter initialisation

def init_conv(rng, c_out, c_in, k, dtype):
    """He-scaled Gaussian weights, zero bias."""
    fan_in = c_in * k * k
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, k, k)).astype(dtype)
    b = np.zeros(c_out, dtype=dtype)
    return w, b


def init_conv_orthogonal(rng, c_out, c_in, k, dtype, gain=np.sqrt(2.0)):
    """Random filters with orthonormal rows (scaled): the projection
    geometry is far more consistent across draws than iid Gaussian."""
    fan_in = c_in * k * k
    a = rng.normal(0.0, 1.0, (fan_in, fan_in))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity for determinism
    if c_out > fan_in:
        reps = int(np.ceil(c_out / fan_in))
        q = np.concatenate([q] * reps, axis=0)
    w = (gain * q[:c_out]).reshape(c_out, c_in, k, k)
    b = np.zeros(c_out, dtype=dtype)
    return w.astype(dtype), b


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays."""

    def __init__(self, params, lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
