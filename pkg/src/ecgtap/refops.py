"""Naive reference operators.

Plain nested-loop float64 implementations of every graph operator.  They
are the oracle the vectorized executor is checked against and are far too
slow for real inputs; keep them boring.
"""

from __future__ import annotations

import numpy as np


def conv2d(x, weight, bias, stride, padding):
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    padded = np.zeros((c_in, h + 2 * ph, w + 2 * pw))
    padded[:, ph : ph + h, pw : pw + w] = x
    out = np.zeros((c_out, oh, ow))
    for co in range(c_out):
        for oy in range(oh):
            for ox in range(ow):
                acc = 0.0
                for ci in range(c_in):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += (
                                padded[ci, oy * sh + ky, ox * sw + kx]
                                * weight[co, ci, ky, kx]
                            )
                out[co, oy, ox] = acc
        if bias is not None:
            out[co] += float(bias[co])
    return out


def batchnorm(x, gamma, beta, mean, var, epsilon):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        out[c] = (x[c] - float(mean[c])) / np.sqrt(float(var[c]) + epsilon) * float(
            gamma[c]
        ) + float(beta[c])
    return out


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, 0.0)


def _pool(x, kernel, stride, padding, fill, reducer):
    x = np.asarray(x, dtype=np.float64)
    c_in, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    padded = np.full((c_in, h + 2 * ph, w + 2 * pw), fill)
    padded[:, ph : ph + h, pw : pw + w] = x
    out = np.empty((c_in, oh, ow))
    for c in range(c_in):
        for oy in range(oh):
            for ox in range(ow):
                window = padded[c, oy * sh : oy * sh + kh, ox * sw : ox * sw + kw]
                out[c, oy, ox] = reducer(window)
    return out


def maxpool(x, kernel, stride, padding):
    return _pool(x, kernel, stride, padding, -np.inf, np.max)


def avgpool(x, kernel, stride, padding):
    # padding counts toward the divisor (kernel area)
    return _pool(x, kernel, stride, padding, 0.0, np.mean)


def concat(tensors):
    return np.concatenate([np.asarray(t, dtype=np.float64) for t in tensors], axis=0)


def global_avgpool(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((x.shape[0], 1, 1))
    for c in range(x.shape[0]):
        out[c, 0, 0] = x[c].mean()
    return out
