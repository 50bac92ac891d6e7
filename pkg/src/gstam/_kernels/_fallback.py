"""Pure numpy temporal convolution kernels.

Canonical layout, shared with the compiled backend::

    x      (N, G, C_in, T)       N samples, G independent channel groups
    weight (G, C_out, C_in, k)   k odd, zero "same" padding of (k - 1) // 2
    bias   (G, C_out)
    out    (N, G, C_out, T)

Each group is one GEMM: ``weight[g]`` as ``(C_out, C_in * k)`` against the
unfolded input ``(C_in * k, N * T)``.
"""

import numpy as np


def _unfold(x, k):
    """``(G, C_in * k, N * T)`` matrix of shifted, zero-padded input frames."""
    N, G, C_in, T = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((G, C_in, N, T + 2 * pad))
    xp[..., pad:pad + T] = x.transpose(1, 2, 0, 3)
    cols = np.empty((G, C_in, k, N, T))
    for j in range(k):
        cols[:, :, j] = xp[..., j:j + T]
    return cols.reshape(G, C_in * k, N * T)


def conv1d_forward(x, weight, bias):
    N, G, _, T = x.shape
    _, C_out, C_in, k = weight.shape
    res = np.matmul(weight.reshape(G, C_out, C_in * k), _unfold(x, k))  # (G, C_out, N*T)
    out = res.reshape(G, C_out, N, T).transpose(2, 0, 1, 3) + bias[None, :, :, None]
    return np.ascontiguousarray(out)


def conv1d_backward(x, weight, grad_out):
    """Return ``(grad_x, grad_weight, grad_bias)`` for ``conv1d_forward``."""
    N, G, _, T = x.shape
    _, C_out, C_in, k = weight.shape
    pad = (k - 1) // 2
    dres = grad_out.transpose(1, 2, 0, 3).reshape(G, C_out, N * T)
    grad_weight = np.matmul(dres, _unfold(x, k).transpose(0, 2, 1)).reshape(weight.shape)
    grad_bias = dres.sum(axis=2)
    dcols = np.matmul(weight.reshape(G, C_out, C_in * k).transpose(0, 2, 1), dres).reshape(G, C_in, k, N, T)
    dxp = np.zeros((G, C_in, N, T + 2 * pad))
    for j in range(k):
        dxp[..., j:j + T] += dcols[:, :, j]
    grad_x = dxp[..., pad:pad + T].transpose(2, 0, 1, 3)
    return np.ascontiguousarray(grad_x), grad_weight, grad_bias
