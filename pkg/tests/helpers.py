"""Independent oracles shared by the test modules."""

import numpy as np

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-8


def numeric_grad(f, x, step=FD_STEP, coords=None):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place and restored).

    ``coords`` limits the check to a list of flat indices.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    out = {}
    for i in idx:
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * step)
    return out


def grad_mismatch(analytic, numeric):
    """Largest ``|a - n| / (REL_TOL * max(|a|, |n|) + ABS_FLOOR)``; <= 1 means within tolerance."""
    worst = 0.0
    for i, n in numeric.items():
        a = analytic.reshape(-1)[i]
        worst = max(worst, abs(a - n) / (REL_TOL * max(abs(a), abs(n)) + ABS_FLOOR))
    return worst


def max_relative_error(analytic, numeric):
    worst = 0.0
    for i, n in numeric.items():
        a = analytic.reshape(-1)[i]
        scale = max(abs(a), abs(n))
        if scale > ABS_FLOOR / REL_TOL:
            worst = max(worst, abs(a - n) / scale)
    return worst


def conv1d_direct(x, w, b):
    """Loop-based "same" temporal convolution for x (C_in, T), w (C_out, C_in, k), b (C_out,)."""
    c_out, c_in, k = w.shape
    T = x.shape[1]
    pad = (k - 1) // 2
    y = np.zeros((c_out, T))
    for o in range(c_out):
        for t in range(T):
            acc = b[o]
            for i in range(c_in):
                for j in range(k):
                    src = t + j - pad
                    if 0 <= src < T:
                        acc += w[o, i, j] * x[i, src]
            y[o, t] = acc
    return y
