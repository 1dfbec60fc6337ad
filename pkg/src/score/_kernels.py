"""Numba kernels for 3x3x3 zero-padded 3D convolution.

Parallel loops only ever split over axes *without* cross-thread
reductions (output rows for the data kernels, output channels for the
weight gradients), so results are bit-identical run to run regardless
of thread scheduling.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=False, cache=True)
def conv3d(xp, w, bias, out):
    """out[o] = bias[o] + sum_ci conv(xp[ci], w[o, ci]); xp is pre-padded by 1."""
    n_out = w.shape[0]
    n_in = w.shape[1]
    nx, ny, nz = out.shape[1], out.shape[2], out.shape[3]
    for xx in prange(nx):
        row = np.empty(nz, dtype=out.dtype)
        for o in range(n_out):
            for yy in range(ny):
                for zz in range(nz):
                    row[zz] = bias[o]
                for ci in range(n_in):
                    for a in range(3):
                        for b in range(3):
                            src = xp[ci, xx + a, yy + b]
                            for c in range(3):
                                wv = w[o, ci, a, b, c]
                                for zz in range(nz):
                                    row[zz] += wv * src[zz + c]
                for zz in range(nz):
                    out[o, xx, yy, zz] = row[zz]


@njit(parallel=True, fastmath=False, cache=True)
def conv3d_grad_w(xp, dout, dw, db):
    """dw[o,ci,a,b,c] = sum_v dout[o,v] * xp[ci, v+(a,b,c)]; db[o] = sum dout[o].

    One streaming pass over the data per output channel; the (ci,a,b,c)
    accumulators live in dw[o] which fits in L1.
    """
    n_out = dout.shape[0]
    n_in = xp.shape[0]
    nx, ny, nz = dout.shape[1], dout.shape[2], dout.shape[3]
    for o in prange(n_out):
        dw[o] = 0.0
        acc_b = 0.0
        for xx in range(nx):
            for yy in range(ny):
                d_row = dout[o, xx, yy]
                for zz in range(nz):
                    acc_b += d_row[zz]
                for ci in range(n_in):
                    for a in range(3):
                        for b in range(3):
                            x_row = xp[ci, xx + a, yy + b]
                            a0 = 0.0
                            a1 = 0.0
                            a2 = 0.0
                            for zz in range(nz):
                                d = d_row[zz]
                                a0 += d * x_row[zz]
                                a1 += d * x_row[zz + 1]
                                a2 += d * x_row[zz + 2]
                            dw[o, ci, a, b, 0] += a0
                            dw[o, ci, a, b, 1] += a1
                            dw[o, ci, a, b, 2] += a2
        db[o] = acc_b
