"""Compiled inner loops for the 3x3 convolution paths.

Single-threaded kernels with IEEE-ordered accumulation (fastmath off),
so results are bit-deterministic; they release the GIL so independent
per-image graphs can run on worker threads. The generic-kernel
fallback lives in tensor.py; these cover the hot 3x3 cases of the
network.
"""

import numba
import numpy as np


@numba.njit(cache=True, fastmath=False, nogil=True)
def conv3x3_forward(xp, k):
    """xp: (N, C, Hp, Wp) padded input, k: (O, C, 3, 3) -> (N, O, Hp-2, Wp-2)."""
    n_img, c_in, hp, wp = xp.shape
    c_out = k.shape[0]
    ho, wo = hp - 2, wp - 2
    out = np.zeros((n_img, c_out, ho, wo))
    for n in range(n_img):
      for o in range(c_out):
        acc = out[n, o]
        for c in range(c_in):
            k00, k01, k02 = k[o, c, 0, 0], k[o, c, 0, 1], k[o, c, 0, 2]
            k10, k11, k12 = k[o, c, 1, 0], k[o, c, 1, 1], k[o, c, 1, 2]
            k20, k21, k22 = k[o, c, 2, 0], k[o, c, 2, 1], k[o, c, 2, 2]
            for i in range(ho):
                r0 = xp[n, c, i]
                r1 = xp[n, c, i + 1]
                r2 = xp[n, c, i + 2]
                row = acc[i]
                for j in range(wo):
                    row[j] += (
                        k00 * r0[j] + k01 * r0[j + 1] + k02 * r0[j + 2]
                        + k10 * r1[j] + k11 * r1[j + 1] + k12 * r1[j + 2]
                        + k20 * r2[j] + k21 * r2[j + 1] + k22 * r2[j + 2]
                    )
    return out


@numba.njit(cache=True, fastmath=False, nogil=True)
def conv3x3_kernel_grad(g, xp):
    """g: (N, O, Ho, Wo) output grad, xp: (N, C, Ho+2, Wo+2) -> (O, C, 3, 3)."""
    n_img, c_out, ho, wo = g.shape
    c_in = xp.shape[1]
    dk = np.zeros((c_out, c_in, 3, 3))
    for o in range(c_out):
      for c in range(c_in):
        for di in range(3):
            for dj in range(3):
                acc = 0.0
                for n in range(n_img):
                    for i in range(ho):
                        grow = g[n, o, i]
                        xrow = xp[n, c, i + di]
                        for j in range(wo):
                            acc += grow[j] * xrow[j + dj]
                dk[o, c, di, dj] = acc
    return dk
