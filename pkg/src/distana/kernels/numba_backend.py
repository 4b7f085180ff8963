"""Numba-compiled twins of the kernels in ``numpy_backend``.

Same contracts and the same per-element arithmetic order; see the
numpy module for semantics. fastmath stays off so the loops keep strict
IEEE behavior and results are reproducible run to run.
"""

import math

import numpy as np
from numba import njit

_JIT = {"cache": True}


@njit(**_JIT)
def _sigmoid(x):
    if x >= 0.0:
        t = math.exp(-x)
        return 1.0 / (1.0 + t)
    t = math.exp(x)
    return t / (1.0 + t)


@njit(**_JIT)
def lstm_cell_forward(z, c_prev):
    n, four_h = z.shape
    h = four_h // 4
    i = np.empty((n, h))
    f = np.empty((n, h))
    g = np.empty((n, h))
    o = np.empty((n, h))
    c_new = np.empty((n, h))
    tc = np.empty((n, h))
    h_new = np.empty((n, h))
    for r in range(n):
        for k in range(h):
            iv = _sigmoid(z[r, k])
            fv = _sigmoid(z[r, h + k])
            gv = math.tanh(z[r, 2 * h + k])
            ov = _sigmoid(z[r, 3 * h + k])
            cv = fv * c_prev[r, k] + iv * gv
            tv = math.tanh(cv)
            i[r, k] = iv
            f[r, k] = fv
            g[r, k] = gv
            o[r, k] = ov
            c_new[r, k] = cv
            tc[r, k] = tv
            h_new[r, k] = ov * tv
    return h_new, c_new, i, f, g, o, tc

@njit(**_JIT)
def lstm_cell_backward(dh, dc, c_prev, i, f, g, o, tc):
    n, h = dh.shape
    dz = np.empty((n, 4 * h))
    dc_prev = np.empty((n, h))
    for r in range(n):
        for k in range(h):
            tv = tc[r, k]
            dcs = dc[r, k] + dh[r, k] * o[r, k] * (1.0 - tv * tv)
            iv = i[r, k]
            fv = f[r, k]
            gv = g[r, k]
            ov = o[r, k]
            dz[r, k] = dcs * gv * iv * (1.0 - iv)
            dz[r, h + k] = dcs * c_prev[r, k] * fv * (1.0 - fv)
            dz[r, 2 * h + k] = dcs * iv * (1.0 - gv * gv)
            dz[r, 3 * h + k] = dh[r, k] * tv * ov * (1.0 - ov)
            dc_prev[r, k] = dcs * fv
    return dz, dc_prev


@njit(**_JIT)
def gather_sum(buf, idx):
    n, width = buf.shape
    out = np.zeros((n, width))
    for d in range(idx.shape[0]):
        for c in range(n):
            j = idx[d, c]
            if j >= 0:
                for k in range(width):
                    out[c, k] += buf[j, k]
    return out

@njit(**_JIT)
def gather_sum_backward(grad, idx):
    n, width = grad.shape
    dbuf = np.zeros((n, width))
    for d in range(idx.shape[0]):
        for c in range(n):
            j = idx[d, c]
            if j >= 0:
                for k in range(width):
                    dbuf[j, k] += grad[c, k]
    return dbuf


@njit(**_JIT)
def gather_slot(buf, idx, slots):
    n_dir = idx.shape[0]
    n = buf.shape[0]
    out = np.zeros((n, n_dir))
    for d in range(n_dir):
        s = slots[d]
        for c in range(n):
            j = idx[d, c]
            if j >= 0:
                out[c, d] = buf[j, s]
    return out

@njit(**_JIT)
def gather_slot_backward(grad, idx, slots, width):
    n = grad.shape[0]
    dbuf = np.zeros((n, width))
    for d in range(idx.shape[0]):
        s = slots[d]
        for c in range(n):
            j = idx[d, c]
            if j >= 0:
                dbuf[j, s] += grad[c, d]
    return dbuf


@njit(**_JIT)
def wave2d_step(prev, curr, coef_x, coef_y):
    h, w = curr.shape
    out = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            u = curr[r, c]
            left = curr[r, c - 1] if c > 0 else 0.0
            right = curr[r, c + 1] if c < w - 1 else 0.0
            up = curr[r - 1, c] if r > 0 else 0.0
            down = curr[r + 1, c] if r < h - 1 else 0.0
            out[r, c] = (
                coef_x * (left + right - 2.0 * u)
                + coef_y * (up + down - 2.0 * u)
                + 2.0 * u
                - prev[r, c]
            )
    return out


@njit(**_JIT)
def ds1_frame(height, width, center_x, center_y, ct, decay):
    out = np.zeros((height, width))
    for row in range(height):
        dy = row - center_y
        for col in range(width):
            dx = col - center_x
            r = math.sqrt(dx * dx + dy * dy)
            if r < ct:
                out[row, col] = math.sin(r - ct) * math.exp(-decay * (ct - r))
    return out
