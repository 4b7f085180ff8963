"""Pure-numpy implementations of the hot numeric kernels.

These functions define the kernel contract (shapes, gate ordering,
accumulation order, boundary handling); the numba twins in
``numba_backend`` follow the same per-element arithmetic. Kernels built
from +/* only (gathers, scatters, the wave stencil) agree with the numba
backend bitwise; kernels using transcendental functions (lstm_cell_*,
ds1_frame) may differ in the last ulp because numpy's vectorized sin/exp
are not the libm routines.

Conventions:
  * everything is float64, C-order
  * LSTM gate blocks in a (n, 4H) preactivation are [input, forget,
    candidate, output], each of width H
  * neighbor index tables are (8, n) int64 with -1 marking an absent edge
"""

import numpy as np


def sigmoid(x):
    """Logistic function in the overflow-safe branch form."""
    t = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def lstm_cell_forward(z, c_prev):
    """Pointwise LSTM cell update from gate preactivations.

    z: (n, 4H) preactivations, c_prev: (n, H). Returns
    (h_new, c_new, i, f, g, o, tc); the last five are the cache the
    backward pass needs.
    """
    n, four_h = z.shape
    h = four_h // 4
    i = sigmoid(z[:, :h])
    f = sigmoid(z[:, h:2 * h])
    g = np.tanh(z[:, 2 * h:3 * h])
    o = sigmoid(z[:, 3 * h:])
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, i, f, g, o, tc

def lstm_cell_backward(dh, dc, c_prev, i, f, g, o, tc):
    """Gradients of the pointwise LSTM update.

    dh, dc: upstream gradients for h_new and c_new. Returns (dz, dc_prev).
    """
    n, h = dh.shape
    dcs = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty((n, 4 * h))
    dz[:, :h] = dcs * g * i * (1.0 - i)
    dz[:, h:2 * h] = dcs * c_prev * f * (1.0 - f)
    dz[:, 2 * h:3 * h] = dcs * i * (1.0 - g * g)
    dz[:, 3 * h:] = dh * tc * o * (1.0 - o)
    dc_prev = dcs * f
    return dz, dc_prev


def gather_sum(buf, idx):
    """Sum neighbor rows: out[c] = sum_d buf[idx[d, c]], skipping -1.

    Accumulates in fixed direction order so results are reproducible.
    """
    out = np.zeros_like(buf)
    for d in range(idx.shape[0]):
        j = idx[d]
        m = j >= 0
        out[m] += buf[j[m]]
    return out

def gather_sum_backward(grad, idx):
    """Scatter-add adjoint of gather_sum."""
    dbuf = np.zeros_like(grad)
    for d in range(idx.shape[0]):
        j = idx[d]
        m = j >= 0
        np.add.at(dbuf, j[m], grad[m])
    return dbuf


def gather_slot(buf, idx, slots):
    """Direction-indexed gather: out[c, d] = buf[idx[d, c], slots[d]], 0 if absent."""
    n_dir = idx.shape[0]
    out = np.zeros((buf.shape[0], n_dir))
    for d in range(n_dir):
        j = idx[d]
        m = j >= 0
        out[m, d] = buf[j[m], slots[d]]
    return out

def gather_slot_backward(grad, idx, slots, width):
    """Scatter adjoint of gather_slot; returns (n, width) buffer gradient."""
    dbuf = np.zeros((grad.shape[0], width))
    for d in range(idx.shape[0]):
        j = idx[d]
        m = j >= 0
        np.add.at(dbuf[:, slots[d]], j[m], grad[m, d])
    return dbuf


def wave2d_step(prev, curr, coef_x, coef_y):
    """Explicit second-order update of the 2D wave field.

    coef_x/coef_y are (speed*dt/dx)^2 and (speed*dt/dy)^2. Samples outside
    the field are zero. x varies along columns, y along rows.
    """
    h, w = curr.shape
    p = np.zeros((h + 2, w + 2))
    p[1:-1, 1:-1] = curr
    return (
        coef_x * (p[1:-1, :-2] + p[1:-1, 2:] - 2.0 * curr)
        + coef_y * (p[:-2, 1:-1] + p[2:, 1:-1] - 2.0 * curr)
        + 2.0 * curr
        - prev
    )


def ds1_frame(height, width, center_x, center_y, ct, decay):
    """Closed-form radial ripple at wavefront radius ct.

    u = sin(r - ct) * exp(-decay * (ct - r)) inside the front (r < ct),
    zero ahead of it. x is the column index, y the row index.
    """
    cols = np.arange(width, dtype=np.float64)[None, :]
    rows = np.arange(height, dtype=np.float64)[:, None]
    dx = cols - center_x
    dy = rows - center_y
    r = np.sqrt(dx * dx + dy * dy)
    out = np.zeros((height, width))
    inside = r < ct  # ahead of the front the exponential would overflow
    ri = r[inside]
    out[inside] = np.sin(ri - ct) * np.exp(-decay * (ct - ri))
    return out
