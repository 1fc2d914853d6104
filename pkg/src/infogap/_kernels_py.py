"""Pure NumPy implementations of the hot kernels.

Each function mirrors the compiled version in ``_kernels.pyx`` operation for
operation so both backends agree to the last bit on the same inputs.
"""
import numpy as np


def chebyshev_assign(table, centroids):
    """Nearest centroid under the max-abs metric; ties go to the lowest index."""
    table = np.ascontiguousarray(table, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    n = table.shape[0]
    assign = np.zeros(n, dtype=np.int64)
    best = np.full(n, np.inf)
    # loop over centroids keeps memory at O(n * |Y|)
    for k in range(centroids.shape[0]):
        d = np.max(np.abs(table - centroids[k]), axis=1)
        better = d < best
        assign[better] = k
        best[better] = d[better]
    return assign, best


def binary_state_probs(act):
    """Probability of every binary state u in {0,1}^m for each row of activations.

    State index ``s`` encodes unit ``j`` in bit ``j``.
    """
    act = np.ascontiguousarray(act, dtype=np.float64)
    n, m = act.shape
    out = np.ones((n, 1 << m))
    width = 1
    for j in range(m):
        p = act[:, j:j + 1]
        out[:, width:2 * width] = out[:, :width] * p
        out[:, :width] = out[:, :width] * (1.0 - p)
        width *= 2
    return out


def rotate_bilinear(images, angles):
    """Rotate each image about its centre, bilinear interpolation, zero fill."""
    images = np.ascontiguousarray(images, dtype=np.float64)
    angles = np.ascontiguousarray(angles, dtype=np.float64)
    n, h, w = images.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy = rr - cy
    dx = cc - cx
    out = np.zeros_like(images)
    padded = np.zeros((h + 2, w + 2))
    for i in range(n):
        c = np.cos(angles[i])
        s = np.sin(angles[i])
        sy = cy + c * dy - s * dx
        sx = cx + s * dy + c * dx
        y0 = np.floor(sy)
        x0 = np.floor(sx)
        fy = sy - y0
        fx = sx - x0
        # shift by one so out-of-frame neighbours land on the zero border
        yi = np.clip(y0.astype(np.int64) + 1, 0, h + 1)
        xi = np.clip(x0.astype(np.int64) + 1, 0, w + 1)
        yj = np.clip(y0.astype(np.int64) + 2, 0, h + 1)
        xj = np.clip(x0.astype(np.int64) + 2, 0, w + 1)
        padded[1:h + 1, 1:w + 1] = images[i]
        v = ((1.0 - fy) * (1.0 - fx)) * padded[yi, xi]
        v = v + ((1.0 - fy) * fx) * padded[yi, xj]
        v = v + (fy * (1.0 - fx)) * padded[yj, xi]
        v = v + (fy * fx) * padded[yj, xj]
        out[i] = np.clip(v, 0.0, 1.0)
    return out
