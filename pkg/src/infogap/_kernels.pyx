# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay operation-for-operation equal to _kernels_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, fabs, INFINITY

cnp.import_array()


def chebyshev_assign(table, centroids):
    cdef double[:, ::1] t = np.ascontiguousarray(table, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], ny = t.shape[1], kk = c.shape[0]
    cdef Py_ssize_t i, k, y
    cdef double d, a, best
    cdef long long arg
    assign_arr = np.zeros(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] assign = assign_arr
    cdef double[::1] dist = dist_arr
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for k in range(kk):
                d = 0.0
                for y in range(ny):
                    a = fabs(t[i, y] - c[k, y])
                    if a > d:
                        d = a
                if d < best:
                    best = d
                    arg = k
            assign[i] = arg
            dist[i] = best
    return assign_arr, dist_arr


def binary_state_probs(act):
    cdef double[:, ::1] a = np.ascontiguousarray(act, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, j, s, width
    cdef double p, q
    out_arr = np.ones((n, 1 << m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            width = 1
            for j in range(m):
                p = a[i, j]
                for s in range(width):
                    q = out[i, s]
                    out[i, width + s] = q * p
                    out[i, s] = q * (1.0 - p)
                width = width * 2
    return out_arr


cdef inline double _pixel(double[:, :, ::1] img, Py_ssize_t i, Py_ssize_t r, Py_ssize_t c,
                          Py_ssize_t h, Py_ssize_t w) nogil:
    if r < 0 or r >= h or c < 0 or c >= w:
        return 0.0
    return img[i, r, c]


def rotate_bilinear(images, angles):
    cdef double[:, :, ::1] img = np.ascontiguousarray(images, dtype=np.float64)
    cdef double[::1] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t n = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef Py_ssize_t i, r, col
    cdef long long y0, x0
    cdef double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0
    cdef double cs, sn, dy, dx, sy, sx, fy, fx, v, fy0, fx0
    out_arr = np.zeros((n, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for i in range(n):
            cs = cos(ang[i])
            sn = sin(ang[i])
            for r in range(h):
                dy = r - cy
                for col in range(w):
                    dx = col - cx
                    sy = cy + cs * dy - sn * dx
                    sx = cx + sn * dy + cs * dx
                    fy0 = floor(sy)
                    fx0 = floor(sx)
                    fy = sy - fy0
                    fx = sx - fx0
                    y0 = <long long>fy0
                    x0 = <long long>fx0
                    v = ((1.0 - fy) * (1.0 - fx)) * _pixel(img, i, y0, x0, h, w)
                    v = v + ((1.0 - fy) * fx) * _pixel(img, i, y0, x0 + 1, h, w)
                    v = v + (fy * (1.0 - fx)) * _pixel(img, i, y0 + 1, x0, h, w)
                    v = v + (fy * fx) * _pixel(img, i, y0 + 1, x0 + 1, h, w)
                    if v < 0.0:
                        v = 0.0
                    elif v > 1.0:
                        v = 1.0
                    out[i, r, col] = v
    return out_arr
