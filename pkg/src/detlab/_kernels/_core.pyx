# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: direct convolution, one-sided Jacobi singular
values, and greedy IoU suppression.

Signatures and floating-point formulas mirror ``_fallback``; only the
loop organization differs (the convolution here accumulates per output
pixel). MAC counts are tallied literally in the inner loop.
"""

import numpy as np

from libc.math cimport fabs, sqrt


def conv2d_direct(double[:, :, :, ::1] xp, double[:, :, :, ::1] w, Py_ssize_t stride, Py_ssize_t groups):
    """Direct cross-correlation of a pre-padded NCHW input; see _fallback."""
    cdef Py_ssize_t n_batch = xp.shape[0]
    cdef Py_ssize_t hp = xp.shape[2]
    cdef Py_ssize_t wp = xp.shape[3]
    cdef Py_ssize_t c_out = w.shape[0]
    cdef Py_ssize_t cig = w.shape[1]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t h_out = (hp - k) // stride + 1
    cdef Py_ssize_t w_out = (wp - k) // stride + 1
    cdef Py_ssize_t cog = c_out // groups

    out_arr = np.zeros((n_batch, c_out, h_out, w_out), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, g, oci, oc, oh, ow, ici, ic, kh, kw
    cdef double acc
    cdef long long macs = 0

    for n in range(n_batch):
        for g in range(groups):
            for oci in range(cog):
                oc = g * cog + oci
                for oh in range(h_out):
                    for ow in range(w_out):
                        acc = 0.0
                        for ici in range(cig):
                            ic = g * cig + ici
                            for kh in range(k):
                                for kw in range(k):
                                    acc += xp[n, ic, oh * stride + kh, ow * stride + kw] * w[oc, ici, kh, kw]
                                    macs += 1
                        out[n, oc, oh, ow] = acc
    return out_arr, int(macs)


def jacobi_singular_values(double[:, ::1] a, double tol=1e-13, Py_ssize_t max_sweeps=100):
    """Singular values of a (m, n) matrix with m >= n; see _fallback."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    work_arr = np.array(a, dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    cdef Py_ssize_t sweep, i, j, r
    cdef double alpha, beta, gamma, zeta, t, cs, sn, xi, xj
    cdef bint rotated

    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    xi = work[r, i]
                    xj = work[r, j]
                    alpha += xi * xi
                    beta += xj * xj
                    gamma += xi * xj
                if alpha == 0.0 or beta == 0.0:
                    continue
                if fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = cs * t
                for r in range(m):
                    xi = work[r, i]
                    xj = work[r, j]
                    work[r, i] = cs * xi - sn * xj
                    work[r, j] = sn * xi + cs * xj
        if not rotated:
            break
    return np.sqrt(np.einsum("ij,ij->j", work_arr, work_arr))


def nms_greedy(double[:, ::1] boxes, long long[::1] classes, double iou_thresh, bint class_agnostic, Py_ssize_t max_det):
    """Greedy suppression over priority-sorted detections; see _fallback."""
    cdef Py_ssize_t n = boxes.shape[0]
    sup_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] sup = sup_arr
    keep = []
    cdef Py_ssize_t i, j, kept
    cdef double ax1, ay1, ax2, ay2, area_a, area_b
    cdef double iw, ih, inter, union, v

    kept = 0
    for i in range(n):
        if sup[i]:
            continue
        keep.append(i)
        kept += 1
        if kept >= max_det:
            break
        ax1 = boxes[i, 0]
        ay1 = boxes[i, 1]
        ax2 = boxes[i, 2]
        ay2 = boxes[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(i + 1, n):
            if sup[j]:
                continue
            if not class_agnostic and classes[j] != classes[i]:
                continue
            iw = (ax2 if ax2 < boxes[j, 2] else boxes[j, 2]) - (ax1 if ax1 > boxes[j, 0] else boxes[j, 0])
            if iw <= 0.0:
                continue
            ih = (ay2 if ay2 < boxes[j, 3] else boxes[j, 3]) - (ay1 if ay1 > boxes[j, 1] else boxes[j, 1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (boxes[j, 2] - boxes[j, 0]) * (boxes[j, 3] - boxes[j, 1])
            union = area_a + area_b - inter
            if union <= 0.0:
                continue
            v = inter / union
            if v > iou_thresh:
                sup[j] = 1
    return np.asarray(keep, dtype=np.int64)
