# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contracts and arithmetic order as ``_purepy``."""
import numpy as np

from libc.math cimport sqrt


cdef double _offdiag_norm(double[:, ::1] a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            acc = acc + a[i, j] * a[i, j]
    return sqrt(2.0 * acc)


def jacobi_eigh(a_in, double tol, int max_sweeps):
    cdef double[:, ::1] a = np.array(a_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, i
    cdef int sweep
    cdef double apq, tau, t, c, s, x, y
    cdef int done = -1

    with nogil:
        for sweep in range(max_sweeps + 1):
            if _offdiag_norm(a, n) < tol:
                done = sweep
                break
            if sweep == max_sweeps:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if tau >= 0.0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for i in range(n):
                        x = a[i, p]
                        y = a[i, q]
                        a[i, p] = c * x - s * y
                        a[i, q] = s * x + c * y
                    for i in range(n):
                        x = a[p, i]
                        y = a[q, i]
                        a[p, i] = c * x - s * y
                        a[q, i] = s * x + c * y
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for i in range(n):
                        x = v[i, p]
                        y = v[i, q]
                        v[i, p] = c * x - s * y
                        v[i, q] = s * x + c * y

    diag = np.empty(n)
    for i in range(n):
        diag[i] = a[i, i]
    return diag, v_arr, done


def pairwise_distances(x_in):
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1]
    d_arr = np.zeros((n, n))
    cdef double[:, ::1] d = d_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    if dim == 0:
        return d_arr
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(dim):
                    diff = x[j, k] - x[i, k]
                    acc = acc + diff * diff
                acc = sqrt(acc)
                d[i, j] = acc
                d[j, i] = acc
    return d_arr


def segmentation_scores(gt_in, det_in, offsets_in):
    cdef long[::1] gt = np.ascontiguousarray(gt_in, dtype=np.int_)
    cdef long[::1] det = np.ascontiguousarray(det_in, dtype=np.int_)
    cdef long[::1] off = np.ascontiguousarray(offsets_in, dtype=np.int_)
    cdef Py_ssize_t n_gt = gt.shape[0] - 1, n_det = det.shape[0] - 1
    cdef long n_shots = gt[n_gt]
    cdef Py_ssize_t t, i
    cdef long lo, hi, inter, best, spill, den, cov_num = 0
    cdef long a0, a1, b0, b1
    cdef double ovf = 0.0, o_t, iou, gt_term = 0.0, det_term = 0.0
    gt_best_arr = np.zeros(n_gt)
    det_best_arr = np.zeros(n_det)
    cdef double[::1] gt_best = gt_best_arr
    cdef double[::1] det_best = det_best_arr

    for t in range(n_gt):
        lo = gt[t]
        hi = gt[t + 1]
        best = 0
        spill = 0
        for i in range(n_det):
            inter = min(hi, det[i + 1]) - max(lo, det[i])
            if inter > 0:
                if inter > best:
                    best = inter
                spill += det[i + 1] - det[i] - inter
        cov_num += best
        den = 0
        if t > 0:
            den += lo - gt[t - 1]
        if t < n_gt - 1:
            den += gt[t + 2] - hi
        if den == 0:
            o_t = 0.0 if spill == 0 else 1.0
        else:
            o_t = min(1.0, <double>spill / <double>den)
        ovf = ovf + o_t * <double>(hi - lo)

    for t in range(n_gt):
        a0 = off[gt[t]]
        a1 = off[gt[t + 1]]
        for i in range(n_det):
            b0 = off[det[i]]
            b1 = off[det[i + 1]]
            inter = min(a1, b1) - max(a0, b0)
            if inter <= 0:
                continue
            iou = <double>inter / <double>((a1 - a0) + (b1 - b0) - inter)
            if iou > gt_best[t]:
                gt_best[t] = iou
            if iou > det_best[i]:
                det_best[i] = iou
    for t in range(n_gt):
        gt_term = gt_term + gt_best[t]
    for i in range(n_det):
        det_term = det_term + det_best[i]
    return (
        <double>cov_num / <double>n_shots,
        ovf / <double>n_shots,
        0.5 * (gt_term / <double>n_gt + det_term / <double>n_det),
    )
