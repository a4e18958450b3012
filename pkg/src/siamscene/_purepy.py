"""Pure-Python/numpy versions of the hot kernels.

Every routine here mirrors one in ``_core.pyx`` operation for operation, so
both backends round identically. Sums that the compiled code accumulates
left to right are done with ``np.cumsum`` here for the same reason.
"""
import math

import numpy as np


def _offdiag_norm(a):
    iu = np.triu_indices(a.shape[0], 1)
    upper = a[iu]
    if upper.size == 0:
        return 0.0
    return math.sqrt(2.0 * np.cumsum(upper * upper)[-1])


def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi on a copy of the symmetric matrix ``a``.

    Returns ``(diag, vectors, sweeps)`` with eigenvalues unsorted and
    eigenvectors as columns. ``sweeps`` is -1 when ``max_sweeps`` ran out.
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    v = np.eye(n)
    for sweep in range(max_sweeps + 1):
        if _offdiag_norm(a) < tol:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c

                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, -1


def pairwise_distances(x):
    """Euclidean distance matrix between the rows of ``x``; exact zero diagonal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    d = np.zeros((n, n))
    if x.shape[1] == 0:
        return d
    for i in range(n - 1):
        diff = x[i + 1:] - x[i]
        row = np.sqrt(np.cumsum(diff * diff, axis=1)[:, -1])
        d[i, i + 1:] = row
        d[i + 1:, i] = row
    return d


def segmentation_scores(gt, det, offsets):
    """Coverage, overflow and M_iou for two boundary arrays.

    ``gt`` and ``det`` hold scene start indices followed by the shot count;
    ``offsets[k]`` is the first frame of shot ``k`` (``offsets[n]`` the end).
    """
    gt = [int(b) for b in gt]
    det = [int(b) for b in det]
    offsets = [int(o) for o in offsets]
    n_gt = len(gt) - 1
    n_det = len(det) - 1
    n_shots = gt[-1]

    cov_num = 0
    ovf = 0.0
    for t in range(n_gt):
        lo, hi = gt[t], gt[t + 1]
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
            o_t = min(1.0, spill / den)
        ovf += o_t * (hi - lo)
    coverage = cov_num / n_shots
    overflow = ovf / n_shots

    gt_best = [0.0] * n_gt
    det_best = [0.0] * n_det
    for t in range(n_gt):
        a0, a1 = offsets[gt[t]], offsets[gt[t + 1]]
        for i in range(n_det):
            b0, b1 = offsets[det[i]], offsets[det[i + 1]]
            inter = min(a1, b1) - max(a0, b0)
            if inter <= 0:
                continue
            iou = inter / ((a1 - a0) + (b1 - b0) - inter)
            if iou > gt_best[t]:
                gt_best[t] = iou
            if iou > det_best[i]:
                det_best[i] = iou
    gt_term = 0.0
    for value in gt_best:
        gt_term += value
    det_term = 0.0
    for value in det_best:
        det_term += value
    m_iou = 0.5 * (gt_term / n_gt + det_term / n_det)
    return coverage, overflow, m_iou
