"""Pure-NumPy kernel implementations.

These are the behavioral reference for the compiled core in ``_core.pyx``:
identical signatures, identical floating-point formulas. The convolution
accumulates per kernel tap (vectorized over output positions) instead of
per output pixel, so results may differ from the compiled core in the last
few ulps; integer MAC counts are always exact and identical.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def conv2d_direct(xp: np.ndarray, w: np.ndarray, stride: int, groups: int):
    """Direct cross-correlation of a pre-padded NCHW input.

    Args:
        xp: zero-padded input, shape (N, C_in, Hp, Wp), float64.
        w: weights, shape (C_out, C_in // groups, K, K), float64.
        stride: positive spatial stride.
        groups: channel groups; C_in and C_out must divide evenly.

    Returns:
        (out, macs): output of shape (N, C_out, H_out, W_out) and the exact
        number of multiply-accumulate operations executed.
    """
    n, _c_in, hp, wp = xp.shape
    c_out, cig, k, _ = w.shape
    h_out = (hp - k) // stride + 1
    w_out = (wp - k) // stride + 1
    cog = c_out // groups
    out = np.zeros((n, c_out, h_out, w_out), dtype=np.float64)
    macs = 0
    for g in range(groups):
        xg = xp[:, g * cig : (g + 1) * cig]
        wg = w[g * cog : (g + 1) * cog]
        og = out[:, g * cog : (g + 1) * cog]
        for kh in range(k):
            for kw in range(k):
                window = xg[:, :, kh : kh + stride * h_out : stride, kw : kw + stride * w_out : stride]
                og += np.einsum("nchw,oc->nohw", window, wg[:, :, kh, kw])
                macs += n * cog * h_out * w_out * cig
    return out, macs


def _round_robin_pairs(n: int):
    """Tournament schedule: n-1 rounds of disjoint column pairs covering all."""
    players = list(range(n)) if n % 2 == 0 else list(range(n)) + [-1]
    half = len(players) // 2
    rounds = []
    for _ in range(len(players) - 1):
        pairs = [
            (min(players[k], players[-1 - k]), max(players[k], players[-1 - k]))
            for k in range(half)
            if players[k] >= 0 and players[-1 - k] >= 0
        ]
        rounds.append((np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_singular_values(a: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100) -> np.ndarray:
    """Singular values of a (m, n) matrix with m >= n via one-sided Jacobi.

    Parallel-ordering variant: each sweep walks round-robin rounds of
    disjoint column pairs and rotates every non-orthogonal pair of a round
    at once (vectorized across pairs). Converged when a full sweep applies
    no rotation; the singular values are the final column norms, returned
    unsorted.
    """
    work = np.array(a, dtype=np.float64)
    m, n = work.shape
    if n == 1:
        return np.sqrt(np.einsum("ij,ij->j", work, work))
    sq = np.einsum("ij,ij->j", work, work)
    rounds = _round_robin_pairs(n)
    for _ in range(max_sweeps):
        rotated = False
        for left, right in rounds:
            alpha = sq[left]
            beta = sq[right]
            ci = work[:, left]
            cj = work[:, right]
            gamma = np.einsum("mk,mk->k", ci, cj)
            live = (alpha > 0.0) & (beta > 0.0)
            needs = live & (np.abs(gamma) > tol * np.sqrt(alpha * beta, where=live, out=np.zeros_like(alpha)))
            if not np.any(needs):
                continue
            rotated = True
            il = left[needs]
            jr = right[needs]
            al = alpha[needs]
            be = beta[needs]
            ga = gamma[needs]
            zeta = (be - al) / (2.0 * ga)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0.0, 1.0, t)  # sign(0) = 0 would stall the rotation
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            ci = work[:, il]
            cj = work[:, jr]
            work[:, il] = cs * ci - sn * cj
            work[:, jr] = sn * ci + cs * cj
            sq[il] = al - t * ga
            sq[jr] = be + t * ga
        if not rotated:
            break
    return np.sqrt(np.einsum("ij,ij->j", work, work))


def nms_greedy(
    boxes: np.ndarray,
    classes: np.ndarray,
    iou_thresh: float,
    class_agnostic: bool,
    max_det: int,
) -> np.ndarray:
    """Greedy suppression over detections already sorted by priority.

    Keeps the first live detection, suppresses later ones of the same class
    (any class when ``class_agnostic``) whose IoU with it is strictly above
    ``iou_thresh``, and repeats until ``max_det`` detections are kept.

    Returns kept positions (int64) in keep order.
    """
    n = boxes.shape[0]
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    alive = np.ones(n, dtype=bool)
    keep: list[int] = []
    for i in range(n):
        if not alive[i]:
            continue
        keep.append(i)
        if len(keep) >= max_det:
            break
        idx = np.nonzero(alive[i + 1 :])[0] + i + 1
        if idx.size == 0:
            continue
        if not class_agnostic:
            idx = idx[classes[idx] == classes[i]]
            if idx.size == 0:
                continue
        iw = np.minimum(x2[i], x2[idx]) - np.maximum(x1[i], x1[idx])
        ih = np.minimum(y2[i], y2[idx]) - np.maximum(y1[i], y1[idx])
        inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
        union = areas[i] + areas[idx] - inter
        ious = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)
        alive[idx[ious > iou_thresh]] = False
    return np.asarray(keep, dtype=np.int64)
