"""Sequential minimal optimization for linear-kernel box-constrained QPs.

Solves

    min_beta  0.5 * beta' Q beta + lin' beta
    s.t.      y' beta = 0,  0 <= beta <= C

with ``Q_ij = y_i y_j x_i . x_j`` and ``y_i`` in {-1, +1}. Both the C-SVM
dual and the epsilon-SVR dual have this form. Because the kernel is linear
we carry ``v = sum_i y_i beta_i x_i`` instead of the n x n Gram matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

_TAU = 1e-12


@dataclass
class SmoResult:
    beta: np.ndarray
    v: np.ndarray
    rho: float
    objective: float  # value of the minimization form
    kkt_violation: float
    iterations: int
    polished: bool


def _violation(grad, y, beta, C):
    score = -y * grad
    up = ((y > 0) & (beta < C)) | ((y < 0) & (beta > 0))
    low = ((y > 0) & (beta > 0)) | ((y < 0) & (beta < C))
    m = np.max(score, where=up, initial=-np.inf)
    M = np.min(score, where=low, initial=np.inf)
    return score, up, low, m, M


def kkt_violation(X, y, lin, C, beta) -> float:
    """Maximal violating pair gap ``m(beta) - M(beta)``, recomputed from scratch."""
    v = (y * beta) @ X
    grad = y * (X @ v) + lin
    _, _, _, m, M = _violation(grad, y, beta, C)
    if not np.isfinite(m) or not np.isfinite(M):
        return 0.0
    return max(float(m - M), 0.0)


def flat_minimizer(rise, fall) -> tuple[float, float]:
    """Minimizing interval of ``sum max(0, b - c) + sum max(0, d - b)`` over b.

    ``rise`` holds the kinks ``c`` of terms that grow to the right, ``fall``
    the kinks ``d`` of terms that grow to the left; both must be non-empty.
    Slopes are counted exactly, so the result does not depend on the order
    of the inputs.
    """
    rise = np.sort(np.asarray(rise, dtype=float))
    fall = np.sort(np.asarray(fall, dtype=float))
    pts = np.unique(np.r_[rise, fall])
    # right derivative: #{c <= b} - #{d > b}; left: #{c < b} - #{d >= b}
    right = np.searchsorted(rise, pts, "right") - (len(fall) - np.searchsorted(fall, pts, "right"))
    left = np.searchsorted(rise, pts, "left") - (len(fall) - np.searchsorted(fall, pts, "left"))
    lo = pts[np.argmax(right >= 0)]
    hi = pts[len(pts) - 1 - np.argmax((left <= 0)[::-1])]
    return float(lo), float(hi)


def _rho(grad, y, beta, C):
    free = (beta > 0) & (beta < C)
    if np.any(free):
        return float(np.mean(y[free] * grad[free]))
    _, _, _, m, M = _violation(grad, y, beta, C)
    return float(-0.5 * (m + M))


def _face_step(X, y, lin, C, beta, max_rounds=50):
    """Minimize exactly over the current free variables, bound ones held fixed.

    A primal active-set loop: on the face ``y_F' d = 0`` take the Newton step
    when the reduced problem is bounded, otherwise follow its zero-curvature
    descent direction. A step that hits the box fixes that variable at its
    bound and the loop repeats. The objective never increases.

    Pair updates alone crawl when the free Hessian (rank at most p) is
    singular and the linear term slopes along its null space; this step
    covers that distance at once and also pins free support vectors exactly
    on the margin.
    """
    beta = beta.copy()
    free = np.flatnonzero((beta > 0) & (beta < C))
    for _ in range(max_rounds):
        k = free.size
        if k < 2:
            break
        A = y[free, None] * X[free]
        v = (y * beta) @ X
        g = y[free] * (X[free] @ v) + lin[free]
        # orthonormal basis of {d : y_F' d = 0}
        P = np.linalg.svd(y[free][None, :])[2][1:].T
        H = P.T @ (A @ (A.T @ P))
        h = P.T @ g
        lam, U = np.linalg.eigh(H)
        pos = lam > 1e-10 * max(float(lam[-1]), 1.0)
        h_null = U[:, ~pos] @ (U[:, ~pos].T @ h)
        ray = float(np.linalg.norm(h_null)) > 1e-12 * (1.0 + float(np.linalg.norm(h)))
        if ray:
            d = -P @ h_null
        else:
            d = -P @ (U[:, pos] @ ((U[:, pos].T @ h) / lam[pos]))
        if not np.any(d):
            break
        bF = beta[free]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, (C - bF) / d, np.where(d < 0, -bF / d, np.inf))
        r = int(np.argmin(ratio))
        step = float(ratio[r])
        if not ray and step >= 1.0:
            beta[free] = np.clip(bF + d, 0.0, C)
            break
        if not np.isfinite(step):
            break
        beta[free] = np.clip(bF + step * d, 0.0, C)
        beta[free[r]] = C if d[r] > 0 else 0.0
        free = np.delete(free, r)
    return beta


def _polish(X, y, lin, C, beta, tol):
    """Exact minimization over the final free set, kept if KKT does not worsen."""
    if not np.any((beta > 0) & (beta < C)):
        return None
    new = _face_step(X, y, lin, C, beta)
    if kkt_violation(X, y, lin, C, new) > max(kkt_violation(X, y, lin, C, beta), tol):
        return None
    return new


FACE_EVERY = 50
FACE_MAX_FREE = 200


def solve(X, y, lin, C, tol=1e-6, max_iter=10_000, polish=True) -> SmoResult:
    """Run SMO until the maximal violating pair gap is at most ``tol``.

    The working set is chosen by the second-order rule: ``i`` maximizes the
    violation score over the "up" set and ``j`` maximizes the guaranteed
    objective decrease ``gap^2 / ||x_i - x_j||^2`` among "low" candidates
    that violate with ``i``. Ties go to the lowest index, so the iterate
    sequence is a deterministic function of the inputs.

    Every ``FACE_EVERY`` updates, if at most ``FACE_MAX_FREE`` variables are
    free, the free block is minimized exactly by ``_face_step``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lin = np.asarray(lin, dtype=float)
    n = len(y)
    pos = y > 0
    ylin = y * lin
    sq = np.einsum("ij,ij->i", X, X)
    beta = np.zeros(n)
    v = np.zeros(X.shape[1])
    # index sets of the maximal violating pair rule, updated in place
    up = pos.copy()
    low = ~pos
    score = -ylin
    it = 0
    while True:
        i = int(np.argmax(np.where(up, score, -np.inf)))
        jmin = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[jmin]
        if not (up[i] and low[jmin]) or gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not reach KKT tolerance {tol:g} in {max_iter} iterations "
                f"(violation {gap:.3e})", last_iterate=beta.copy(), residual=float(gap))
        if it and it % FACE_EVERY == 0:
            n_free = int(np.sum((beta > 0) & (beta < C)))
            if 2 <= n_free <= FACE_MAX_FREE:
                beta = _face_step(X, y, lin, C, beta)
                v = (y * beta) @ X
                score = -(X @ v) - ylin
                up = np.where(pos, beta < C, beta > 0)
                low = np.where(pos, beta > 0, beta < C)
                i = int(np.argmax(np.where(up, score, -np.inf)))
                jmin = int(np.argmin(np.where(low, score, np.inf)))
                gap = score[i] - score[jmin]
                if not (up[i] and low[jmin]) or gap <= tol:
                    break
        it += 1
        b = score[i] - score
        curv = np.maximum(sq[i] + sq - 2.0 * (X @ X[i]), _TAU)
        gain = np.where(low & (b > 0), b * b / curv, -np.inf)
        j = int(np.argmax(gain))
        diff = X[i] - X[j]
        step = b[j] / curv[j]
        # move beta_i by +y_i t and beta_j by -y_j t
        lim_i = C - beta[i] if pos[i] else beta[i]
        lim_j = beta[j] if pos[j] else C - beta[j]
        t = min(step, lim_i, lim_j)
        if t == lim_i:
            beta[i] = C if pos[i] else 0.0
        else:
            beta[i] += y[i] * t
        if t == lim_j:
            beta[j] = 0.0 if pos[j] else C
        else:
            beta[j] -= y[j] * t
        for k in (i, j):
            up[k] = beta[k] < C if pos[k] else beta[k] > 0
            low[k] = beta[k] > 0 if pos[k] else beta[k] < C
        v += t * diff
        # -y_k grad_k with grad_k = y_k x_k.v + lin_k
        score = -(X @ v) - ylin

    polished = False
    if polish:
        new = _polish(X, y, lin, C, beta, tol)
        if new is not None:
            beta = new
            polished = True
    v = (y * beta) @ X
    grad = y * (X @ v) + lin
    rho = _rho(grad, y, beta, C)
    obj = 0.5 * float(v @ v) + float(lin @ beta)
    return SmoResult(beta, v, rho, obj, kkt_violation(X, y, lin, C, beta), it, polished)
