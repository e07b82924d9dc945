"""Closest points between the convex hulls of two point sets.

The hulls are never built explicitly. ``hull_closest_pair`` minimizes
``0.5 * ||Z0' alpha - Z1' beta||^2`` over the product of two probability
simplices with fully corrective Frank-Wolfe steps: each Frank-Wolfe vertex
joins the active face, which is then re-optimized exactly by Wolfe's
minimum-norm-point minor cycle. The Frank-Wolfe vertices double as the
separating hyperplane certificate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InsufficientDataError, MarginCausalError

OVERLAP = "overlap"
SEPARABLE = "separable"


@dataclass(frozen=True)
class HullPairSolution:
    alpha: np.ndarray
    beta: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    distance: float
    duality_gap: float
    verdict: str
    iterations: int
    overlap_tol: float

    @property
    def objective(self) -> float:
        return 0.5 * self.distance ** 2

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "distance": self.distance,
            "duality_gap": self.duality_gap,
            "overlap_tol": self.overlap_tol,
            "iterations": self.iterations,
            "p0": self.p0.tolist(),
            "p1": self.p1.tolist(),
            "alpha_support": np.flatnonzero(self.alpha).tolist(),
            "beta_support": np.flatnonzero(self.beta).tolist(),
        }


@dataclass(frozen=True)
class Hyperplane:
    """Normal ``w`` with ``Z0 w >= a0 > a1 >= Z1 w``."""

    w: np.ndarray
    a0: float
    a1: float

    @property
    def midpoint_threshold(self) -> float:
        return 0.5 * (self.a0 + self.a1)

    @property
    def width(self) -> float:
        return (self.a0 - self.a1) / float(np.linalg.norm(self.w))

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "a0": self.a0, "a1": self.a1,
                "midpoint_threshold": self.midpoint_threshold, "width": self.width}


@dataclass(frozen=True)
class OverlapCheck:
    verdict: str
    distance: float
    solution: HullPairSolution
    witness: Optional[np.ndarray] = None
    hyperplane: Optional[Hyperplane] = None

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "distance": self.distance,
               "solution": self.solution.to_dict()}
        if self.witness is not None:
            out["witness"] = self.witness.tolist()
        if self.hyperplane is not None:
            out["hyperplane"] = self.hyperplane.to_dict()
        return out


def _as_points(Z, name):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise InsufficientDataError(f"{name} must be a non-empty 2-d array")
    if not np.all(np.isfinite(Z)):
        raise ValueError(f"{name} contains non-finite entries")
    return Z


def joint_diameter(Z0, Z1) -> float:
    """Diagonal of the joint bounding box (an upper bound on the diameter)."""
    both = np.vstack([Z0, Z1])
    return float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))


def default_overlap_tol(Z0, Z1) -> float:
    return 1e-7 * (1.0 + joint_diameter(Z0, Z1))


def hull_closest_pair(Z0, Z1, gap_tol: float = 1e-8, max_iter: Optional[int] = None,
                      overlap_tol: Optional[float] = None) -> HullPairSolution:
    """Closest pair of points between ``co(Z0)`` and ``co(Z1)``.

    Parameters
    ----------
    Z0, Z1 : array, shape (n0, p) and (n1, p)
    gap_tol : float
        Stop once the Frank-Wolfe duality gap is below
        ``gap_tol * (1 + diam**2)``. When the hulls come out separated the
        gap is additionally driven below ``dist * min(dist, 1e-6) / 2`` so
        the supporting hyperplanes really separate.
    max_iter : int, optional
        Defaults to ``100 * (n0 + n1)``.
    overlap_tol : float, optional
        Distances at or below this count as overlap. Defaults to
        ``1e-7 * (1 + diam)``.

    Returns
    -------
    HullPairSolution

    Raises
    ------
    ConvergenceError
        If the gap is still above tolerance after ``max_iter`` steps; the
        exception carries the last iterate.
    """
    Z0 = _as_points(Z0, "Z0")
    Z1 = _as_points(Z1, "Z1")
    if Z0.shape[1] != Z1.shape[1]:
        raise ValueError("Z0 and Z1 must have the same number of columns")
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    n0, n1 = len(Z0), len(Z1)
    diam = joint_diameter(Z0, Z1)
    tol = gap_tol * (1.0 + diam ** 2)
    if overlap_tol is None:
        overlap_tol = 1e-7 * (1.0 + diam)
    if max_iter is None:
        max_iter = 100 * (n0 + n1)

    # Start from the Frank-Wolfe vertex pair for the direction joining the
    # two centroids (uniform weights); ties go to the lowest row index.
    x = Z0.mean(axis=0) - Z1.mean(axis=0)
    alpha = np.zeros(n0)
    beta = np.zeros(n1)
    alpha[int(np.argmin(Z0 @ x))] = 1.0
    beta[int(np.argmax(Z1 @ x))] = 1.0
    gap = math.inf
    it = 0
    while True:
        p0 = alpha @ Z0
        p1 = beta @ Z1
        x = p0 - p1
        s0 = Z0 @ x
        s1 = Z1 @ x
        i_fw = int(np.argmin(s0))
        j_fw = int(np.argmax(s1))
        xx = float(x @ x)
        gap = max(xx - float(s0[i_fw] - s1[j_fw]), 0.0)
        dist = math.sqrt(xx)
        # a separable verdict must also leave a usable hyperplane certificate
        if gap <= tol and (dist <= overlap_tol or gap <= 0.5 * dist * min(dist, 1e-6)):
            break
        if it >= max_iter:
            sol = _solution(alpha, beta, Z0, Z1, gap, it, overlap_tol)
            raise ConvergenceError(
                f"hull_closest_pair: gap {gap:.3e} > {tol:.3e} after {it} iterations",
                last_iterate=sol, residual=gap)
        it += 1

        # Frank-Wolfe vertex from the block with the larger gap joins the
        # active face, then the face is re-optimized exactly.
        g0 = float(alpha @ s0 - s0[i_fw])
        g1 = float(s1[j_fw] - beta @ s1)
        add = (0, i_fw) if g0 >= g1 else (1, j_fw)
        if not _corrective(Z0, Z1, alpha, beta, add, xx):
            _pairwise_step(Z0, Z1, alpha, beta, s0, s1, i_fw, j_fw)

    return _solution(alpha, beta, Z0, Z1, gap, it, overlap_tol)


def _pairwise_step(Z0, Z1, alpha, beta, s0, s1, i_fw, j_fw):
    i_aw = int(np.argmax(np.where(alpha > 0, s0, -np.inf)))
    j_aw = int(np.argmin(np.where(beta > 0, s1, np.inf)))
    g0 = s0[i_aw] - s0[i_fw]
    g1 = s1[j_fw] - s1[j_aw]
    if g0 >= g1:
        w, d, gain, fw, aw = alpha, Z0[i_fw] - Z0[i_aw], g0, i_fw, i_aw
    else:
        w, d, gain, fw, aw = beta, Z1[j_fw] - Z1[j_aw], g1, j_fw, j_aw
    dd = float(d @ d)
    step = min(gain / dd, w[aw]) if dd > 0 else 0.0
    if step == w[aw]:
        w[fw] += w[aw]
        w[aw] = 0.0
    else:
        w[fw] += step
        w[aw] -= step


def _corrective(Z0, Z1, alpha, beta, add, xx, max_minor=1000):
    """Minimize over the affine hull of the active face; Wolfe's minor cycle.

    Works in place on ``alpha``/``beta``. Returns False (leaving the weights
    untouched) if the face solve does not improve the objective, which only
    happens through round-off on degenerate faces.
    """
    S0 = np.flatnonzero(alpha > 0)
    S1 = np.flatnonzero(beta > 0)
    block, idx = add
    if block == 0 and idx not in S0:
        S0 = np.sort(np.r_[S0, idx])
    elif block == 1 and idx not in S1:
        S1 = np.sort(np.r_[S1, idx])
    w0 = alpha[S0].copy()
    w1 = beta[S1].copy()
    for _ in range(max_minor):
        k0, k1 = len(S0), len(S1)
        M = np.hstack([Z0[S0].T, -Z1[S1].T])
        k = k0 + k1
        A = np.zeros((k + 2, k + 2))
        A[:k, :k] = M.T @ M
        A[k, :k0] = A[:k0, k] = 1.0
        A[k + 1, k0:k] = A[k0:k, k + 1] = 1.0
        rhs = np.zeros(k + 2)
        rhs[k:] = 1.0
        c = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
        c0, c1 = c[:k0], c[k0:]
        if np.all(c > 0):
            w0, w1 = c0, c1
            break
        # walk from the current feasible point towards c until a weight hits 0
        cur = np.r_[w0, w1]
        neg = c <= 0
        theta = float(np.min(cur[neg] / (cur[neg] - c[neg])))
        new = cur + theta * (c - cur)
        drop = new <= 1e-15 * max(1.0, float(np.max(new)))
        drop[np.flatnonzero(neg)[np.argmin(cur[neg] / (cur[neg] - c[neg]))]] = True
        new[drop] = 0.0
        keep0, keep1 = ~drop[:k0], ~drop[k0:]
        if not keep0.any() or not keep1.any():
            return False
        S0, S1 = S0[keep0], S1[keep1]
        w0, w1 = new[:k0][keep0], new[k0:][keep1]
        w0, w1 = w0 / w0.sum(), w1 / w1.sum()
    else:
        return False
    x = w0 @ Z0[S0] - w1 @ Z1[S1]
    if float(x @ x) > xx * (1 + 1e-12) + 1e-300:
        return False
    alpha[:] = 0.0
    beta[:] = 0.0
    alpha[S0] = w0 / w0.sum()
    beta[S1] = w1 / w1.sum()
    return True


def _solution(alpha, beta, Z0, Z1, gap, it, overlap_tol):
    alpha = alpha / alpha.sum()
    beta = beta / beta.sum()
    p0 = alpha @ Z0
    p1 = beta @ Z1
    dist = float(np.linalg.norm(p0 - p1))
    verdict = SEPARABLE if dist > overlap_tol else OVERLAP
    for a in (alpha, beta, p0, p1):
        a.setflags(write=False)
    return HullPairSolution(alpha, beta, p0, p1, dist, float(gap), verdict, it,
                            float(overlap_tol))


def separating_hyperplane(sol: HullPairSolution, Z0, Z1) -> Hyperplane:
    """Hyperplane with normal ``p0 - p1`` supporting both hulls."""
    if sol.verdict != SEPARABLE:
        raise MarginCausalError("hulls overlap; no separating hyperplane exists")
    Z0 = _as_points(Z0, "Z0")
    Z1 = _as_points(Z1, "Z1")
    w = np.array(sol.p0 - sol.p1)
    a0 = float(np.min(Z0 @ w))
    a1 = float(np.max(Z1 @ w))
    if not a0 > a1:
        raise MarginCausalError("solution is not accurate enough to separate the hulls")
    w.setflags(write=False)
    return Hyperplane(w, a0, a1)


def relaxed_overlap_check(Z0, Z1, overlap_tol: Optional[float] = None,
                          gap_tol: float = 1e-8) -> OverlapCheck:
    """Decide whether the two convex hulls intersect (up to ``overlap_tol``).

    Overlap comes with a witness point (midpoint of the closest pair);
    separation comes with a ``Hyperplane``.
    """
    if overlap_tol is not None and overlap_tol <= 0:
        raise ValueError("overlap_tol must be positive")
    sol = hull_closest_pair(Z0, Z1, gap_tol=gap_tol, overlap_tol=overlap_tol)
    if sol.verdict == OVERLAP:
        return OverlapCheck(OVERLAP, sol.distance, sol, witness=0.5 * (sol.p0 + sol.p1))
    return OverlapCheck(SEPARABLE, sol.distance, sol,
                        hyperplane=separating_hyperplane(sol, Z0, Z1))


# ------------------------------------------------------------------ oracle

_MAX_GRID_POINTS = 2_000_000


def simplex_grid(k: int, m: int) -> np.ndarray:
    """All weight vectors of length ``k`` with entries in {0, 1/m, ..., 1} summing to 1."""
    if k == 1:
        return np.ones((1, 1))
    # stars and bars: choose k-1 bar positions among m+k-1 slots
    count = math.comb(m + k - 1, k - 1)
    if count > _MAX_GRID_POINTS:
        raise InsufficientDataError(f"simplex grid with {count} points is too large")
    bars = np.array(list(itertools.combinations(range(m + k - 1), k - 1)), dtype=np.int64)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), m + k - 1)])
    return (np.diff(edges, axis=1) - 1) / m


def brute_force_hull_distance(Z0, Z1, grid_step: float = 1e-3) -> float:
    """Minimum distance found by exhaustive grid search (test oracle).

    The Minkowski difference ``co(Z0) - co(Z1)`` is the hull of all pairwise
    differences ``z0_i - z1_j``. By Caratheodory every point of it is a
    convex combination of at most ``p + 1`` of those differences, so the grid
    runs over the simplex of every such subset.
    """
    Z0 = _as_points(Z0, "Z0")
    Z1 = _as_points(Z1, "Z1")
    if len(Z0) > 5 or len(Z1) > 5:
        raise InsufficientDataError("brute force oracle is limited to 5 points per group")
    if not 0 < grid_step <= 0.5:
        raise ValueError("grid_step must lie in (0, 0.5]")
    m = int(round(1.0 / grid_step))
    D = (Z0[:, None, :] - Z1[None, :, :]).reshape(-1, Z0.shape[1])
    D = np.unique(D, axis=0)
    k = min(len(D), Z0.shape[1] + 1)
    W = simplex_grid(k, m)
    best = math.inf
    for sub in itertools.combinations(range(len(D)), k):
        pts = W @ D[list(sub)]
        best = min(best, float(np.min(np.einsum("ij,ij->i", pts, pts))))
        if best == 0.0:
            break
    return math.sqrt(best)
