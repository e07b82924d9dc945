"""Reference computations that share no code with the package.

Each oracle solves the same mathematical question by a different route:
an LP instead of the hull QP for separability, projected gradient instead
of SMO for the SVM dual, enumeration instead of the Hungarian method.
"""
import itertools

import numpy as np
from scipy.optimize import linprog


def lp_strictly_separable(Z0, Z1):
    """Is there (w, c) with Z0 w - c >= 1 and Z1 w - c <= -1?

    Feasible exactly when the two convex hulls are disjoint.
    """
    Z0 = np.atleast_2d(Z0)
    Z1 = np.atleast_2d(Z1)
    p = Z0.shape[1]
    A = np.vstack([np.hstack([-Z0, np.ones((len(Z0), 1))]),
                   np.hstack([Z1, -np.ones((len(Z1), 1))])])
    b = -np.ones(len(Z0) + len(Z1))
    res = linprog(np.zeros(p + 1), A_ub=A, b_ub=b, bounds=[(None, None)] * (p + 1),
                  method="highs")
    return res.status == 0


def _project_box_hyperplane(a, y, C):
    """Euclidean projection onto {0 <= x <= C, y'x = 0} by bisection on the multiplier."""
    def g(mu):
        return y @ np.clip(a - mu * y, 0.0, C)

    lo, hi = -1.0, 1.0
    while g(lo) < 0:
        lo *= 2
    while g(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(a - 0.5 * (lo + hi) * y, 0.0, C)


def _accelerated_projected_gradient(K, c, y, C, iters=200000, tol=1e-13):
    """Maximize c'a - 0.5 a'Ka over {0 <= a <= C, y'a = 0}; returns the maximum."""
    L = max(np.linalg.eigvalsh(K)[-1], 1e-12)
    n = len(c)
    x = _project_box_hyperplane(np.zeros(n), y, C)
    yk, tk = x.copy(), 1.0

    def f(a):
        return c @ a - 0.5 * a @ K @ a

    prev = f(x)
    for k in range(iters):
        grad = c - K @ yk
        x_new = _project_box_hyperplane(yk + grad / L, y, C)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        yk = x_new + ((tk - 1) / t_new) * (x_new - x)
        if f(x_new) < f(x):  # restart on non-monotone step
            yk, t_new = x_new.copy(), 1.0
        x, tk = x_new, t_new
        if k % 200 == 0:
            cur = f(x)
            if abs(cur - prev) <= tol * max(1.0, abs(cur)):
                break
            prev = cur
    return f(x)


def svm_dual_projected_gradient(Z, T, C):
    """Soft-margin SVM dual: max sum(a) - 0.5 ||sum a_i T_i z_i||^2."""
    Z = np.asarray(Z, float)
    T = np.asarray(T, float)
    A = T[:, None] * Z
    return _accelerated_projected_gradient(A @ A.T, np.ones(len(T)), T, C)


def svr_dual_projected_gradient(Z, T, eps, C):
    """epsilon-SVR dual in (a+, a-):

    max -0.5 ||sum (a+_i - a-_i) z_i||^2 - eps sum(a+ + a-) + sum T_i (a+_i - a-_i)
    s.t. sum(a+) = sum(a-), 0 <= a+-, a- <= C.
    """
    Z = np.asarray(Z, float)
    T = np.asarray(T, float)
    G = Z @ Z.T
    K = np.block([[G, -G], [-G, G]])
    c = np.r_[T - eps, -T - eps]
    y = np.r_[np.ones(len(T)), -np.ones(len(T))]
    return _accelerated_projected_gradient(K, c, y, C)


def enumerate_assignment(cost):
    """Minimum cost and the lexicographically smallest optimal column tuple."""
    cost = np.asarray(cost, float)
    k, m = cost.shape
    best, arg = np.inf, None
    for perm in itertools.permutations(range(m), k):
        c = sum(cost[i, j] for i, j in enumerate(perm))
        if c < best - 1e-12:
            best, arg = c, perm
    return best, arg


def greedy_assignment_cost(cost):
    """Rows in order, each taking its nearest unused column."""
    cost = np.asarray(cost, float)
    used = set()
    total = 0.0
    for i in range(cost.shape[0]):
        order = np.argsort(cost[i], kind="stable")
        j = next(j for j in order if j not in used)
        used.add(j)
        total += cost[i, j]
    return total


def chebyshev_residual_by_vertices(Z, T):
    """Sup-norm regression value by brute force over (p + 2)-point subsets.

    The optimal Chebyshev fit equioscillates on p + 2 points; for each such
    subset the fit minimizing the max residual is an LP of tiny size, so we
    take the maximum over subsets of the subset-optimal value.
    """
    Z = np.atleast_2d(np.asarray(Z, float))
    T = np.asarray(T, float)
    n, p = Z.shape
    best = 0.0
    for S in itertools.combinations(range(n), min(n, p + 2)):
        S = list(S)
        ones = np.ones((len(S), 1))
        A = np.vstack([np.hstack([-Z[S], -ones, -ones]), np.hstack([Z[S], ones, -ones])])
        rhs = np.r_[-T[S], T[S]]
        res = linprog(np.r_[np.zeros(p + 1), 1.0], A_ub=A, b_ub=rhs,
                      bounds=[(None, None)] * (p + 1) + [(0, None)], method="highs")
        best = max(best, res.fun)
    return best
