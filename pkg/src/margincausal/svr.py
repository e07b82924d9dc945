"""Linear epsilon-insensitive SVR, hard epsilon-tubes and lifted point sets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import _smo
from .errors import DegenerateModelError, InsufficientDataError, MarginCausalError
from .svm import MarginReport

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
TUBE_SLACK = 1e-9


@dataclass(frozen=True)
class SvrModel:
    """Fitted ``f(z) = w . z + b`` with per-subject dual pairs (alpha+, alpha-)."""

    w: np.ndarray
    b: float
    epsilon: float
    reg_c: float
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    residuals: np.ndarray
    objective: float
    iterations: int
    kkt_violation: float

    def predict(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.w.shape[0]:
            raise ValueError(f"expected {self.w.shape[0]} covariates, got {Z.shape[-1]}")
        return Z @ self.w + self.b

    def to_dict(self) -> dict:
        coef = self.alpha_plus - self.alpha_minus
        return {
            "w": self.w.tolist(), "b": self.b, "epsilon": self.epsilon,
            "reg_c": self.reg_c, "objective": self.objective,
            "iterations": self.iterations, "kkt_violation": self.kkt_violation,
            "n_support": int(np.sum(coef != 0)),
            "n_outside_tube": int(np.sum(np.abs(self.residuals) > self.epsilon)),
        }


@dataclass(frozen=True)
class LiftedPair:
    """Rows ``(Z_i, T_i + eps)`` and ``(Z_i, T_i - eps)``."""

    d_plus: np.ndarray
    d_minus: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class TubeCertificate:
    """Outcome of the hard tube feasibility test.

    ``max_residual`` is the smallest achievable sup-norm residual of a linear
    fit. When no tube exists ``u``/``v`` solve the alternative system:
    convex weights with ``Z'u = Z'v`` and
    ``(T + eps)'u - (T - eps)'v < 0``.
    """

    exists: bool
    epsilon: float
    max_residual: float
    w: Optional[np.ndarray] = None
    b: Optional[float] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    alternative_value: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"exists": self.exists, "epsilon": self.epsilon,
               "max_residual": self.max_residual}
        if self.exists:
            out.update(w=self.w.tolist(), b=self.b)
        else:
            out.update(u_support=np.flatnonzero(self.u > 1e-12).tolist(),
                       v_support=np.flatnonzero(self.v > 1e-12).tolist(),
                       alternative_value=self.alternative_value)
        return out


def _check_zt(Z, T, min_rows=2):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    T = np.asarray(T, dtype=float)
    if Z.shape[0] != T.shape[0]:
        raise ValueError("Z and T have different numbers of rows")
    if len(T) < min_rows:
        raise InsufficientDataError(f"need at least {min_rows} observations")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(T))):
        raise ValueError("non-finite input")
    return Z, T


def fit_linear_svr(Z, T, epsilon: float, reg_c: float = 1.0, tol: float = 1e-6,
                   max_iter: Optional[int] = None) -> SvrModel:
    """Minimize ``sum max(0, |T_i - f(Z_i)| - eps) + ||w||^2 / (2 reg_c)``.

    The dual has 2n variables (alpha+ for the upper tube edge, alpha- for the
    lower) and is handed to the same SMO routine as the classifier.
    """
    Z, T = _check_zt(Z, T)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if reg_c <= 0:
        raise ValueError("reg_c must be positive")
    n, p = Z.shape
    if max_iter is None:
        max_iter = 20 * n * (p + 1)
    X = np.vstack([Z, Z])
    y = np.r_[np.ones(n), -np.ones(n)]
    lin = np.r_[epsilon - T, epsilon + T]
    res = _smo.solve(X, y, lin, reg_c, tol=tol, max_iter=max_iter)
    ap, am = res.beta[:n].copy(), res.beta[n:].copy()
    w = res.v
    r = T - Z @ w
    # offsets minimizing the tube loss for this w form an interval; take its midpoint
    lo, hi = _smo.flat_minimizer(r + epsilon, r - epsilon)
    b = 0.5 * (lo + hi)
    resid = T - (Z @ w + b)
    for a in (ap, am, w, resid):
        a.setflags(write=False)
    return SvrModel(w=w, b=float(b), epsilon=float(epsilon), reg_c=float(reg_c),
                    alpha_plus=ap, alpha_minus=am, residuals=resid,
                    objective=-res.objective, iterations=res.iterations,
                    kkt_violation=res.kkt_violation)


def chebyshev_fit(Z, T) -> tuple[np.ndarray, float, float]:
    """Linear fit minimizing the largest absolute residual (an LP)."""
    Z, T = _check_zt(Z, T)
    n, p = Z.shape
    ones = np.ones((n, 1))
    # variables (w, b, t); minimize t
    c = np.r_[np.zeros(p + 1), 1.0]
    A = np.vstack([np.hstack([-Z, -ones, -ones]), np.hstack([Z, ones, -ones])])
    rhs = np.r_[-T, T]
    bounds = [(None, None)] * (p + 1) + [(0, None)]
    lp = linprog(c, A_ub=A, b_ub=rhs, bounds=bounds, method="highs", options=_LP_OPTIONS)
    if lp.status != 0:
        raise MarginCausalError(f"tube LP failed: {lp.message}")
    return lp.x[:p], float(lp.x[p]), float(lp.x[p + 1])


def _alternative_witness(Z, T, epsilon):
    n, p = Z.shape
    c = np.r_[T + epsilon, -(T - epsilon)]
    A_eq = np.vstack([
        np.hstack([Z.T, -Z.T]),
        np.r_[np.ones(n), np.zeros(n)],
        np.r_[np.zeros(n), np.ones(n)],
    ])
    b_eq = np.r_[np.zeros(p), 1.0, 1.0]
    lp = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (2 * n),
                 method="highs", options=_LP_OPTIONS)
    if lp.status != 0:
        raise MarginCausalError(f"alternative-system LP failed: {lp.message}")
    return lp.x[:n], lp.x[n:], float(lp.fun)


def hard_tube_exists(Z, T, epsilon: float) -> TubeCertificate:
    """Is there a linear ``f`` with ``|T_i - f(Z_i)| <= eps`` for every i?

    Decided by the sup-norm regression LP (exists when its optimum is at most
    ``eps + 1e-9``). Without a tube, the alternative system is solved for a
    witness pair of convex weights.
    """
    Z, T = _check_zt(Z, T)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    w, b, t = chebyshev_fit(Z, T)
    if t <= epsilon + TUBE_SLACK:
        w.setflags(write=False)
        return TubeCertificate(True, float(epsilon), t, w=w, b=b)
    u, v, val = _alternative_witness(Z, T, epsilon)
    return TubeCertificate(False, float(epsilon), t, u=u, v=v, alternative_value=val)


def lift_datasets(Z, T, epsilon: float) -> LiftedPair:
    """Append ``T + eps`` and ``T - eps`` as a last coordinate."""
    Z, T = _check_zt(Z, T, min_rows=1)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dp = np.hstack([Z, (T + epsilon)[:, None]])
    dm = np.hstack([Z, (T - epsilon)[:, None]])
    dp.setflags(write=False)
    dm.setflags(write=False)
    return LiftedPair(dp, dm, float(epsilon))


def continuous_margin_set(m: SvrModel, margin_tol: float = 1e-8) -> MarginReport:
    """Subjects outside the epsilon-tube: ``|residual_i| > eps + margin_tol``."""
    r = np.abs(m.residuals)
    kept = np.flatnonzero(r > m.epsilon + margin_tol)
    kept.setflags(write=False)
    return MarginReport(kept, f"svr: |T - f(z)| > {m.epsilon:g} + {margin_tol:g}",
                        np.asarray(m.residuals), len(r))


def residual_sd(resid) -> float:
    resid = np.asarray(resid, dtype=float)
    if len(resid) < 2:
        raise InsufficientDataError("need at least 2 residuals")
    s = float(np.std(resid, ddof=1))
    if not s > 0:
        raise DegenerateModelError("residual standard deviation is zero")
    return s
