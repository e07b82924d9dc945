"""Linear soft-margin SVM, margin sets and pairwise meta-margins."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _smo
from .dataset import BINARY, CATEGORICAL, Dataset
from .errors import InsufficientDataError, SchemaError


@dataclass(frozen=True)
class SvmModel:
    """Decision function ``f(z) = w . z - b``; ``dual_coefs`` are the alphas."""

    w: np.ndarray
    b: float
    C: float
    dual_coefs: np.ndarray
    objective: float
    iterations: int
    kkt_tol: float
    kkt_violation: float

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.dual_coefs > 0)

    @property
    def margin_width(self) -> float:
        return 2.0 / float(np.linalg.norm(self.w))

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(), "b": self.b, "C": self.C,
            "objective": self.objective, "iterations": self.iterations,
            "kkt_tol": self.kkt_tol, "kkt_violation": self.kkt_violation,
            "n_support": int(self.support_indices.size),
            "support_indices": self.support_indices.tolist(),
        }


@dataclass(frozen=True)
class MarginReport:
    kept_indices: np.ndarray
    rule: str
    scores: np.ndarray
    n: int

    @property
    def size(self) -> int:
        return int(self.kept_indices.size)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.kept_indices] = True
        return out

    def to_dict(self) -> dict:
        return {"rule": self.rule, "n": self.n, "size": self.size,
                "kept_fraction": self.size / self.n,
                "kept_indices": self.kept_indices.tolist()}


@dataclass(frozen=True)
class MetaMargin:
    levels: tuple
    pair_models: dict
    pair_margins: dict
    kept_indices: np.ndarray
    level_of: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.level_of)

    @property
    def removed(self) -> int:
        return self.n - int(self.kept_indices.size)

    def kept_by_level(self) -> dict:
        kept = self.level_of[self.kept_indices]
        return {k: int(np.sum(kept == k)) for k in self.levels}

    def pair_population(self, a: int, b: int) -> np.ndarray:
        """Kept subjects of levels ``a`` and ``b``: the comparison sample for that pair."""
        kept = self.kept_indices
        lv = self.level_of[kept]
        return kept[(lv == a) | (lv == b)]

    def to_report(self) -> MarginReport:
        return MarginReport(self.kept_indices, "meta-margin: union of pairwise svm margins",
                            self.level_of.astype(float), self.n)

    def to_dict(self) -> dict:
        return {
            "rule": "meta-margin: union of pairwise svm margins",
            "n": self.n, "size": int(self.kept_indices.size), "removed": self.removed,
            "kept_by_level": {str(k): v for k, v in self.kept_by_level().items()},
            "pairs": [
                {"levels": [a, b], "margin_size": int(self.pair_margins[(a, b)].size),
                 "n_used": int(self.pair_population(a, b).size),
                 "model": self.pair_models[(a, b)].to_dict()}
                for (a, b) in sorted(self.pair_models)
            ],
            "kept_indices": self.kept_indices.tolist(),
        }


def default_max_iter(n: int, p: int) -> int:
    return 10 * n * (p + 1)


def fit_svm_arrays(Z, T, C: float = 1.0, kkt_tol: float = 1e-6,
                   max_iter: Optional[int] = None) -> SvmModel:
    """Fit a linear C-SVM to covariates ``Z`` and labels ``T`` in {-1, +1}."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    T = np.asarray(T, dtype=float)
    if C <= 0:
        raise ValueError("C must be positive")
    if not set(np.unique(T)) <= {-1.0, 1.0}:
        raise SchemaError("SVM labels must be -1/+1")
    if np.sum(T > 0) == 0 or np.sum(T < 0) == 0:
        raise InsufficientDataError("both classes must be present")
    n, p = Z.shape
    if max_iter is None:
        max_iter = default_max_iter(n, p)
    res = _smo.solve(Z, T, -np.ones(n), C, tol=kkt_tol, max_iter=max_iter)
    w = res.v
    alpha = res.beta
    w.setflags(write=False)
    alpha.setflags(write=False)
    return SvmModel(w=w, b=svm_offset(Z, T, w), C=float(C), dual_coefs=alpha,
                    objective=-res.objective, iterations=res.iterations,
                    kkt_tol=kkt_tol, kkt_violation=res.kkt_violation)


def svm_offset(Z, T, w) -> float:
    """Offset ``b`` minimizing the hinge loss for the given ``w``.

    With free support vectors this is their common implied offset. Without
    any, the loss is flat over an interval of offsets and the midpoint is
    returned, so ``b`` does not depend on the order of the rows.
    """
    f = Z @ w
    lo, hi = _smo.flat_minimizer(f[T > 0] - 1.0, f[T < 0] + 1.0)
    return 0.5 * (lo + hi)


def fit_linear_svm(d: Dataset, C: float = 1.0, kkt_tol: float = 1e-6,
                   max_iter: Optional[int] = None) -> SvmModel:
    """Soft-margin linear SVM on a binary-treatment dataset.

    The dual is solved by SMO to a maximal violating pair gap of ``kkt_tol``;
    ``max_iter`` (pair updates) defaults to ``10 * n * (p + 1)``.
    """
    if d.treatment.kind != BINARY:
        raise SchemaError("fit_linear_svm needs a binary treatment")
    return fit_svm_arrays(d.covariates, d.T, C, kkt_tol, max_iter)


def decision_value(m: SvmModel, z) -> float | np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != m.w.shape[0]:
        raise ValueError(f"expected {m.w.shape[0]} covariates, got {z.shape[-1]}")
    return z @ m.w - m.b


def margin_scores(m: SvmModel, Z, T) -> np.ndarray:
    return np.asarray(T, dtype=float) * decision_value(m, Z)


def margin_set(m: SvmModel, d: Dataset, margin_tol: float = 1e-8) -> MarginReport:
    """Subjects violating the +-1 prediction rule: ``T_i f(Z_i) < 1 - margin_tol``."""
    if d.p != m.w.shape[0]:
        raise ValueError("model and dataset dimensions differ")
    scores = margin_scores(m, d.covariates, d.T)
    kept = np.flatnonzero(scores < 1.0 - margin_tol)
    scores.setflags(write=False)
    kept.setflags(write=False)
    return MarginReport(kept, f"svm: T*(w.z - b) < 1 - {margin_tol:g}", scores, d.n)


def kkt_report(m: SvmModel, d: Dataset) -> dict:
    """Recompute KKT diagnostics for ``m`` on ``d`` from the dual coefficients."""
    a = np.asarray(m.dual_coefs)
    viol = _smo.kkt_violation(d.covariates, d.T, -np.ones(d.n), m.C, a)
    w = (a * d.T) @ d.covariates
    return {
        "max_kkt_violation": viol,
        "n_at_zero": int(np.sum(a == 0)),
        "n_interior": int(np.sum((a > 0) & (a < m.C))),
        "n_at_C": int(np.sum(a == m.C)),
        "w_residual": float(np.max(np.abs(w - m.w))),
        "equality_residual": float(abs(a @ d.T)),
    }


def fit_meta_margin(d: Dataset, C: float = 1.0, kkt_tol: float = 1e-6,
                    max_iter: Optional[int] = None, margin_tol: float = 1e-8,
                    n_jobs: int = 1) -> MetaMargin:
    """One SVM per unordered pair of treatment levels; union of their margins.

    Within pair (a, b) with a < b, level a is labelled -1 and level b +1.
    """
    if d.treatment.kind != CATEGORICAL:
        raise SchemaError("fit_meta_margin needs a categorical treatment")
    level = d.T.astype(int)
    levels = tuple(range(d.treatment.n_levels))
    pairs = list(itertools.combinations(levels, 2))

    def one(pair):
        a, b = pair
        idx = np.flatnonzero((level == a) | (level == b))
        lab = np.where(level[idx] == b, 1.0, -1.0)
        model = fit_svm_arrays(d.covariates[idx], lab, C, kkt_tol, max_iter)
        scores = margin_scores(model, d.covariates[idx], lab)
        return model, idx[scores < 1.0 - margin_tol]

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            results = list(ex.map(one, pairs))
    else:
        results = [one(pr) for pr in pairs]
    models = {pr: r[0] for pr, r in zip(pairs, results)}
    margins = {pr: r[1] for pr, r in zip(pairs, results)}
    kept = np.unique(np.concatenate([margins[pr] for pr in pairs])).astype(np.int64)
    return MetaMargin(levels, models, margins, kept, level)
