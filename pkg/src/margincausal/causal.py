"""Causal estimands and estimators, and the three-step margin pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import svm as svm_mod
from . import svr as svr_mod
from .dataset import BINARY, CATEGORICAL, CONTINUOUS, Dataset, TreatmentVector, standardize
from .errors import (DegenerateModelError, EmptyMarginError, InsufficientDataError,
                     SchemaError)
from .geometry import SEPARABLE, relaxed_overlap_check
from .matching import MatchSet, match_groups

ACE = "ACE"
ACE_SUBPOP = "ACE_subpop"
ACET = "ACET"
DOSE_SLOPE = "dose_slope"

PROPENSITY_METRIC = "propensity-absolute-difference"
MAHALANOBIS = "mahalanobis"
METRICS = (PROPENSITY_METRIC, MAHALANOBIS)

CLIP = 1e-12


@dataclass(frozen=True)
class CausalEstimate:
    estimand: str
    point: float
    stderr: float
    n_used: int
    method: str

    @property
    def ci95(self) -> tuple[float, float]:
        h = 1.959963984540054 * self.stderr
        return self.point - h, self.point + h

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {"estimand": self.estimand, "point": self.point, "stderr": self.stderr,
                "ci95": [lo, hi], "n_used": self.n_used, "method": self.method}


def _binary_outcome(d: Dataset):
    if d.treatment.kind != BINARY:
        raise SchemaError("a binary treatment is required")
    return d.require_outcome(), d.T


def _diff_in_means(y, t, estimand, method):
    y1, y0 = y[t > 0], y[t < 0]
    if len(y1) < 2 or len(y0) < 2:
        raise InsufficientDataError(
            f"each group needs at least 2 subjects (treated {len(y1)}, control {len(y0)})")
    point = float(np.mean(y1) - np.mean(y0))
    se = math.sqrt(np.var(y1, ddof=1) / len(y1) + np.var(y0, ddof=1) / len(y0))
    return CausalEstimate(estimand, point, se, len(y), method)


def naive_ace(d: Dataset) -> CausalEstimate:
    """Difference in group means with the unequal-variance standard error."""
    y, t = _binary_outcome(d)
    return _diff_in_means(y, t, ACE, "naive difference in means")


def subpopulation_ace(d: Dataset, keep) -> CausalEstimate:
    """Difference in means on the subjects in ``keep``.

    The standard error treats ``keep`` as fixed.
    """
    y, t = _binary_outcome(d)
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        raise EmptyMarginError("subpopulation_ace", "keep set is empty")
    return _diff_in_means(y[keep], t[keep], ACE_SUBPOP, "difference in means on kept subset")


# ------------------------------------------------------------ propensity

@dataclass(frozen=True)
class PropensityModel:
    coefficients: np.ndarray  # intercept first
    fitted: np.ndarray
    converged: bool
    iterations: int
    separation: bool = False
    n_clipped: int = 0

    def predict(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        eta = self.coefficients[0] + Z @ self.coefficients[1:]
        return np.clip(_expit(eta), CLIP, 1 - CLIP)

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "converged": self.converged,
                "iterations": self.iterations, "separation": self.separation,
                "n_clipped": self.n_clipped}


def _expit(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit_propensity_logistic(d: Dataset, tol: float = 1e-8, max_iter: int = 100) -> PropensityModel:
    """Logistic regression of treatment on covariates by IRLS (Newton).

    Complete separation of the two groups is checked geometrically: the
    likelihood has no maximizer exactly when the groups' covariate hulls are
    strictly separable. The model is then flagged and the last iterate kept.
    """
    if d.treatment.kind != BINARY:
        raise SchemaError("propensity model needs a binary treatment")
    z = d.covariates
    t = (d.T > 0).astype(float)
    X = np.hstack([np.ones((d.n, 1)), z])
    beta = np.zeros(X.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = _expit(X @ beta)
        w = mu * (1 - mu)
        H = X.T @ (X * w[:, None])
        g = X.T @ (t - mu)
        step = np.linalg.lstsq(H, g, rcond=None)[0]
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            beta = beta - step
            break
        if np.max(np.abs(step)) <= tol:
            converged = True
            break
    check = relaxed_overlap_check(z[t < 1], z[t > 0])
    separated = check.verdict == SEPARABLE
    if separated:
        converged = False
    raw = _expit(X @ beta)
    fitted = np.clip(raw, CLIP, 1 - CLIP)
    n_clipped = int(np.sum((raw < CLIP) | (raw > 1 - CLIP)))
    beta.setflags(write=False)
    fitted.setflags(write=False)
    return PropensityModel(beta, fitted, converged, it, separated, n_clipped)


def crump_trim(pm, c: float) -> np.ndarray:
    """Indices with ``c <= e(Z_i) <= 1 - c``; ``pm`` is a model or an array of scores."""
    if not 0 <= c < 0.5:
        raise ValueError("c must lie in [0, 0.5)")
    e = pm.fitted if isinstance(pm, PropensityModel) else np.asarray(pm, dtype=float)
    return np.flatnonzero((e >= c) & (e <= 1 - c))


# --------------------------------------------------------------- matching

def _mahalanobis_matrix(za, zb, zall):
    cov = np.atleast_2d(np.cov(zall, rowvar=False, ddof=1))
    if np.any(np.diag(cov) <= 0) or np.linalg.matrix_rank(cov) < cov.shape[0]:
        raise DegenerateModelError("covariance of the matched covariates is singular")
    L = np.linalg.cholesky(np.linalg.inv(cov))
    a, b = za @ L, zb @ L
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def optimal_pair_match(d: Dataset, keep=None, metric: str = MAHALANOBIS,
                       scores=None) -> MatchSet:
    """Optimal 1:1 matching of treated and control subjects within ``keep``.

    ``metric`` is ``"mahalanobis"`` (covariance of the kept covariates) or
    ``"propensity-absolute-difference"``. For the latter, ``scores`` gives
    the propensity of every subject in ``d``; if omitted a logistic model is
    fitted on the kept subjects.
    """
    if d.treatment.kind != BINARY:
        raise SchemaError("matching needs a binary treatment")
    keep = np.arange(d.n) if keep is None else np.asarray(keep, dtype=np.int64)
    t = d.T[keep]
    tr, co = keep[t > 0], keep[t < 0]
    if len(tr) == 0 or len(co) == 0:
        raise InsufficientDataError("both groups must be present in the kept set")
    if metric == MAHALANOBIS:
        z = d.covariates
        dist = _mahalanobis_matrix(z[tr], z[co], z[keep])
    elif metric == PROPENSITY_METRIC:
        if scores is None:
            e = np.empty(d.n)
            e[keep] = fit_propensity_logistic(d.subset(keep)).fitted
        else:
            e = np.asarray(scores, dtype=float)
            if e.shape != (d.n,):
                raise ValueError("scores must have one entry per subject")
        dist = np.abs(e[tr][:, None] - e[co][None, :])
    else:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    return match_groups(tr, co, dist)


def matched_estimate(ms: MatchSet, Y, estimand: str = ACE_SUBPOP,
                     method: str = "optimal 1:1 matching") -> CausalEstimate:
    """Mean treated-minus-control difference over matched pairs.

    The standard error is ``sd(differences) / sqrt(#pairs)`` with no
    correction for how the pairs or the kept set were chosen.
    """
    if ms.n_pairs < 2:
        raise InsufficientDataError("need at least 2 matched pairs")
    Y = np.asarray(Y, dtype=float)
    diffs = Y[ms.treated()] - Y[ms.controls()]
    se = float(np.std(diffs, ddof=1) / math.sqrt(len(diffs)))
    return CausalEstimate(estimand, float(np.mean(diffs)), se, 2 * ms.n_pairs, method)


# ------------------------------------------------- continuous treatments

LINEAR_LS = "linear-least-squares"
SVR_MODEL = "svr"


@dataclass(frozen=True)
class StabilizedWeights:
    sigma_hat: float
    residuals: np.ndarray
    sigma_hat_null: float
    residuals_null: np.ndarray
    weights: np.ndarray
    treatment_model: str

    def recompute(self) -> np.ndarray:
        return stabilized_weight_formula(self.residuals, self.sigma_hat,
                                         self.residuals_null, self.sigma_hat_null)


def normal_density(x, sigma):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)


def stabilized_weight_formula(resid, sigma, resid_null, sigma_null) -> np.ndarray:
    """Null-model residual density over covariate-model residual density."""
    return normal_density(resid_null, sigma_null) / normal_density(resid, sigma)


def stabilized_weights(Z, T, treatment_model: str = LINEAR_LS, epsilon: float = 0.1,
                       reg_c: float = 1.0) -> StabilizedWeights:
    """Normal-density stabilized weights for a continuous treatment.

    The denominator model regresses T on Z (least squares or linear SVR);
    the numerator model is intercept only. Both residual scales use the
    n - 1 denominator.
    """
    if treatment_model not in (LINEAR_LS, SVR_MODEL):
        raise ValueError(f"unknown treatment model {treatment_model!r}")
    T = np.asarray(T, dtype=float)
    n = len(T)
    Z = np.asarray(Z, dtype=float)
    Z = Z.reshape(n, -1) if Z.size else np.empty((n, 0))
    p = Z.shape[1]
    if n <= p + 2:
        raise InsufficientDataError(f"need more than p + 2 = {p + 2} subjects")
    if p == 0:
        # nothing to adjust for: the covariate model is the null model
        fitted = np.full(n, T.mean())
    elif treatment_model == LINEAR_LS:
        X = np.hstack([np.ones((n, 1)), Z])
        coef = np.linalg.lstsq(X, T, rcond=None)[0]
        fitted = X @ coef
    else:
        fitted = svr_mod.fit_linear_svr(Z, T, epsilon, reg_c).predict(Z)
    resid = T - fitted
    resid_null = T - T.mean()
    sigma_null = svr_mod.residual_sd(resid_null)
    sigma = svr_mod.residual_sd(resid)
    if sigma <= 1e-10 * sigma_null:
        # covariates predict T up to rounding
        raise DegenerateModelError("treatment model residual standard deviation is zero")
    w = stabilized_weight_formula(resid, sigma, resid_null, sigma_null)
    if not np.all(np.isfinite(w) & (w > 0)):
        raise DegenerateModelError("stabilized weights are not finite and positive")
    for a in (resid, resid_null, w):
        a.setflags(write=False)
    return StabilizedWeights(sigma, resid, sigma_null, resid_null, w, treatment_model)


def weighted_outcome_regression(Y, T, weights, method: str = "stabilized-weight WLS") -> CausalEstimate:
    """Weighted least squares of Y on (1, T); slope with HC0 standard error."""
    Y = np.asarray(Y, dtype=float)
    T = np.asarray(T, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (len(Y) == len(T) == len(w)):
        raise ValueError("Y, T and weights must have the same length")
    if len(Y) < 3:
        raise InsufficientDataError("need at least 3 subjects")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and positive")
    if np.ptp(T) == 0:
        raise DegenerateModelError("treatment is constant")
    X = np.column_stack([np.ones_like(T), T])
    XtW = X.T * w
    bread = np.linalg.inv(XtW @ X)
    coef = bread @ (XtW @ Y)
    e = Y - X @ coef
    meat = (XtW * e ** 2) @ XtW.T
    cov = bread @ meat @ bread
    return CausalEstimate(DOSE_SLOPE, float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))),
                          len(Y), method)


# --------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class PipelineConfig:
    C: float = 1.0
    kkt_tol: float = 1e-6
    margin_tol: float = 1e-8
    metric: str = MAHALANOBIS
    epsilon: float = 0.1
    reg_c: float = 1.0
    treatment_model: str = LINEAR_LS
    standardize: bool = True
    max_iter: Optional[int] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PipelineResult:
    kind: str
    margin: svm_mod.MarginReport
    estimates: list
    model: object = None
    matches: Optional[MatchSet] = None
    meta: Optional[svm_mod.MetaMargin] = None
    weights: Optional[StabilizedWeights] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def estimate(self) -> CausalEstimate:
        return self.estimates[0]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "margin": self.margin.to_dict(),
               "estimates": [e if isinstance(e, dict) else e.to_dict() for e in self.estimates],
               "diagnostics": self.diagnostics}
        if self.model is not None:
            out["model"] = self.model.to_dict()
        if self.matches is not None:
            out["matches"] = self.matches.to_dict()
        if self.meta is not None:
            out["meta_margin"] = self.meta.to_dict()
        return out


def margin_pipeline(d: Dataset, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Fit the treatment model, keep the margin, estimate the effect there.

    binary: linear SVM -> margin set -> optimal 1:1 matching -> paired estimate.
    categorical: pairwise SVMs -> meta-margin -> difference in means per pair.
    continuous: linear SVR -> tube violators -> stabilized-weight regression.
    """
    d.require_outcome()
    work = d
    diag = {}
    if config.standardize:
        work, rec = standardize(d)
        diag["standardization"] = rec.to_dict()
    kind = d.treatment.kind

    if kind == BINARY:
        model = svm_mod.fit_linear_svm(work, config.C, config.kkt_tol, config.max_iter)
        rep = svm_mod.margin_set(model, work, config.margin_tol)
        if rep.size == 0:
            raise EmptyMarginError("margin_set")
        diag["kkt"] = svm_mod.kkt_report(model, work)
        ms = optimal_pair_match(work, rep.kept_indices, config.metric)
        est = matched_estimate(ms, d.outcome, ACE_SUBPOP,
                               f"svm margin + optimal 1:1 {config.metric} matching")
        return PipelineResult(kind, rep, [est], model=model, matches=ms, diagnostics=diag)

    if kind == CATEGORICAL:
        meta = svm_mod.fit_meta_margin(work, config.C, config.kkt_tol, config.max_iter,
                                       config.margin_tol)
        if meta.kept_indices.size == 0:
            raise EmptyMarginError("fit_meta_margin")
        ests = []
        for a, b in sorted(meta.pair_models):
            pop = meta.pair_population(a, b)
            lv = d.T[pop]
            entry = {"levels": [a, b], "reference": a, "n_used": int(pop.size)}
            try:
                pair_d = Dataset(d.covariates[pop],
                                 TreatmentVector(BINARY, np.where(lv == b, 1.0, -1.0),
                                                 labels=(a, b)),
                                 d.outcome[pop], d.column_names)
                est = subpopulation_ace(pair_d, np.arange(pop.size))
                entry["estimate"] = CausalEstimate(
                    ACE_SUBPOP, est.point, est.stderr, est.n_used,
                    f"meta-margin difference in means, level {b} vs {a}").to_dict()
            except (InsufficientDataError, SchemaError) as exc:
                entry["estimate"] = None
                entry["error"] = str(exc)
            ests.append(entry)
        diag["kept_by_level"] = {str(k): v for k, v in meta.kept_by_level().items()}
        diag["removed"] = meta.removed
        return PipelineResult(kind, meta.to_report(), ests, meta=meta, diagnostics=diag)

    if kind == CONTINUOUS:
        model = svr_mod.fit_linear_svr(work.covariates, d.T, config.epsilon, config.reg_c,
                                       max_iter=config.max_iter)
        rep = svr_mod.continuous_margin_set(model, config.margin_tol)
        if rep.size == 0:
            raise EmptyMarginError("continuous_margin_set")
        k = rep.kept_indices
        sw = stabilized_weights(work.covariates[k], d.T[k], config.treatment_model,
                                config.epsilon, config.reg_c)
        est = weighted_outcome_regression(
            d.outcome[k], d.T[k], sw.weights,
            f"svr tube violators + stabilized-weight WLS ({config.treatment_model})")
        diag["sigma_hat"] = sw.sigma_hat
        diag["sigma_hat_null"] = sw.sigma_hat_null
        return PipelineResult(kind, rep, [est], model=model, weights=sw, diagnostics=diag)

    raise SchemaError(f"unsupported treatment kind {kind!r}")
