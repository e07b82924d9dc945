"""Bootstrap distribution of the margin size and trees describing margin membership."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dataset import BINARY, Dataset, replicate_rng
from .errors import InsufficientDataError, SchemaError
from .svm import fit_linear_svm, fit_svm_arrays, margin_scores, margin_set


def default_resampler(n: int, rng: np.random.Generator) -> np.ndarray:
    """Rows drawn with replacement."""
    return rng.integers(0, n, size=n)


@dataclass(frozen=True)
class BootstrapMarginDist:
    sizes: np.ndarray  # float, NaN where the replicate had a single class
    B: int
    master_seed: int
    observed_size: int
    n: int

    @property
    def n_missing(self) -> int:
        return int(np.sum(np.isnan(self.sizes)))

    @property
    def valid_sizes(self) -> np.ndarray:
        return self.sizes[~np.isnan(self.sizes)].astype(np.int64)

    def percentile(self, q) -> float:
        return float(np.percentile(self.valid_sizes, q))

    def histogram(self) -> list[tuple[int, int]]:
        """``(size, count)`` rows for every distinct observed size."""
        vals, counts = np.unique(self.valid_sizes, return_counts=True)
        return [(int(v), int(c)) for v, c in zip(vals, counts)]

    def histogram_csv(self) -> str:
        return "size,count\n" + "".join(f"{s},{c}\n" for s, c in self.histogram())

    def to_dict(self) -> dict:
        valid = self.valid_sizes
        out = {"B": self.B, "master_seed": self.master_seed, "n": self.n,
               "observed_size": self.observed_size, "n_missing": self.n_missing,
               "sizes": [None if np.isnan(s) else int(s) for s in self.sizes],
               "histogram": [list(r) for r in self.histogram()]}
        if valid.size:
            out.update(mean=float(valid.mean()), p01=self.percentile(1),
                       p99=self.percentile(99))
        return out


def bootstrap_margin_size(d: Dataset, B: int = 200, C: float = 1.0, master_seed: int = 0,
                          kkt_tol: float = 1e-6, margin_tol: float = 1e-8,
                          resampler: Optional[Callable] = None,
                          n_jobs: int = 1) -> BootstrapMarginDist:
    """Refit the SVM on B row-resamples and record each margin's size.

    Replicate ``r`` draws from ``replicate_rng(master_seed, r)``, so the
    result does not depend on ``n_jobs``. ``resampler(n, rng)`` returns the
    row indices of one replicate. Replicates with only one class present are
    recorded as NaN.
    """
    if d.treatment.kind != BINARY:
        raise SchemaError("bootstrap_margin_size needs a binary treatment")
    if B < 1:
        raise ValueError("B must be at least 1")
    resampler = resampler or default_resampler
    Z, T = d.covariates, d.T
    observed = margin_set(fit_linear_svm(d, C, kkt_tol), d, margin_tol).size

    def one(r):
        idx = np.asarray(resampler(d.n, replicate_rng(master_seed, r)), dtype=np.int64)
        z, t = Z[idx], T[idx]
        if np.all(t > 0) or np.all(t < 0):
            return np.nan
        m = fit_svm_arrays(z, t, C, kkt_tol)
        return float(np.sum(margin_scores(m, z, t) < 1.0 - margin_tol))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            sizes = list(ex.map(one, range(B)))
    else:
        sizes = [one(r) for r in range(B)]
    sizes = np.array(sizes, dtype=float)
    sizes.setflags(write=False)
    return BootstrapMarginDist(sizes, int(B), int(master_seed), int(observed), d.n)


# ------------------------------------------------------------------ trees

@dataclass(frozen=True)
class TreeNode:
    """A split (``feature``, ``threshold``, ``left``, ``right``) or a leaf.

    Rows with ``z[feature] <= threshold`` go left.
    """

    probability: float
    count: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    decrease: float = 0.0  # Gini impurity decrease of the split
    n_features: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def leaves(self) -> list["TreeNode"]:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    @property
    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth, self.right.depth)

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": True, "probability": self.probability, "count": self.count}
        return {"leaf": False, "feature": self.feature, "threshold": self.threshold,
                "probability": self.probability, "count": self.count,
                "gini_decrease": self.decrease,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    def to_text(self, names=None, indent: str = "  ") -> str:
        lines = []

        def walk(node, depth):
            pad = indent * depth
            if node.is_leaf:
                lines.append(f"{pad}leaf: P(margin) = {node.probability:.3f} (n = {node.count})")
                return
            name = names[node.feature] if names else f"z{node.feature}"
            lines.append(f"{pad}if {name} <= {node.threshold:.6g}:  (n = {node.count})")
            walk(node.left, depth + 1)
            lines.append(f"{pad}else:")
            walk(node.right, depth + 1)

        walk(self, 0)
        return "\n".join(lines)


def _gini(pos, total):
    q = pos / total
    return 2.0 * q * (1.0 - q)


def _best_split(Z, y, min_leaf):
    """Best (decrease, feature, threshold); ties go to the lower feature, then threshold."""
    n, p = Z.shape
    parent = _gini(y.sum(), n)
    best = (0.0, None, None)
    for j in range(p):
        order = np.argsort(Z[:, j], kind="stable")
        zs, ys = Z[order, j], y[order]
        cum = np.cumsum(ys)
        k = np.arange(1, n)  # size of the left part
        valid = (zs[1:] > zs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
        if not np.any(valid):
            continue
        k = k[valid]
        left_pos = cum[k - 1]
        right_pos = cum[-1] - left_pos
        child = (k * _gini(left_pos, k) + (n - k) * _gini(right_pos, n - k)) / n
        dec = parent - child
        i = int(np.argmax(dec))  # first maximum = lowest threshold
        if dec[i] > best[0] + 1e-12:
            pos = np.flatnonzero(valid)[i]
            thr = 0.5 * (zs[pos] + zs[pos + 1])
            if thr >= zs[pos + 1]:  # adjacent floats: the midpoint rounds up
                thr = zs[pos]
            best = (float(dec[i]), j, thr)
    return best


def fit_margin_tree(d, in_margin, max_depth: int = 3,
                    min_leaf: Optional[int] = None) -> TreeNode:
    """CART classification tree (Gini) for margin membership.

    ``d`` is a Dataset or a covariate matrix. Thresholds are midpoints
    between adjacent distinct observed values. ``min_leaf`` defaults to
    ``max(5, n // 50)``.
    """
    Z = d.covariates if isinstance(d, Dataset) else np.atleast_2d(np.asarray(d, dtype=float))
    y = np.asarray(in_margin).astype(bool)
    n = Z.shape[0]
    if y.shape != (n,):
        raise ValueError("in_margin must have one entry per row")
    if n == 0:
        raise InsufficientDataError("no rows")
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if min_leaf is None:
        min_leaf = max(5, n // 50)
    if min_leaf < 1:
        raise ValueError("min_leaf must be at least 1")
    yf = y.astype(float)
    p = Z.shape[1]

    def grow(idx, depth):
        yy = yf[idx]
        node_p = float(yy.mean())
        if depth >= max_depth or node_p in (0.0, 1.0) or len(idx) < 2 * min_leaf:
            return TreeNode(node_p, len(idx), n_features=p)
        dec, j, thr = _best_split(Z[idx], yy, min_leaf)
        if j is None or dec <= 0:
            return TreeNode(node_p, len(idx), n_features=p)
        go_left = Z[idx, j] <= thr
        return TreeNode(node_p, len(idx), j, float(thr),
                        grow(idx[go_left], depth + 1), grow(idx[~go_left], depth + 1),
                        decrease=dec, n_features=p)

    return grow(np.arange(n), 0)


def predict_tree(t: TreeNode, z) -> float:
    """Margin probability of the leaf that ``z`` reaches."""
    z = np.asarray(z, dtype=float).ravel()
    if t.n_features is not None and z.size != t.n_features:
        raise ValueError(f"tree was fitted on {t.n_features} features, got {z.size}")
    node = t
    while not node.is_leaf:
        node = node.left if z[node.feature] <= node.threshold else node.right
    return node.probability


def predict_tree_rows(t: TreeNode, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return np.array([predict_tree(t, z) for z in Z])
