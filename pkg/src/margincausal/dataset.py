"""Data containers, CSV ingestion, standardization and synthetic generators."""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, ParseError, SchemaError

BINARY = "binary"
CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
TREATMENT_KINDS = (BINARY, CATEGORICAL, CONTINUOUS)

MISSING_MARKERS = ("", "NA")

FAMILIES = ("fig1-univariate", "fig2-bivariate", "positivity-violation",
            "continuous-treatment")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TreatmentVector:
    """Treatment assignment of every subject.

    Binary treatments are stored as -1 (control) / +1 (treated); ``labels``
    holds the original (control, treated) values so they can be reported
    back. Categorical treatments are stored as level indices 0..K-1.
    """

    kind: str
    values: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        if self.kind not in TREATMENT_KINDS:
            raise SchemaError(f"unknown treatment kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(self.values))
        v = self.values
        if v.ndim != 1:
            raise SchemaError("treatment must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise SchemaError("treatment contains non-finite values")
        if self.kind == BINARY:
            if not set(np.unique(v)) <= {-1.0, 1.0}:
                raise SchemaError("binary treatment must be coded -1/+1 internally")
            if np.sum(v > 0) < 1 or np.sum(v < 0) < 1:
                raise InsufficientDataError("binary treatment needs both groups present")
            if not self.labels:
                object.__setattr__(self, "labels", (0, 1))
        elif self.kind == CATEGORICAL:
            levels = np.unique(v)
            k = int(levels.max()) + 1 if len(levels) else 0
            if k < 3 or not np.array_equal(levels, np.arange(k)):
                raise SchemaError(
                    "categorical treatment needs levels 0..K-1, all present, K >= 3")
            if not self.labels:
                object.__setattr__(self, "labels", tuple(range(k)))
        else:
            if len(np.unique(v)) < 3:
                raise SchemaError("continuous treatment needs at least 3 distinct values")

    @classmethod
    def binary_from_labels(cls, raw) -> "TreatmentVector":
        """Recode a two-valued vector: the smaller value becomes -1."""
        raw = np.asarray(raw, dtype=float)
        levels = np.unique(raw)
        if len(levels) != 2:
            raise SchemaError(
                f"binary treatment must have exactly 2 distinct values, found {len(levels)}")
        values = np.where(raw == levels[1], 1.0, -1.0)
        return cls(BINARY, values, labels=(_num(levels[0]), _num(levels[1])))

    @property
    def n_levels(self) -> int:
        if self.kind == BINARY:
            return 2
        if self.kind == CATEGORICAL:
            return int(self.values.max()) + 1
        return 0

    def user_values(self) -> np.ndarray:
        """Treatment in the user's original coding."""
        if self.kind == BINARY:
            return np.where(self.values > 0, self.labels[1], self.labels[0]).astype(float)
        return np.asarray(self.values)

    def take(self, idx) -> "TreatmentVector":
        return TreatmentVector(self.kind, self.values[idx], self.labels)


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


@dataclass(frozen=True)
class Dataset:
    covariates: np.ndarray
    treatment: TreatmentVector
    outcome: Optional[np.ndarray] = None
    column_names: tuple = ()
    rejected_rows: tuple = ()

    def __post_init__(self):
        z = _frozen(self.covariates)
        if z.ndim == 1:
            z = _frozen(z.reshape(-1, 1))
        object.__setattr__(self, "covariates", z)
        n, p = z.shape
        if n < 2:
            raise InsufficientDataError(f"need at least 2 rows, got {n}")
        if p < 1:
            raise SchemaError("need at least one covariate")
        if not np.all(np.isfinite(z)):
            raise SchemaError("covariates contain missing or non-finite values")
        if len(self.treatment.values) != n:
            raise SchemaError("treatment length does not match covariates")
        if self.outcome is not None:
            y = _frozen(self.outcome)
            if y.shape != (n,):
                raise SchemaError("outcome length does not match covariates")
            if not np.all(np.isfinite(y)):
                raise SchemaError("outcome contains non-finite values")
            object.__setattr__(self, "outcome", y)
        names = tuple(self.column_names) or tuple(f"z{j + 1}" for j in range(p))
        if len(names) != p:
            raise SchemaError("column_names length does not match covariates")
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "rejected_rows", tuple(self.rejected_rows))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def T(self) -> np.ndarray:
        return self.treatment.values

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.covariates[idx],
            self.treatment.take(idx),
            None if self.outcome is None else self.outcome[idx],
            self.column_names,
        )

    def require_outcome(self) -> np.ndarray:
        if self.outcome is None:
            raise SchemaError("operation needs an outcome column")
        return self.outcome


@dataclass(frozen=True)
class StandardizationRecord:
    means: np.ndarray
    sds: np.ndarray
    kept_columns: tuple
    dropped_columns: tuple = ()

    def to_dict(self) -> dict:
        return {
            "kept_columns": list(self.kept_columns),
            "dropped_columns": list(self.dropped_columns),
            "means": [float(m) for m in self.means],
            "sds": [float(s) for s in self.sds],
        }


def standardize(d: Dataset) -> tuple[Dataset, StandardizationRecord]:
    """Center and scale every covariate to mean 0, sd 1 (denominator n-1).

    Constant columns are dropped and listed in the record.
    """
    z = d.covariates
    means = z.mean(axis=0)
    sds = z.std(axis=0, ddof=1)
    keep = sds > 1e-12 * np.maximum(1.0, np.abs(means))
    if not np.any(keep):
        raise SchemaError("all covariate columns are constant")
    names = np.array(d.column_names, dtype=object)
    rec = StandardizationRecord(
        means=means[keep], sds=sds[keep],
        kept_columns=tuple(names[keep]), dropped_columns=tuple(names[~keep]))
    zs = (z[:, keep] - means[keep]) / sds[keep]
    out = Dataset(zs, d.treatment, d.outcome, rec.kept_columns, d.rejected_rows)
    return out, rec


# ---------------------------------------------------------------- CSV I/O

@dataclass(frozen=True)
class Schema:
    """Which CSV columns play which role."""

    treatment: str
    kind: str = BINARY
    outcome: Optional[str] = None
    covariates: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in TREATMENT_KINDS:
            raise SchemaError(f"unknown treatment kind {self.kind!r}")
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment, "kind": self.kind, "outcome": self.outcome,
            "covariates": None if self.covariates is None else list(self.covariates),
        }


def read_schema_file(path) -> Schema:
    """Read a ``key = value`` schema file.

    Recognised keys: ``treatment``, ``treatment_kind``, ``outcome`` and
    ``covariates`` (comma separated). Lines starting with ``#`` are comments.
    """
    cp = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text(encoding="utf-8")
    try:
        cp.read_string("[schema]\n" + text)
    except configparser.Error as exc:
        raise SchemaError(f"cannot parse schema file {path}: {exc}") from None
    sec = cp["schema"]
    if "treatment" not in sec:
        raise SchemaError("schema file must name a 'treatment' column")
    covs = sec.get("covariates")
    return Schema(
        treatment=sec["treatment"].strip(),
        kind=sec.get("treatment_kind", BINARY).strip(),
        outcome=(sec.get("outcome") or "").strip() or None,
        covariates=tuple(c.strip() for c in covs.split(",") if c.strip()) if covs else None,
    )


def _parse_cell(text, line_no, col):
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric value {text!r} at row {line_no}, column {col!r}",
            row=line_no, column=col) from None


def load_csv(path, schema: Schema) -> Dataset:
    """Load a comma separated file with a header row.

    Rows with an empty or ``NA`` cell in any used column are rejected and
    their (1-based, header excluded) row numbers stored on
    ``Dataset.rejected_rows``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InsufficientDataError(f"{path} is empty") from None
        rows = list(reader)

    needed = [schema.treatment] + ([schema.outcome] if schema.outcome else [])
    if schema.covariates is not None:
        covs = list(schema.covariates)
    else:
        covs = [h for h in header if h not in needed]
    for col in needed + covs:
        if col not in header:
            raise SchemaError(f"column {col!r} not found in header")
    if not covs:
        raise SchemaError("no covariate columns")
    pos = {h: i for i, h in enumerate(header)}

    used = needed + covs
    parsed, rejected = [], []
    for k, row in enumerate(rows, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"row {k} has {len(row)} fields, expected {len(header)}", row=k)
        cells = [row[pos[c]].strip() for c in used]
        if any(c in MISSING_MARKERS for c in cells):
            rejected.append(k)
            continue
        parsed.append([_parse_cell(c, k, name) for c, name in zip(cells, used)])

    if len(parsed) < 2:
        raise InsufficientDataError(f"need at least 2 complete rows, got {len(parsed)}")
    arr = np.array(parsed, dtype=float)
    t_raw = arr[:, 0]
    y = arr[:, 1] if schema.outcome else None
    z = arr[:, len(needed):]

    if schema.kind == BINARY:
        tv = TreatmentVector.binary_from_labels(t_raw)
    elif schema.kind == CATEGORICAL:
        if not np.all(t_raw == np.round(t_raw)):
            raise SchemaError("categorical treatment must be integer coded")
        tv = TreatmentVector(CATEGORICAL, t_raw)
    else:
        tv = TreatmentVector(CONTINUOUS, t_raw)
    return Dataset(z, tv, y, tuple(covs), tuple(rejected))


def write_csv(d: Dataset, path, treatment_col="t", outcome_col="y") -> None:
    """Write ``d`` in the layout ``load_csv`` reads back (user treatment coding).

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(d, path, treatment_col, outcome_col)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(d, fh, treatment_col, outcome_col)


def _write_rows(d, fh, treatment_col, outcome_col):
    cols = ([outcome_col] if d.outcome is not None else []) + [treatment_col] + list(d.column_names)
    t = d.treatment.user_values()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for i in range(d.n):
        row = ([repr(float(d.outcome[i]))] if d.outcome is not None else [])
        row.append(_fmt(t[i]))
        row.extend(repr(float(x)) for x in d.covariates[i])
        w.writerow(row)


def _fmt(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


# ------------------------------------------------------------- generators

@dataclass(frozen=True)
class DgpSpec:
    """Parameters of a synthetic data generating process.

    ``n0``/``n1`` override the even split of ``n`` for the two-group
    families. ``gamma`` and ``delta`` default to vectors of ones / halves.
    Every family also draws an outcome ``Y = tau*T + Z'gamma + N(0, 1)``
    (T in its 0/1 or continuous coding).
    """

    family: str
    n: int = 200
    seed: int = 0
    n0: Optional[int] = None
    n1: Optional[int] = None
    mean0: Optional[Sequence[float]] = None
    mean1: Optional[Sequence[float]] = None
    p: Optional[int] = None
    tau: float = 2.0
    gamma: Optional[Sequence[float]] = None
    delta: Optional[Sequence[float]] = None
    sigma_t: float = 1.0
    slope: float = 6.0
    bounds: tuple = (0.1, 0.9)

    def group_sizes(self) -> tuple[int, int]:
        n0 = self.n0 if self.n0 is not None else self.n // 2
        n1 = self.n1 if self.n1 is not None else self.n - n0
        return n0, n1

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, (tuple, list, np.ndarray)):
                v = [float(x) for x in v]
            out[k] = v
        return out


def _vec(v, default, p):
    if v is None:
        return np.full(p, default, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (p,):
        raise SchemaError(f"parameter vector has length {len(v)}, expected {p}")
    return v


def generate(spec: DgpSpec) -> Dataset:
    """Draw a dataset; the output is a pure function of ``spec``."""
    if spec.family not in FAMILIES:
        raise SchemaError(f"unknown DGP family {spec.family!r}; choose from {FAMILIES}")
    if not 0 <= int(spec.seed) < 2 ** 64:
        raise SchemaError("seed must be a 64-bit unsigned integer")
    rng = np.random.default_rng(int(spec.seed))

    if spec.family in ("fig1-univariate", "fig2-bivariate"):
        p = 1 if spec.family == "fig1-univariate" else 2
        d0, d1 = (-2.0, 2.0) if p == 1 else (0.0, 1.0)
        n0, n1 = spec.group_sizes()
        if n0 < 2 or n1 < 2:
            raise InsufficientDataError("each group needs at least 2 subjects")
        m0, m1 = _vec(spec.mean0, d0, p), _vec(spec.mean1, d1, p)
        z = np.vstack([rng.normal(m0, 1.0, size=(n0, p)),
                       rng.normal(m1, 1.0, size=(n1, p))])
        t01 = np.r_[np.zeros(n0), np.ones(n1)]
        gamma = _vec(spec.gamma, 1.0, p)
        y = spec.tau * t01 + z @ gamma + rng.normal(size=n0 + n1)
        tv = TreatmentVector(BINARY, 2 * t01 - 1, labels=(0, 1))
        return Dataset(z, tv, y)

    n = int(spec.n)
    if n < 4:
        raise InsufficientDataError("n must be at least 4")

    if spec.family == "positivity-violation":
        p = spec.p or 2
        lo, hi = spec.bounds
        z = rng.uniform(size=(n, p))
        prob = 1.0 / (1.0 + np.exp(-spec.slope * (z[:, 0] - 0.5)))
        t01 = (rng.uniform(size=n) < prob).astype(float)
        t01[z[:, 0] > hi] = 1.0
        t01[z[:, 0] < lo] = 0.0
        gamma = _vec(spec.gamma, 1.0, p)
        y = spec.tau * t01 + z @ gamma + rng.normal(size=n)
        return Dataset(z, TreatmentVector(BINARY, 2 * t01 - 1, labels=(0, 1)), y)

    p = spec.p or 3
    z = rng.normal(size=(n, p))
    delta = _vec(spec.delta, 0.5, p)
    t = z @ delta + spec.sigma_t * rng.normal(size=n)
    gamma = _vec(spec.gamma, 1.0, p)
    y = spec.tau * t + z @ gamma + rng.normal(size=n)
    return Dataset(z, TreatmentVector(CONTINUOUS, t), y)


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """Generator for Monte Carlo / bootstrap replicate ``replicate``.

    Seeds are derived as ``SeedSequence([master_seed, replicate])`` so the
    stream of replicate r never depends on which worker ran it.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(replicate)]))


def replicate_seed(master_seed: int, replicate: int) -> int:
    """64-bit integer seed for replicate ``replicate`` (same derivation)."""
    ss = np.random.SeedSequence([int(master_seed), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def overlap_region_effect(spec: DgpSpec) -> float:
    """True effect of the generators; all of them have a constant effect tau."""
    if not math.isfinite(spec.tau):
        raise SchemaError("tau must be finite")
    return float(spec.tau)
