"""Command-line interface.

Every subcommand writes one JSON object per line (keys sorted) and embeds
the full run configuration and the library version in each record.
Exit status: 0 success, 1 usage error, 2 data or convergence error (with a
one-line JSON error record on stderr).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import __version__
from . import causal, diagnostics, geometry, svm, svr
from .dataset import (BINARY, CATEGORICAL, CONTINUOUS, TREATMENT_KINDS, Dataset, DgpSpec,
                      Schema, generate, load_csv, read_schema_file, standardize, write_csv)
from .errors import MarginCausalError, SchemaError

SUBCOMMANDS = ("simulate", "overlap", "fit-svm", "fit-svr", "margin", "estimate",
               "bootstrap", "tree")
FAMILY_ALIASES = {
    "fig1": "fig1-univariate", "fig1-univariate": "fig1-univariate",
    "fig2": "fig2-bivariate", "fig2-bivariate": "fig2-bivariate",
    "positivity": "positivity-violation", "positivity-violation": "positivity-violation",
    "continuous": "continuous-treatment", "continuous-treatment": "continuous-treatment",
}
FORMATS = ("jsonl", "csv", "text")


class UsageError(Exception):
    def __init__(self, message, printed=False):
        super().__init__(message)
        self.printed = printed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message, printed=True)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    data: Optional[str]
    dgp: Optional[dict]
    schema: Optional[dict]
    cost: float
    epsilon: float
    reg_c: float
    kkt_tol: float
    margin_tol: float
    trim_c: float
    metric: str
    boot_b: int
    seed: Optional[int]
    out: Optional[str]
    format: str
    standardize: bool
    method: Optional[str]
    max_depth: int
    min_leaf: Optional[int]
    jobs: int

    def to_dict(self) -> dict:
        return asdict(self)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="margincausal",
                     description="Covariate overlap checks and margin-based causal estimates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
    helps = {
        "simulate": "draw a synthetic dataset and write it as CSV",
        "overlap": "check relaxed covariate overlap (or hard tube for continuous T)",
        "fit-svm": "fit the linear SVM(s) and report KKT diagnostics",
        "fit-svr": "fit the linear epsilon-SVR",
        "margin": "report the margin set",
        "estimate": "estimate the causal effect (--method naive|crump|margin)",
        "bootstrap": "bootstrap distribution of the margin size",
        "tree": "classification tree describing margin membership",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        src = p.add_argument_group("data source (use --data or --family)")
        src.add_argument("--data", help="CSV file with a header row")
        src.add_argument("--family", help="synthetic family: fig1, fig2, positivity, continuous")
        src.add_argument("--n", type=int, default=200, help="sample size for --family")
        src.add_argument("--schema", help="schema file (key = value lines)")
        src.add_argument("--treatment-col", default=None, help="treatment column (default t)")
        src.add_argument("--treatment-kind", choices=TREATMENT_KINDS, default=None)
        src.add_argument("--outcome-col", default=None, help="outcome column (default y if present)")
        src.add_argument("--covariates", default=None, help="comma-separated covariate columns")
        src.add_argument("--no-standardize", action="store_true",
                         help="fit on raw covariates instead of z-scores")
        m = p.add_argument_group("model")
        m.add_argument("--cost", type=float, default=1.0, help="SVM cost C")
        m.add_argument("--epsilon", type=float, default=0.1, help="SVR tube half-width")
        m.add_argument("--reg-c", type=float, default=1.0, help="SVR regularization constant")
        m.add_argument("--kkt-tol", type=float, default=1e-6)
        m.add_argument("--margin-tol", type=float, default=1e-8)
        m.add_argument("--trim-c", type=float, default=0.1, help="propensity trimming level")
        m.add_argument("--metric", choices=causal.METRICS, default=causal.MAHALANOBIS)
        m.add_argument("--method", choices=("naive", "crump", "margin"), default="margin")
        m.add_argument("--boot-b", type=int, default=200, help="bootstrap replicates")
        m.add_argument("--max-depth", type=int, default=3)
        m.add_argument("--min-leaf", type=int, default=None)
        o = p.add_argument_group("run")
        o.add_argument("--seed", type=int, default=None, help="master seed")
        o.add_argument("--out", default=None, help="output path (default stdout)")
        o.add_argument("--format", choices=FORMATS, default="jsonl")
        o.add_argument("--jobs", type=int, default=1, help="worker threads")
    return parser


# ------------------------------------------------------------ validation

def _validate(args) -> None:
    cmd = args.subcommand
    if cmd is None:
        raise UsageError("a subcommand is required")
    if args.data and args.family:
        raise UsageError("give exactly one data source: --data or --family")
    if cmd == "simulate":
        if not args.family:
            raise UsageError("simulate needs --family")
    elif not (args.data or args.family):
        raise UsageError("a data source is required: --data or --family")
    if args.family and args.family not in FAMILY_ALIASES:
        raise UsageError(f"unknown family {args.family!r}")
    if (args.family or cmd == "bootstrap") and args.seed is None:
        raise UsageError("randomized runs require --seed")
    if args.seed is not None and not 0 <= args.seed < 2 ** 63:
        raise UsageError("--seed must be a non-negative 64-bit integer")
    checks = [
        (args.cost > 0, "--cost must be positive"),
        (args.epsilon > 0, "--epsilon must be positive"),
        (args.reg_c > 0, "--reg-c must be positive"),
        (args.kkt_tol > 0, "--kkt-tol must be positive"),
        (args.margin_tol >= 0, "--margin-tol must be non-negative"),
        (0 <= args.trim_c < 0.5, "--trim-c must lie in [0, 0.5)"),
        (args.boot_b >= 1, "--boot-b must be at least 1"),
        (args.max_depth >= 1, "--max-depth must be at least 1"),
        (args.min_leaf is None or args.min_leaf >= 1, "--min-leaf must be at least 1"),
        (args.n >= 4, "--n must be at least 4"),
        (args.jobs >= 1, "--jobs must be at least 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise UsageError(msg)
    allowed = {"bootstrap": ("jsonl", "csv"), "margin": ("jsonl", "csv"),
               "tree": ("jsonl", "text")}
    if args.format not in allowed.get(cmd, ("jsonl",)):
        raise UsageError(f"--format {args.format} is not available for {cmd}")


def _config(args) -> RunConfig:
    dgp = None
    if args.family:
        dgp = DgpSpec(FAMILY_ALIASES[args.family], n=args.n, seed=args.seed).to_dict()
    schema = None
    if args.data:
        schema = _schema(args).to_dict()
    return RunConfig(
        subcommand=args.subcommand, data=args.data, dgp=dgp, schema=schema,
        cost=args.cost, epsilon=args.epsilon, reg_c=args.reg_c, kkt_tol=args.kkt_tol,
        margin_tol=args.margin_tol, trim_c=args.trim_c, metric=args.metric,
        boot_b=args.boot_b, seed=args.seed, out=args.out, format=args.format,
        standardize=not args.no_standardize,
        method=args.method if args.subcommand == "estimate" else None,
        max_depth=args.max_depth, min_leaf=args.min_leaf, jobs=args.jobs)


def _schema(args) -> Schema:
    base = read_schema_file(args.schema) if args.schema else None
    treatment = args.treatment_col or (base.treatment if base else "t")
    kind = args.treatment_kind or (base.kind if base else BINARY)
    covs = (tuple(c.strip() for c in args.covariates.split(",") if c.strip())
            if args.covariates else (base.covariates if base else None))
    outcome = args.outcome_col or (base.outcome if base else None)
    if outcome is None:
        with open(args.data, newline="", encoding="utf-8") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        if "y" in header and treatment != "y" and not (covs and "y" in covs):
            outcome = "y"
    return Schema(treatment, kind, outcome, covs)


def _load(cfg: RunConfig) -> Dataset:
    if cfg.dgp is not None:
        return generate(DgpSpec(**{k: (tuple(v) if isinstance(v, list) else v)
                                   for k, v in cfg.dgp.items()}))
    s = cfg.schema
    return load_csv(cfg.data, Schema(s["treatment"], s["kind"], s["outcome"], s["covariates"]))


def _prepared(d: Dataset, cfg: RunConfig):
    if not cfg.standardize:
        return d, None
    z, rec = standardize(d)
    return z, rec.to_dict()


# ------------------------------------------------------------ subcommands

def _default_names(p):
    return [f"z{j + 1}" for j in range(p)]


def _binary_overlap(d):
    t = d.T
    return geometry.relaxed_overlap_check(d.covariates[t < 0], d.covariates[t > 0]).to_dict()


def _cmd_overlap(d, cfg):
    w, std = _prepared(d, cfg)
    kind = d.treatment.kind
    if kind == BINARY:
        res = _binary_overlap(w)
        res["groups"] = {"control": d.treatment.labels[0], "treated": d.treatment.labels[1]}
    elif kind == CATEGORICAL:
        lv = w.T.astype(int)
        pairs = []
        for a in range(d.treatment.n_levels):
            for b in range(a + 1, d.treatment.n_levels):
                chk = geometry.relaxed_overlap_check(w.covariates[lv == a], w.covariates[lv == b])
                pairs.append({"levels": [a, b], **chk.to_dict()})
        res = {"pairs": pairs,
               "verdict": "overlap" if all(p["verdict"] == "overlap" for p in pairs)
               else "separable-pair"}
    else:
        tube = svr.hard_tube_exists(w.covariates, w.T, cfg.epsilon)
        res = {"tube": tube.to_dict(),
               "verdict": "tube-exists" if tube.exists else "no-tube"}
    return [{"record": "overlap", "standardization": std, **res}]


def _cmd_fit_svm(d, cfg):
    w, std = _prepared(d, cfg)
    kind = d.treatment.kind
    if kind == BINARY:
        m = svm.fit_linear_svm(w, cfg.cost, cfg.kkt_tol)
        return [{"record": "svm_model", "model": m.to_dict(), "kkt": svm.kkt_report(m, w),
                 "margin_width": m.margin_width, "standardization": std}]
    if kind == CATEGORICAL:
        meta = svm.fit_meta_margin(w, cfg.cost, cfg.kkt_tol, margin_tol=cfg.margin_tol,
                                   n_jobs=cfg.jobs)
        out = []
        for (a, b) in sorted(meta.pair_models):
            m = meta.pair_models[(a, b)]
            idx = np.flatnonzero((w.T == a) | (w.T == b))
            sub = Dataset(w.covariates[idx],
                          _pair_treatment(w.T[idx], a, b), None, w.column_names)
            out.append({"record": "svm_model", "levels": [a, b], "model": m.to_dict(),
                        "kkt": svm.kkt_report(m, sub), "standardization": std})
        return out
    raise SchemaError("fit-svm needs a binary or categorical treatment")


def _pair_treatment(lv, a, b):
    from .dataset import TreatmentVector
    return TreatmentVector(BINARY, np.where(lv == b, 1.0, -1.0), labels=(a, b))


def _cmd_fit_svr(d, cfg):
    if d.treatment.kind != CONTINUOUS:
        raise SchemaError("fit-svr needs a continuous treatment")
    w, std = _prepared(d, cfg)
    m = svr.fit_linear_svr(w.covariates, w.T, cfg.epsilon, cfg.reg_c, tol=cfg.kkt_tol)
    return [{"record": "svr_model", "model": m.to_dict(), "standardization": std}]


def _margin(d, cfg):
    w, std = _prepared(d, cfg)
    kind = d.treatment.kind
    if kind == BINARY:
        m = svm.fit_linear_svm(w, cfg.cost, cfg.kkt_tol)
        rep = svm.margin_set(m, w, cfg.margin_tol)
        return rep, {"margin": rep.to_dict(), "model": m.to_dict()}, std
    if kind == CATEGORICAL:
        meta = svm.fit_meta_margin(w, cfg.cost, cfg.kkt_tol, margin_tol=cfg.margin_tol,
                                   n_jobs=cfg.jobs)
        return meta.to_report(), {"margin": meta.to_dict()}, std
    m = svr.fit_linear_svr(w.covariates, w.T, cfg.epsilon, cfg.reg_c, tol=cfg.kkt_tol)
    rep = svr.continuous_margin_set(m, cfg.margin_tol)
    return rep, {"margin": rep.to_dict(), "model": m.to_dict()}, std


def _cmd_margin(d, cfg):
    rep, body, std = _margin(d, cfg)
    return [{"record": "margin", "standardization": std, **body}], rep


def _cmd_estimate(d, cfg):
    d.require_outcome()
    kind = d.treatment.kind
    if cfg.method == "naive":
        if kind == BINARY:
            ests = [causal.naive_ace(d).to_dict()]
        elif kind == CONTINUOUS:
            ests = [causal.weighted_outcome_regression(
                d.outcome, d.T, np.ones(d.n), "unweighted least squares").to_dict()]
        else:
            ests = []
            for a in range(d.treatment.n_levels):
                for b in range(a + 1, d.treatment.n_levels):
                    idx = np.flatnonzero((d.T == a) | (d.T == b))
                    sub = Dataset(d.covariates[idx], _pair_treatment(d.T[idx], a, b),
                                  d.outcome[idx], d.column_names)
                    e = causal.naive_ace(sub).to_dict()
                    ests.append({"levels": [a, b], "reference": a, "estimate": e})
        return [{"record": "estimate", "method": "naive", "estimates": ests}]
    if cfg.method == "crump":
        if kind != BINARY:
            raise SchemaError("--method crump needs a binary treatment")
        w, std = _prepared(d, cfg)
        pm = causal.fit_propensity_logistic(w)
        keep = causal.crump_trim(pm, cfg.trim_c)
        ms = causal.optimal_pair_match(w, keep, cfg.metric, scores=pm.fitted)
        est = causal.matched_estimate(
            ms, d.outcome, causal.ACE_SUBPOP,
            f"crump trimming c={cfg.trim_c:g} + optimal 1:1 {cfg.metric} matching")
        return [{"record": "estimate", "method": "crump", "estimates": [est.to_dict()],
                 "propensity": pm.to_dict(), "kept": int(keep.size),
                 "matches": ms.to_dict(), "standardization": std}]
    pc = causal.PipelineConfig(C=cfg.cost, kkt_tol=cfg.kkt_tol, margin_tol=cfg.margin_tol,
                               metric=cfg.metric, epsilon=cfg.epsilon, reg_c=cfg.reg_c,
                               standardize=cfg.standardize)
    res = causal.margin_pipeline(d, pc).to_dict()
    return [{"record": "estimate", "method": "margin", **res}]


def _cmd_bootstrap(d, cfg):
    w, std = _prepared(d, cfg)
    dist = diagnostics.bootstrap_margin_size(w, cfg.boot_b, cfg.cost, cfg.seed, cfg.kkt_tol,
                                             cfg.margin_tol, n_jobs=cfg.jobs)
    return [{"record": "bootstrap", "distribution": dist.to_dict(),
             "standardization": std}], dist


def _cmd_tree(d, cfg):
    rep, _, _ = _margin(d, cfg)
    names = list(d.column_names) or _default_names(d.p)
    # split on the covariates as given so thresholds read in data units
    tree = diagnostics.fit_margin_tree(d, rep.mask(), cfg.max_depth, cfg.min_leaf)
    return [{"record": "tree", "margin_size": rep.size, "n": d.n, "features": names,
             "tree": tree.to_dict(), "text": tree.to_text(names)}], (tree, names)


# ------------------------------------------------------------------ main

def _emit(records, cfg: RunConfig, extra_text: Optional[str] = None) -> str:
    if extra_text is not None:
        return extra_text
    lines = []
    for rec in records:
        rec = dict(rec)
        rec["config"] = cfg.to_dict()
        rec["version"] = __version__
        lines.append(json.dumps(_plain(rec), sort_keys=True))
    return "\n".join(lines) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def _write(text: str, out: Optional[str], stdout) -> None:
    if out is None:
        stdout.write(text)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)


def run(argv=None, stdout=None, stderr=None) -> int:
    """Run the CLI with ``argv``; returns the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        old_err = sys.stderr
        sys.stderr = stderr
        try:
            args = parser.parse_args(argv)
        finally:
            sys.stderr = old_err
        if args.subcommand is None:
            parser.print_help(stderr)
            return 1
        _validate(args)
    except UsageError as exc:
        if not exc.printed:
            stderr.write(f"margincausal: error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    try:
        cfg = _config(args)
        d = _load(cfg)
        cmd = args.subcommand
        text = None
        if cmd == "simulate":
            # the dataset goes to --out (or stdout); with --out a summary record
            # is printed as well
            buf = io.StringIO()
            write_csv(d, buf)
            _write(buf.getvalue(), cfg.out, stdout)
            if cfg.out is not None:
                rec = {"record": "dataset", "path": cfg.out, "n": d.n, "p": d.p,
                       "kind": d.treatment.kind}
                stdout.write(_emit([rec], cfg))
            return 0
        if cmd == "overlap":
            records = _cmd_overlap(d, cfg)
        elif cmd == "fit-svm":
            records = _cmd_fit_svm(d, cfg)
        elif cmd == "fit-svr":
            records = _cmd_fit_svr(d, cfg)
        elif cmd == "margin":
            records, rep = _cmd_margin(d, cfg)
            if cfg.format == "csv":
                rows = ["index,score,in_margin"]
                mask = rep.mask()
                rows += [f"{i},{float(s)!r},{int(mask[i])}" for i, s in enumerate(rep.scores)]
                text = "\n".join(rows) + "\n"
        elif cmd == "estimate":
            records = _cmd_estimate(d, cfg)
        elif cmd == "bootstrap":
            records, dist = _cmd_bootstrap(d, cfg)
            if cfg.format == "csv":
                text = dist.histogram_csv()
        else:
            records, (tree, names) = _cmd_tree(d, cfg)
            if cfg.format == "text":
                text = tree.to_text(names) + "\n"
        _write(_emit(records, cfg, text), cfg.out, stdout)
        return 0
    except (MarginCausalError, OSError, ValueError) as exc:
        rec = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "column", "step", "residual"):
            val = getattr(exc, attr, None)
            if val is not None:
                rec[attr] = _plain(val)
        stderr.write(json.dumps(rec, sort_keys=True) + "\n")
        return 2


def main(argv=None) -> int:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
