"""Measurement apparatus: representation similarity, correlations, accuracy
tables, relative gains, and the annotation cost model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .adaptation import DomainDataset, domain_accuracies
from .errors import DataError, ParameterError, ShapeError, UndefinedResultError
from .model import ModelBundle

CKA_DEGENERATE = 1e-12


def linear_cka(X: np.ndarray, Y: np.ndarray) -> float:
    """Linear centered kernel alignment between paired feature matrices.

    Rows of X and Y must correspond (row i in both comes from the same
    underlying example).  Columns are centered, then

        CKA = ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F)

    which lies in [0, 1] and is invariant to orthogonal right-multiplication
    and isotropic scaling of either argument.  If either self-term is
    degenerate (< 1e-12, e.g. a constant feature matrix) the result is 0.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeError(f"feature matrices must be 2-D, got {X.shape} and {Y.shape}")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"row counts disagree: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] < 2:
        raise ShapeError(f"need at least 2 rows, got {X.shape[0]}")
    Xc = X - X.mean(axis=0, keepdims=True)
    Yc = Y - Y.mean(axis=0, keepdims=True)
    cross = float(np.linalg.norm(Yc.T @ Xc, "fro") ** 2)
    x_self = float(np.linalg.norm(Xc.T @ Xc, "fro"))
    y_self = float(np.linalg.norm(Yc.T @ Yc, "fro"))
    if x_self < CKA_DEGENERATE or y_self < CKA_DEGENERATE:
        return 0.0
    return cross / (x_self * y_self)


def pearson(xs, ys) -> float:
    """Sample linear correlation coefficient.

    Raises UndefinedResultError when either input has zero variance.
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"lengths disagree: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ShapeError(f"need at least 2 points, got {x.shape[0]}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedResultError("correlation undefined: an input has zero variance")
    return float((xc * yc).sum()) / (sx * sy)


def _mean_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values all receive the mean of their rank range."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0], dtype=np.float64)
    sorted_v = v[order]
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation: pearson of mean-ranked values."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"lengths disagree: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ShapeError(f"need at least 2 points, got {x.shape[0]}")
    return pearson(_mean_ranks(x), _mean_ranks(y))


# ---------------------------------------------------------------------------
# accuracy tables


@dataclass
class EvalTable:
    """Accuracies in percent, keyed by (method, domain)."""

    source: str
    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, method: str, domain: str, accuracy: float) -> None:
        self.entries[(method, domain)] = float(accuracy)

    def get(self, method: str, domain: str) -> float:
        return self.entries[(method, domain)]

    def methods(self) -> list[str]:
        return sorted({m for m, _ in self.entries})

    def domains(self, method: str) -> list[str]:
        return sorted({d for m, d in self.entries if m == method})

    def targets(self, method: str) -> list[str]:
        return [d for d in self.domains(method) if d != self.source]

    def merge(self, other: "EvalTable") -> "EvalTable":
        if other.source != self.source:
            raise DataError(f"source mismatch: {self.source!r} vs {other.source!r}")
        self.entries.update(other.entries)
        return self


def zero_shot_eval(bundle: ModelBundle, datasets: DomainDataset,
                   method: str = "baseline") -> EvalTable:
    """Per-domain argmax accuracy of one trained model, tagged with `method`."""
    table = EvalTable(source=datasets.source)
    for dom, acc in domain_accuracies(bundle, datasets).items():
        table.add(method, dom, acc)
    return table


def gap_table(table: EvalTable, method: str | None = None) -> float:
    """Mean over targets of (source accuracy - target accuracy), signed."""
    methods = table.methods()
    if method is None:
        if len(methods) != 1:
            raise DataError(f"table holds methods {methods}; pick one")
        method = methods[0]
    src = table.get(method, table.source)
    targets = table.targets(method)
    if not targets:
        return 0.0
    return float(np.mean([src - table.get(method, t) for t in targets]))


def relative_gain(baseline_acc: float, method_acc: float) -> float:
    """(method - baseline) / baseline * 100."""
    if baseline_acc <= 0.0:
        raise UndefinedResultError(f"relative gain undefined for baseline "
                                   f"accuracy {baseline_acc}")
    return (method_acc - baseline_acc) / baseline_acc * 100.0


@dataclass
class CostParams:
    """Inputs of the annotation budget model; costs in cents."""

    c_s: float = 3.0
    n_labeled_source: int = 0
    c_t_over_s: float = 1.0
    k: int = 0
    num_targets: int = 0

    def __post_init__(self):
        for name in ("c_s", "n_labeled_source", "c_t_over_s", "k", "num_targets"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")


def annotation_cost(p: CostParams) -> float:
    """Total labeling cost: c_s*n + c_s*c_t_over_s*k*num_targets (cents)."""
    return p.c_s * p.n_labeled_source + p.c_s * p.c_t_over_s * p.k * p.num_targets


def cka_accuracy_correlation(
    features: dict[str, np.ndarray],
    table: EvalTable,
    source: str,
    method: str | None = None,
) -> tuple[float, float, dict[str, float]]:
    """Correlate per-target CKA-to-source against per-target accuracy.

    Returns (pearson, spearman, {target: cka}).  Needs at least 3 targets;
    raises UndefinedResultError if either series is constant.
    """
    methods = table.methods()
    if method is None:
        if len(methods) != 1:
            raise DataError(f"table holds methods {methods}; pick one")
        method = methods[0]
    targets = sorted(t for t in features if t != source)
    if len(targets) < 3:
        raise DataError(f"need at least 3 target domains, got {len(targets)}")
    ckas = {t: linear_cka(features[source], features[t]) for t in targets}
    cka_series = [ckas[t] for t in targets]
    acc_series = [table.get(method, t) for t in targets]
    return pearson(cka_series, acc_series), spearman(cka_series, acc_series), ckas


# ---------------------------------------------------------------------------
# CSV export

# accuracies and gains are printed to two decimals; downstream arithmetic
# (summary gains) reads these files back, so the rounding is the contract


def fmt_acc(value: float) -> str:
    return f"{value:.2f}"


def write_eval_csv(table: EvalTable, path, baseline_method: str = "baseline") -> None:
    """Long-format per-domain accuracies: domain,method,accuracy,relative_gain.

    The relative_gain column compares against `baseline_method` at the same
    domain, computed from the two-decimal accuracies exactly as printed; it is
    empty when no baseline entry exists or the gain is undefined.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["domain", "method", "accuracy", "relative_gain"])
        for method in table.methods():
            for domain in table.domains(method):
                acc = float(fmt_acc(table.get(method, domain)))
                gain = ""
                if (baseline_method, domain) in table.entries:
                    base = float(fmt_acc(table.get(baseline_method, domain)))
                    try:
                        gain = fmt_acc(relative_gain(base, acc))
                    except UndefinedResultError:
                        gain = ""
                writer.writerow([domain, method, fmt_acc(table.get(method, domain)), gain])


def read_eval_csv(path) -> tuple[EvalTable, dict[tuple[str, str], str]]:
    """Load a write_eval_csv file; returns the table (source unknown -> '')
    and the raw relative_gain strings."""
    entries: dict[tuple[str, str], float] = {}
    gains: dict[tuple[str, str], str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["domain", "method", "accuracy", "relative_gain"]:
            raise DataError(f"{path}: unexpected eval CSV header {header}")
        for row in reader:
            domain, method, acc, gain = row
            entries[(method, domain)] = float(acc)
            gains[(method, domain)] = gain
    table = EvalTable(source="")
    table.entries = entries
    return table, gains


def write_cka_csv(ckas: dict[str, float], accuracies: dict[str, float], path) -> None:
    """Per-target similarity report: domain,cka,accuracy."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["domain", "cka", "accuracy"])
        for domain in sorted(ckas):
            writer.writerow([domain, f"{ckas[domain]:.6f}", fmt_acc(accuracies[domain])])


def read_cka_csv(path) -> dict[str, tuple[float, float]]:
    out: dict[str, tuple[float, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["domain", "cka", "accuracy"]:
            raise DataError(f"{path}: unexpected CKA CSV header {header}")
        for domain, cka, acc in reader:
            out[domain] = (float(cka), float(acc))
    return out
