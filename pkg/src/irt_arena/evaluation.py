"""Classic confusion-matrix metrics, rankings, per-cell ICC summaries and filtering."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .data_model import (
    CELLS,
    AbilityEstimate,
    BinaryOutcome,
    ConfusionPartition,
    ItemParameters,
    ValidationError,
    make_outcomes,
)
from .irt_core import information_array, prob_correct_array, total_score, true_score

CLASSIC_METRICS = ("accuracy", "f1", "precision", "recall", "auc", "specificity")
IRT_METRICS = ("true_score", "total_score")
ALL_METRICS = CLASSIC_METRICS + IRT_METRICS

DEFAULT_GRID = (-4.0, 4.0, 0.05)


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(outcomes: Iterable[BinaryOutcome]) -> ConfusionCounts:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValidationError("confusion counts need at least one outcome")
    tp = sum(o.true_label == 1 and o.predicted_label == 1 for o in outcomes)
    fp = sum(o.true_label == 0 and o.predicted_label == 1 for o in outcomes)
    fn = sum(o.true_label == 1 and o.predicted_label == 0 for o in outcomes)
    tn = sum(o.true_label == 0 and o.predicted_label == 0 for o in outcomes)
    return ConfusionCounts(tp, fp, fn, tn)


@dataclass(frozen=True)
class MetricRow:
    """One model's classic metrics, optionally with its IRT scores.

    ``degenerate`` names the metrics whose denominator was zero; those are
    reported as 0.
    """

    model_id: str
    accuracy: float
    f1: float
    precision: float
    recall: float
    auc: float
    specificity: float
    true_score: float | None = None
    total_score: float | None = None
    degenerate: tuple[str, ...] = ()

    def get(self, metric: str) -> float:
        if metric not in ALL_METRICS:
            raise ValidationError(f"unknown metric {metric!r}; expected one of {ALL_METRICS}")
        value = getattr(self, metric)
        if value is None:
            raise ValidationError(f"metric {metric!r} not available for model {self.model_id!r}")
        return value


@dataclass(frozen=True)
class MetricTable:
    rows: tuple[MetricRow, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.model_id)))

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(r.model_id for r in self.rows)

    def column(self, metric: str) -> list[float]:
        return [r.get(metric) for r in self.rows]

    def row(self, model_id: str) -> MetricRow:
        for r in self.rows:
            if r.model_id == model_id:
                return r
        raise KeyError(model_id)

    def has(self, metric: str) -> bool:
        return all(getattr(r, metric, None) is not None for r in self.rows)


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def classic_metrics(tp: int, fp: int, fn: int, tn: int, model_id: str = "") -> MetricRow:
    """Accuracy, F1, precision, recall, specificity and hard-prediction AUC.

    With hard 0/1 predictions the ROC curve has a single interior point, so
    its area reduces to balanced accuracy, (recall + specificity) / 2.
    """
    counts = (tp, fp, fn, tn)
    if any(int(v) != v or v < 0 for v in counts):
        raise ValidationError(f"confusion counts must be non-negative integers, got {counts}")
    total = tp + fp + fn + tn
    if total == 0:
        raise ValidationError("confusion counts are all zero")
    flags: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", flags)
    recall = _ratio(tp, tp + fn, "recall", flags)
    specificity = _ratio(tn, tn + fp, "specificity", flags)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1")
    return MetricRow(
        model_id=model_id,
        accuracy=(tp + tn) / total,
        f1=f1,
        precision=precision,
        recall=recall,
        auc=(recall + specificity) / 2,
        specificity=specificity,
        degenerate=tuple(flags),
    )


def competition_ranks(values: Sequence[float], tol: float = 1e-12) -> list[int]:
    """"1224" ranking, higher is better; values within ``tol`` of each other tie."""
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranks = [0] * len(values)
    pos = 0
    while pos < len(order):
        head = values[order[pos]]
        stop = pos
        while stop < len(order) and head - values[order[stop]] <= tol:
            ranks[order[stop]] = pos + 1
            stop += 1
        pos = stop
    return ranks


def rank_models(table: MetricTable, metric: str, tol: float = 1e-12) -> dict[str, int]:
    if metric not in ALL_METRICS:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {ALL_METRICS}")
    return dict(zip(table.model_ids, competition_ranks(table.column(metric), tol)))


def evaluate_model(
    model_id: str,
    labels: Mapping[str, int],
    predictions: Mapping[str, int],
    items: Sequence[ItemParameters] | None = None,
    ability: AbilityEstimate | None = None,
) -> MetricRow:
    """Classic metrics of one model, plus normalized True/Total Scores when items and ability are given.

    IRT scores use only the instances that have item parameters.
    """
    outcomes = make_outcomes(labels, predictions, model_id)
    row = classic_metrics(*confusion_counts(outcomes), model_id=model_id)
    if items is None or ability is None:
        return row
    by_id = {o.instance_id: o for o in outcomes}
    scored = [it for it in items if it.item_id in by_id]
    if not scored:
        return row
    responses = [int(by_id[it.item_id].correct) for it in scored]
    return replace(
        row,
        true_score=true_score(ability.theta, scored),
        total_score=total_score(ability.theta, scored, responses),
    )


def metric_table(
    labels: Mapping[str, int],
    predictions: Mapping[str, Mapping[str, int]],
    items: Sequence[ItemParameters] | None = None,
    abilities: Mapping[str, AbilityEstimate] | None = None,
) -> MetricTable:
    rows = []
    for model_id in sorted(predictions):
        ability = abilities.get(model_id) if abilities is not None else None
        rows.append(evaluate_model(model_id, labels, predictions[model_id], items, ability))
    return MetricTable(tuple(rows))


# ---------------------------------------------------------------------------
# ICCMC: item characteristic curves split by confusion-matrix cell


def theta_grid(lo: float = -4.0, hi: float = 4.0, step: float = 0.05) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and step > 0):
        raise ValidationError(f"invalid grid ({lo}, {hi}, {step})")
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


@dataclass(frozen=True)
class CellSummary:
    cell: str
    n: int
    mean_a: float
    mean_b: float
    mean_c: float
    mean_information: float
    total_score_contribution: float
    negative_discrimination_count: int

    @property
    def empty(self) -> bool:
        return self.n == 0


@dataclass(frozen=True)
class CellCurves:
    """ICC samples of every item in one cell, plus the cell's mean curve."""

    item_ids: tuple[str, ...]
    negative: tuple[bool, ...]
    probabilities: np.ndarray  # items x grid
    mean_curve: np.ndarray | None


@dataclass(frozen=True)
class IccmcReport:
    model_id: str
    theta: float
    grid: np.ndarray
    cells: dict[str, CellSummary]
    curves: dict[str, CellCurves]
    dropped: tuple[str, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def total_score(self) -> float:
        return math.fsum(s.total_score_contribution for s in self.cells.values())


def iccmc_summaries(
    partition: ConfusionPartition,
    items: Sequence[ItemParameters],
    ability: AbilityEstimate,
    grid: np.ndarray | None = None,
    model_id: str | None = None,
) -> IccmcReport:
    """Summarize a model's item curves per confusion cell.

    TP and TN instances were answered correctly and contribute sum P to the
    Total Score; FP and FN instances contribute -sum (1 - P).  Information
    is Fisher information at the model's own ability.  Instances without
    item parameters are dropped with a warning; empty cells get n = 0 and
    NaN means.
    """
    grid = theta_grid(*DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    by_id = {it.item_id: it for it in items}
    dropped = tuple(sorted(i for i in partition.instance_ids if i not in by_id))
    theta = ability.theta
    cells: dict[str, CellSummary] = {}
    curves: dict[str, CellCurves] = {}
    for name in CELLS:
        members = [by_id[i] for i in sorted(partition.cell(name)) if i in by_id]
        correct = name in ("TP", "TN")
        if not members:
            nan = float("nan")
            cells[name] = CellSummary(name, 0, nan, nan, nan, nan, 0.0, 0)
            curves[name] = CellCurves((), (), np.empty((0, grid.size)), None)
            continue
        a = np.array([it.a for it in members])
        b = np.array([it.b for it in members])
        c = np.array([it.c for it in members])
        p = prob_correct_array(theta, a, b, c)
        contribution = math.fsum(p.tolist()) if correct else -math.fsum((1.0 - p).tolist())
        probs = prob_correct_array(grid[None, :], a[:, None], b[:, None], c[:, None])
        cells[name] = CellSummary(
            cell=name,
            n=len(members),
            mean_a=float(a.mean()),
            mean_b=float(b.mean()),
            mean_c=float(c.mean()),
            mean_information=float(information_array(theta, a, b, c).mean()),
            total_score_contribution=contribution,
            negative_discrimination_count=int((a < 0).sum()),
        )
        curves[name] = CellCurves(
            tuple(it.item_id for it in members),
            tuple(bool(v) for v in a < 0),
            probs,
            probs.mean(axis=0),
        )
    mid = model_id if model_id is not None else ability.respondent_id
    warnings = tuple(
        f"iccmc {mid}: instance {i} has no item parameters and was dropped" for i in dropped
    )
    return IccmcReport(mid, theta, grid, cells, curves, dropped, warnings)


# ---------------------------------------------------------------------------
# negative-discrimination filtering


def filter_negative_discrimination(
    items: Iterable[ItemParameters],
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split item ids into (retained, removed); an item is removed iff a < 0."""
    items = list(items)
    removed = tuple(sorted(it.item_id for it in items if it.a < 0))
    retained = tuple(sorted(it.item_id for it in items if not it.a < 0))
    return retained, removed


def filtered_metric_table(
    labels: Mapping[str, int],
    predictions: Mapping[str, Mapping[str, int]],
    retained: Iterable[str],
) -> MetricTable:
    """Classic metrics recomputed on the retained instances only."""
    keep = set(retained)
    sub_labels = {i: v for i, v in labels.items() if i in keep}
    if not sub_labels:
        raise ValidationError("no instances left after filtering")
    sub_preds = {m: {i: p[i] for i in sub_labels if i in p} for m, p in predictions.items()}
    return metric_table(sub_labels, sub_preds)


# ---------------------------------------------------------------------------
# parameter histograms and scatter


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    majority: tuple[int, ...]
    minority: tuple[int, ...]


@dataclass(frozen=True)
class ParameterDistributions:
    majority_label: int
    minority_label: int
    histograms: dict[str, Histogram]
    means: dict[str, float]
    fraction_negative_a: float
    scatter: tuple[tuple[str, float, float, float, int], ...]  # (item_id, b, a, c, label)


def parameter_distributions(
    items: Sequence[ItemParameters], class_labels: Mapping[str, int], bins: int = 5
) -> ParameterDistributions:
    """Per-parameter histograms split by class, parameter means and a (b, a, c) scatter.

    Bin edges span the observed range of each parameter and are shared by
    both classes.  The majority class is the more frequent label (0 on a tie).
    """
    if not items:
        raise ValidationError("parameter distributions need at least one item")
    missing = [it.item_id for it in items if it.item_id not in class_labels]
    if missing:
        raise ValidationError(f"items without class labels: {missing}")
    labels = np.array([class_labels[it.item_id] for it in items])
    n_pos = int((labels == 1).sum())
    majority = 1 if n_pos > len(labels) - n_pos else 0
    minority = 1 - majority
    hists = {}
    means = {}
    for name in ("a", "b", "c"):
        vals = np.array([getattr(it, name) for it in items])
        edges = np.histogram_bin_edges(vals, bins=bins)
        hists[name] = Histogram(
            tuple(float(e) for e in edges),
            tuple(int(v) for v in np.histogram(vals[labels == majority], edges)[0]),
            tuple(int(v) for v in np.histogram(vals[labels == minority], edges)[0]),
        )
        means[name] = math.fsum(vals.tolist()) / len(vals)
    a = np.array([it.a for it in items])
    scatter = tuple(
        (it.item_id, it.b, it.a, it.c, int(class_labels[it.item_id])) for it in items
    )
    return ParameterDistributions(
        majority, minority, hists, means, float((a < 0).mean()), scatter
    )
