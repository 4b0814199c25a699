"""Core domain types: response matrices, item parameters, abilities, confusion partitions."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented contract."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine produces unusable output."""


def _check_unique(ids: tuple[str, ...], axis: str) -> None:
    seen: set[str] = set()
    dupes = []
    for i in ids:
        if i in seen:
            dupes.append(i)
        seen.add(i)
    if dupes:
        raise ValidationError(f"duplicate {axis} ids: {sorted(set(dupes))}")


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Dichotomous correctness matrix, respondents x items.

    ``cells[j, i]`` is 1 when respondent ``j`` answered item ``i`` correctly.
    The array is stored read-only so the matrix can be shared freely.
    """

    respondent_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    cells: np.ndarray

    def __post_init__(self) -> None:
        rids = tuple(str(r) for r in self.respondent_ids)
        iids = tuple(str(i) for i in self.item_ids)
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ValidationError("response matrix must be two-dimensional")
        if cells.shape != (len(rids), len(iids)):
            raise ValidationError(
                f"cells shape {cells.shape} does not match "
                f"{len(rids)} respondents x {len(iids)} items"
            )
        if cells.size and not np.isin(cells, (0, 1)).all():
            raise ValidationError("response cells must be exactly 0 or 1")
        _check_unique(rids, "respondent")
        _check_unique(iids, "item")
        cells = cells.astype(np.int8, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "respondent_ids", rids)
        object.__setattr__(self, "item_ids", iids)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ResponseMatrix):
            return NotImplemented
        return (
            self.respondent_ids == other.respondent_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def row(self, respondent_id: str) -> np.ndarray:
        return self.cells[self.respondent_ids.index(respondent_id)]

    def select_items(self, item_ids: Iterable[str]) -> ResponseMatrix:
        """Return the sub-matrix restricted to ``item_ids``, in that order."""
        pos = {iid: k for k, iid in enumerate(self.item_ids)}
        ids = tuple(item_ids)
        missing = [i for i in ids if i not in pos]
        if missing:
            raise ValidationError(f"unknown item ids: {missing}")
        cols = [pos[i] for i in ids]
        return ResponseMatrix(self.respondent_ids, ids, self.cells[:, cols])

    def stack(self, other: ResponseMatrix) -> ResponseMatrix:
        """Append the rows of ``other``; both matrices must share item ids."""
        if other.item_ids != self.item_ids:
            other = other.select_items(self.item_ids)
        return ResponseMatrix(
            self.respondent_ids + other.respondent_ids,
            self.item_ids,
            np.vstack([self.cells, other.cells]),
        )


@dataclass(frozen=True)
class ItemParameters:
    """3PL parameters for one item: discrimination ``a``, difficulty ``b``, guessing ``c``."""

    item_id: str
    a: float
    b: float
    c: float
    converged: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "item_id", str(self.item_id))
        for name in ("a", "b", "c"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"item {self.item_id}: {name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not 0.0 <= self.c < 1.0:
            raise ValidationError(f"item {self.item_id}: c must lie in [0, 1), got {self.c}")
        object.__setattr__(self, "converged", bool(self.converged))


@dataclass(frozen=True)
class AbilityEstimate:
    respondent_id: str
    theta: float
    at_bound: bool = False
    bounds: tuple[float, float] = (-6.0, 6.0)

    def __post_init__(self) -> None:
        lo, hi = (float(v) for v in self.bounds)
        theta = float(self.theta)
        if not lo < hi:
            raise ValidationError(f"invalid ability bounds {self.bounds}")
        if not lo <= theta <= hi:
            raise ValidationError(f"theta {theta} outside bounds [{lo}, {hi}]")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "bounds", (lo, hi))
        object.__setattr__(self, "at_bound", bool(self.at_bound))


def _check_label(value, what: str) -> int:
    if isinstance(value, bool) or value not in (0, 1):
        raise ValidationError(f"{what} must be 0 or 1, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class BinaryOutcome:
    instance_id: str
    true_label: int
    predicted_label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "instance_id", str(self.instance_id))
        object.__setattr__(
            self, "true_label", _check_label(self.true_label, f"true label of {self.instance_id}")
        )
        object.__setattr__(
            self,
            "predicted_label",
            _check_label(self.predicted_label, f"prediction for {self.instance_id}"),
        )

    @property
    def correct(self) -> bool:
        return self.true_label == self.predicted_label


CELLS = ("TP", "FP", "FN", "TN")


@dataclass(frozen=True)
class ConfusionPartition:
    """Instance ids of one model split by confusion-matrix cell."""

    tp: frozenset[str] = field(default_factory=frozenset)
    fp: frozenset[str] = field(default_factory=frozenset)
    fn_: frozenset[str] = field(default_factory=frozenset)
    tn: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        sets = [frozenset(str(i) for i in s) for s in (self.tp, self.fp, self.fn_, self.tn)]
        for k, name in enumerate(("tp", "fp", "fn_", "tn")):
            object.__setattr__(self, name, sets[k])
        total = sum(len(s) for s in sets)
        if len(frozenset().union(*sets)) != total:
            raise ValidationError("confusion cells must be pairwise disjoint")

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[BinaryOutcome]) -> ConfusionPartition:
        cells: dict[tuple[int, int], set[str]] = {(1, 1): set(), (0, 1): set(), (1, 0): set(), (0, 0): set()}
        seen: set[str] = set()
        for o in outcomes:
            if o.instance_id in seen:
                raise ValidationError(f"duplicate instance id {o.instance_id!r}")
            seen.add(o.instance_id)
            cells[(o.true_label, o.predicted_label)].add(o.instance_id)
        return cls(
            tp=frozenset(cells[(1, 1)]),
            fp=frozenset(cells[(0, 1)]),
            fn_=frozenset(cells[(1, 0)]),
            tn=frozenset(cells[(0, 0)]),
        )

    def cell(self, name: str) -> frozenset[str]:
        return {"TP": self.tp, "FP": self.fp, "FN": self.fn_, "TN": self.tn}[name]

    @property
    def instance_ids(self) -> frozenset[str]:
        return self.tp | self.fp | self.fn_ | self.tn


def make_outcomes(
    labels: Mapping[str, int], predictions: Mapping[str, int], model_id: str = "<model>"
) -> list[BinaryOutcome]:
    """Pair ground truth with one model's predictions, sorted by instance id.

    Raises if the two id sets differ.
    """
    _check_coverage(model_id, set(labels), set(predictions))
    return [BinaryOutcome(i, labels[i], predictions[i]) for i in sorted(labels)]


def _check_coverage(model_id: str, expected: set[str], got: set[str]) -> None:
    missing = sorted(expected - got)
    extra = sorted(got - expected)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing instance ids {missing}")
        if extra:
            parts.append(f"unexpected instance ids {extra}")
        raise ValidationError(f"model {model_id!r}: " + "; ".join(parts))


def build_response_matrix(
    labels: Mapping[str, int], predictions: Mapping[str, Mapping[str, int]]
) -> ResponseMatrix:
    """Build the correctness matrix of several models against ground truth.

    Rows are models and columns are instances, both sorted by id.  A cell is 1
    when the model's prediction equals the true label.
    """
    truth = {str(k): _check_label(v, f"label of {k}") for k, v in labels.items()}
    item_ids = tuple(sorted(truth))
    model_ids = tuple(sorted(str(m) for m in predictions))
    by_model = {str(m): p for m, p in predictions.items()}
    cells = np.zeros((len(model_ids), len(item_ids)), dtype=np.int8)
    for j, m in enumerate(model_ids):
        preds = {str(k): v for k, v in by_model[m].items()}
        _check_coverage(m, set(item_ids), set(preds))
        for i, iid in enumerate(item_ids):
            p = _check_label(preds[iid], f"model {m!r} prediction for {iid}")
            cells[j, i] = p == truth[iid]
    return ResponseMatrix(model_ids, item_ids, cells)
