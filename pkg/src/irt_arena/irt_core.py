"""Three-parameter logistic (3PL) item response functions.

P(theta) = c + (1 - c) / (1 + exp(-a (theta - b)))

Scalar functions take an :class:`ItemParameters`; the ``*_array`` variants
broadcast over numpy arrays and are what the estimation code uses.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .data_model import ItemParameters, ValidationError


@dataclass(frozen=True)
class IccSample:
    theta: float
    probability: float


@dataclass(frozen=True)
class ScorePair:
    true_score: float
    total_score: float
    normalized: bool = True


def _finite(x: float, what: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"{what} must be finite, got {x}")
    return x


def sigmoid(x: float) -> float:
    # branch on sign so exp never overflows
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def prob_correct(theta: float, item: ItemParameters) -> float:
    """Probability that a respondent of ability ``theta`` answers ``item`` correctly."""
    theta = _finite(theta, "theta")
    s = sigmoid(item.a * (theta - item.b))
    return item.c + (1.0 - item.c) * s


def prob_correct_array(theta, a, b, c) -> np.ndarray:
    """Vectorized 3PL probability; arguments broadcast against each other."""
    s = sigmoid_array(np.asarray(a) * (np.asarray(theta) - np.asarray(b)))
    c = np.asarray(c, dtype=float)
    return c + (1.0 - c) * s


def icc_curve(item: ItemParameters, theta_grid: Sequence[float]) -> list[IccSample]:
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("theta grid must not be empty")
    if not np.isfinite(grid).all():
        raise ValidationError("theta grid must be finite")
    if grid.size > 1 and not (np.diff(grid) > 0).all():
        raise ValidationError("theta grid must be strictly increasing")
    probs = prob_correct_array(grid, item.a, item.b, item.c)
    return [IccSample(float(t), float(p)) for t, p in zip(grid, probs)]


def information_array(theta, a, b, c) -> np.ndarray:
    """Vectorized 3PL Fisher information.

    Written in terms of s = sigmoid(a(theta - b)) so that it stays finite as
    P approaches c:  a^2 (1-c)(1-s) s^2 / (c + (1-c) s).
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    s = sigmoid_array(a * (np.asarray(theta) - np.asarray(b)))
    p = c + (1.0 - c) * s
    with np.errstate(invalid="ignore", divide="ignore"):
        info = a * a * (1.0 - c) * (1.0 - s) * s * s / p
    return np.where(p > 0, info, 0.0)


def item_information(theta: float, item: ItemParameters) -> float:
    """Fisher information ``item`` carries about ability at ``theta``.

    Equals a^2 (Q/P) ((P - c)/(1 - c))^2 with P from :func:`prob_correct`.
    """
    theta = _finite(theta, "theta")
    return float(information_array(theta, item.a, item.b, item.c))


def _params(items: Sequence[ItemParameters]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(items) == 0:
        raise ValidationError("item list must not be empty")
    a = np.array([it.a for it in items], dtype=float)
    b = np.array([it.b for it in items], dtype=float)
    c = np.array([it.c for it in items], dtype=float)
    return a, b, c


def true_score(theta: float, items: Sequence[ItemParameters], normalize: bool = True) -> float:
    """Sum (or mean, when ``normalize``) of correct-response probabilities."""
    theta = _finite(theta, "theta")
    p = prob_correct_array(theta, *_params(items))
    total = math.fsum(p.tolist())
    return total / len(items) if normalize else total


def _responses(responses, n: int) -> np.ndarray:
    u = np.asarray(responses)
    if u.shape != (n,):
        raise ValidationError(f"expected {n} responses, got shape {u.shape}")
    if not np.isin(u, (0, 1)).all():
        raise ValidationError("responses must be 0 or 1")
    return u.astype(bool)


def total_score(
    theta: float, items: Sequence[ItemParameters], responses, normalize: bool = True
) -> float:
    """True Score penalized by the error probability of every missed item.

    sum_{correct} P_i - sum_{wrong} (1 - P_i), divided by the item count
    when ``normalize``.
    """
    theta = _finite(theta, "theta")
    p = prob_correct_array(theta, *_params(items))
    u = _responses(responses, len(items))
    total = math.fsum(np.where(u, p, p - 1.0).tolist())
    return total / len(items) if normalize else total


def scores(
    theta: float, items: Sequence[ItemParameters], responses, normalize: bool = True
) -> ScorePair:
    return ScorePair(
        true_score(theta, items, normalize),
        total_score(theta, items, responses, normalize),
        normalize,
    )
