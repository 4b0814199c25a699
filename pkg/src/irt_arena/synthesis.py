"""Synthetic respondent populations drawn from known 3PL parameters.

Stands in for a pool of trained classifiers: each respondent is a latent
ability, each item a test instance, and each cell an independent Bernoulli
draw with the 3PL success probability.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .data_model import ItemParameters, ResponseMatrix, ValidationError
from .irt_core import prob_correct_array

GENERATOR_ID = f"numpy.random.PCG64 (numpy {np.__version__})"


@dataclass(frozen=True)
class AbilityDistribution:
    """Ability law: ``normal(mean, sd)``, ``uniform(lo, hi)`` or an explicit list."""

    kind: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    lo: float = -3.0
    hi: float = 3.0
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "normal":
            if not self.sd > 0:
                raise ValidationError(f"normal ability sd must be > 0, got {self.sd}")
        elif self.kind == "uniform":
            if not self.lo < self.hi:
                raise ValidationError(f"uniform ability needs lo < hi, got ({self.lo}, {self.hi})")
        elif self.kind == "explicit":
            vals = tuple(float(v) for v in self.values)
            if not vals or not np.isfinite(vals).all():
                raise ValidationError("explicit ability list must be non-empty and finite")
            object.__setattr__(self, "values", vals)
        else:
            raise ValidationError(f"unknown ability distribution {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> AbilityDistribution:
        d = dict(d)
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(**d)

    def to_dict(self) -> dict:
        if self.kind == "normal":
            return {"kind": "normal", "mean": self.mean, "sd": self.sd}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": "explicit", "values": list(self.values)}

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.mean, self.sd, n)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, n)
        if len(self.values) != n:
            raise ValidationError(
                f"explicit ability list has {len(self.values)} values for {n} respondents"
            )
        return np.array(self.values, dtype=float)


@dataclass(frozen=True)
class PopulationSpec:
    n_respondents: int
    items: tuple[ItemParameters, ...]
    ability_distribution: AbilityDistribution = field(default_factory=AbilityDistribution)
    seed: int = 0
    id_prefix: str = "r"

    def __post_init__(self) -> None:
        if self.n_respondents < 1:
            raise ValidationError("n_respondents must be >= 1")
        if not self.items:
            raise ValidationError("population spec needs at least one item")
        object.__setattr__(self, "items", tuple(self.items))


def respondent_ids(n: int, prefix: str = "r") -> tuple[str, ...]:
    width = max(3, len(str(n - 1)))
    return tuple(f"{prefix}{k:0{width}d}" for k in range(n))


def item_ids(n: int, prefix: str = "i") -> tuple[str, ...]:
    return respondent_ids(n, prefix)


def generate_population(spec: PopulationSpec) -> tuple[ResponseMatrix, np.ndarray]:
    """Draw abilities and a response matrix for ``spec``.

    The same seed always yields the same matrix; abilities are drawn first,
    then one uniform per cell in row-major order.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    theta = spec.ability_distribution.sample(spec.n_respondents, rng)
    a = np.array([it.a for it in spec.items])
    b = np.array([it.b for it in spec.items])
    c = np.array([it.c for it in spec.items])
    p = prob_correct_array(theta[:, None], a[None, :], b[None, :], c[None, :])
    u = rng.random(p.shape)
    cells = (u < p).astype(np.int8)
    rids = respondent_ids(spec.n_respondents, spec.id_prefix)
    return ResponseMatrix(rids, tuple(it.item_id for it in spec.items), cells), theta


def random_items(
    n: int,
    seed: int,
    a_range: Sequence[float] = (0.8, 2.2),
    b_range: Sequence[float] = (-2.0, 2.0),
    c_range: Sequence[float] = (0.0, 0.25),
    negative_fraction: float = 0.0,
    prefix: str = "i",
) -> list[ItemParameters]:
    """Uniformly drawn item parameters; a ``negative_fraction`` of items get their ``a`` sign-flipped."""
    if not 0.0 <= negative_fraction <= 1.0:
        raise ValidationError("negative_fraction must lie in [0, 1]")
    for name, (lo, hi) in (("a", a_range), ("b", b_range), ("c", c_range)):
        if lo > hi:
            raise ValidationError(f"{name}_range must satisfy lo <= hi")
    if not (0.0 <= c_range[0] and c_range[1] < 1.0):
        raise ValidationError("c_range must lie inside [0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.uniform(*a_range, n)
    b = rng.uniform(*b_range, n)
    c = rng.uniform(*c_range, n)
    n_neg = int(round(negative_fraction * n))
    if n_neg:
        flip = rng.choice(n, size=n_neg, replace=False)
        a[flip] = -a[flip]
    ids = item_ids(n, prefix)
    return [ItemParameters(ids[k], a[k], b[k], c[k]) for k in range(n)]


@dataclass(frozen=True)
class ClassifierFixture:
    """A labelled test split plus calibration-pool and held-out model predictions."""

    labels: dict[str, int]
    population: dict[str, dict[str, int]]
    held_out: dict[str, dict[str, int]]
    items: tuple[ItemParameters, ...]
    population_theta: dict[str, float]
    held_out_theta: dict[str, float]


def predictions_from_responses(
    matrix: ResponseMatrix, labels: dict[str, int]
) -> dict[str, dict[str, int]]:
    """Invert correctness back into hard predictions: correct keeps the label, wrong flips it."""
    out = {}
    for j, rid in enumerate(matrix.respondent_ids):
        row = matrix.cells[j]
        out[rid] = {
            iid: labels[iid] if row[i] else 1 - labels[iid] for i, iid in enumerate(matrix.item_ids)
        }
    return out


def classifier_fixture(
    n_population: int = 200,
    n_items: int = 81,
    n_models: int = 10,
    n_positive: int = 36,
    seed: int = 0,
    ability: AbilityDistribution | None = None,
    held_out_ability: AbilityDistribution | None = None,
    a_range: Sequence[float] = (0.8, 2.2),
    b_range: Sequence[float] = (-2.0, 2.0),
    c_range: Sequence[float] = (0.0, 0.25),
    negative_fraction: float = 0.0,
    items: Sequence[ItemParameters] | None = None,
) -> ClassifierFixture:
    """Build a binary test split answered by a random model pool and held-out models.

    Sub-seeds for labels, items, population and held-out models are derived
    from ``seed`` with :class:`numpy.random.SeedSequence`.
    """
    if not 0 <= n_positive <= n_items:
        raise ValidationError("n_positive must lie in [0, n_items]")
    if n_models < 0:
        raise ValidationError("n_models must be >= 0")
    s_labels, s_items, s_pop, s_held = (
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(4)
    )
    if items is None:
        items = random_items(n_items, s_items, a_range, b_range, c_range, negative_fraction)
    items = tuple(items)
    ids = [it.item_id for it in items]
    rng = np.random.Generator(np.random.PCG64(s_labels))
    positive = set(rng.choice(len(ids), size=n_positive, replace=False).tolist())
    labels = {iid: int(k in positive) for k, iid in enumerate(ids)}

    pop_matrix, pop_theta = generate_population(
        PopulationSpec(n_population, items, ability or AbilityDistribution(), s_pop, "rand")
    )
    population = predictions_from_responses(pop_matrix, labels)
    held_out: dict[str, dict[str, int]] = {}
    held_theta: dict[str, float] = {}
    if n_models:
        held_matrix, theta_h = generate_population(
            PopulationSpec(
                n_models,
                items,
                held_out_ability or AbilityDistribution("normal", 1.0, 0.5),
                s_held,
                "model",
            )
        )
        held_out = predictions_from_responses(held_matrix, labels)
        held_theta = dict(zip(held_matrix.respondent_ids, theta_h.tolist()))
    return ClassifierFixture(
        labels,
        population,
        held_out,
        items,
        dict(zip(pop_matrix.respondent_ids, pop_theta.tolist())),
        held_theta,
    )
