"""Two-stage Birnbaum estimation for the 3PL model.

Stage one calibrates item parameters by marginal maximum likelihood: the
Bock-Aitkin EM algorithm integrates ability out over a fixed quadrature grid
under a standard-normal prior.  Stage two holds the items fixed and finds each
respondent's bounded maximum-likelihood ability.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import log_expit, logsumexp

from .data_model import (
    AbilityEstimate,
    ItemParameters,
    NumericalError,
    ResponseMatrix,
    ValidationError,
)

log = logging.getLogger(__name__)

THREADS_ENV = "IRT_ARENA_THREADS"
DEGENERATE = "degenerate column"


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for item calibration and ability search.

    ``a_limit`` and ``b_limit`` box the discrimination and difficulty so that
    weakly identified items stay finite; items that end on the box are
    reported as not converged.  The EM itself is deterministic, ``seed`` is
    carried for run manifests.
    """

    quadrature_points: int = 61
    quadrature_range: tuple[float, float] = (-6.0, 6.0)
    max_em_iterations: int = 200
    em_tolerance: float = 1e-4
    c_upper: float = 0.999
    ability_bounds: tuple[float, float] = (-6.0, 6.0)
    a_limit: float = 20.0
    b_limit: float = 20.0
    init_a: float = 1.0
    init_c: float = 0.1
    ability_grid_step: float = 0.05
    seed: int = 0
    n_workers: int | None = None

    def __post_init__(self) -> None:
        if self.quadrature_points < 11:
            raise ValidationError("quadrature_points must be >= 11")
        if self.max_em_iterations < 1:
            raise ValidationError("max_em_iterations must be >= 1")
        if not self.em_tolerance > 0:
            raise ValidationError("em_tolerance must be > 0")
        if not 0.0 < self.c_upper < 1.0:
            raise ValidationError("c_upper must lie in (0, 1)")
        if not 0.0 <= self.init_c <= self.c_upper:
            raise ValidationError("init_c must lie in [0, c_upper]")
        if not (self.a_limit > 0 and self.b_limit > 0 and self.ability_grid_step > 0):
            raise ValidationError("a_limit, b_limit and ability_grid_step must be > 0")
        for name in ("quadrature_range", "ability_bounds"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError(f"{name} must be a finite (lo, hi) with lo < hi")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @property
    def workers(self) -> int:
        return self.n_workers if self.n_workers is not None else default_workers()

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationConfig:
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown calibration config keys: {unknown}")
        d = dict(d)
        for key in ("quadrature_range", "ability_bounds"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            name: list(v) if isinstance(v, tuple) else v
            for name, v in ((n, getattr(self, n)) for n in self.__dataclass_fields__)
        }


@dataclass(frozen=True)
class CalibrationResult:
    items: tuple[ItemParameters, ...]
    excluded_items: tuple[tuple[str, str], ...]
    log_likelihood: float
    iterations_used: int
    converged: bool = False
    log_likelihood_trace: tuple[float, ...] = field(default=(), repr=False)

    def item(self, item_id: str) -> ItemParameters:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise KeyError(item_id)


def _map(fn: Callable, xs: Iterable, workers: int) -> list:
    # order-preserving; every task is independent so results do not depend on workers
    xs = list(xs)
    if workers <= 1 or len(xs) < 2:
        return [fn(x) for x in xs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, xs))


def _log_probs(x: np.ndarray, c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return log P, log(1-P) and log sigmoid(x) for logit ``x`` and floor ``c``."""
    c = np.asarray(c, dtype=float)
    log_s = log_expit(x)
    with np.errstate(divide="ignore"):
        log_c = np.log(c)
    log_p = np.logaddexp(log_c, np.log1p(-c) + log_s)
    log_q = np.log1p(-c) + log_expit(-x)
    return log_p, log_q, log_s


def quadrature(config: CalibrationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Equally spaced nodes and normalized log standard-normal weights."""
    nodes = np.linspace(*config.quadrature_range, config.quadrature_points)
    logw = -0.5 * nodes**2
    return nodes, logw - logsumexp(logw)


def _e_step(u: np.ndarray, nodes, log_prior, a, b, c):
    x = a[None, :] * (nodes[:, None] - b[None, :])
    log_p, log_q, _ = _log_probs(x, c[None, :])
    ll = u @ log_p.T + (1.0 - u) @ log_q.T
    joint = ll + log_prior[None, :]
    marg = logsumexp(joint, axis=1)
    post = np.exp(joint - marg[:, None])
    n_q = post.sum(axis=0)
    r_iq = u.T @ post
    return float(marg.sum()), n_q, r_iq


def _item_objective(params, theta, r, w):
    """Negative expected complete-data log-likelihood of one item and its gradient."""
    a, b, c = params
    x = a * (theta - b)
    log_p, log_q, log_s = _log_probs(x, c)
    nll = -(r @ log_p + w @ log_q)
    s = np.exp(log_s)
    rho = np.exp(np.log1p(-c) + log_s - log_p)  # (1-c) s / P
    g = r * rho * (1.0 - s) - w * s
    d_a = g @ (theta - b)
    d_b = -a * g.sum()
    d_c = r @ np.exp(log_expit(-x) - log_p) - w.sum() / (1.0 - c)
    return nll, -np.array([d_a, d_b, d_c])


def _initial_params(u: np.ndarray, config: CalibrationConfig) -> np.ndarray:
    p = u.mean(axis=0)
    total = u.sum(axis=1)
    sign = np.ones(u.shape[1])
    for i in range(u.shape[1]):
        rest = total - u[:, i]
        if rest.std() > 0 and u[:, i].std() > 0:
            if np.corrcoef(u[:, i], rest)[0, 1] < 0:
                sign[i] = -1.0
    b0 = sign * np.log((1.0 - p) / p)
    b0 = np.clip(b0, -config.b_limit, config.b_limit)
    return np.column_stack([sign * config.init_a, b0, np.full(u.shape[1], config.init_c)])


def calibrate_items(matrix: ResponseMatrix, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Marginal maximum-likelihood 3PL calibration by EM on a fixed quadrature grid.

    Each M-step maximizes every item's expected log-likelihood independently
    with L-BFGS-B, starting from the current values; a step that would lower
    the objective is rejected, so the marginal log-likelihood never decreases.
    Discrimination is free in sign.  Columns answered all-correct or
    all-wrong have no finite maximum and are excluded.
    """
    config = config or CalibrationConfig()
    n_resp, _ = matrix.shape
    if n_resp < 2:
        raise ValidationError("calibration needs at least 2 respondents")
    col_sums = matrix.cells.sum(axis=0)
    usable = [(k, iid) for k, iid in enumerate(matrix.item_ids) if 0 < col_sums[k] < n_resp]
    excluded = tuple(
        (iid, DEGENERATE) for k, iid in enumerate(matrix.item_ids) if not 0 < col_sums[k] < n_resp
    )
    if len(usable) < 2:
        raise ValidationError(
            f"calibration needs at least 2 non-degenerate items, found {len(usable)}"
        )
    ids = [iid for _, iid in usable]
    u = matrix.cells[:, [k for k, _ in usable]].astype(float)
    nodes, log_prior = quadrature(config)
    params = _initial_params(u, config)
    bounds = [
        (-config.a_limit, config.a_limit),
        (-config.b_limit, config.b_limit),
        (0.0, config.c_upper),
    ]
    workers = config.workers

    trace: list[float] = []
    delta = np.full(len(ids), np.inf)
    converged = False
    iterations = 0
    for iterations in range(1, config.max_em_iterations + 1):
        ll, n_q, r_iq = _e_step(u, nodes, log_prior, *params.T)
        if not math.isfinite(ll):
            raise NumericalError(f"marginal log-likelihood became non-finite at iteration {iterations}")
        trace.append(ll)

        def m_step(i: int) -> np.ndarray:
            r = r_iq[i]
            w = n_q - r
            start = params[i]
            f0, _ = _item_objective(start, nodes, r, w)
            res = minimize(
                _item_objective,
                start,
                args=(nodes, r, w),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 200},
            )
            if not np.all(np.isfinite(res.x)) or not res.fun <= f0:
                return start
            return res.x

        new = np.array(_map(m_step, range(len(ids)), workers))
        delta = np.abs(new - params).max(axis=1)
        params = new
        log.debug("EM iteration %d: loglik=%.10g max change=%.3g", iterations, ll, delta.max())
        if delta.max() < config.em_tolerance:
            converged = True
            break

    final_ll, _, _ = _e_step(u, nodes, log_prior, *params.T)
    if not math.isfinite(final_ll):
        raise NumericalError("final marginal log-likelihood is non-finite")
    trace.append(final_ll)
    if not converged:
        log.warning(
            "EM stopped after %d iterations without reaching tolerance %g",
            iterations,
            config.em_tolerance,
        )

    items = []
    for i, iid in enumerate(ids):
        a, b, c = params[i]
        pinned = abs(a) >= config.a_limit * (1 - 1e-9) or abs(b) >= config.b_limit * (1 - 1e-9)
        items.append(
            ItemParameters(iid, a, b, c, converged=bool(delta[i] < config.em_tolerance and not pinned))
        )
    return CalibrationResult(
        tuple(items), excluded, final_ll, iterations, converged, tuple(trace)
    )


def log_likelihood_curve(thetas, responses, a, b, c) -> np.ndarray:
    """Bernoulli log-likelihood of one response vector at each ability in ``thetas``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    u = np.asarray(responses, dtype=float)
    x = np.asarray(a)[None, :] * (thetas[:, None] - np.asarray(b)[None, :])
    log_p, log_q, _ = _log_probs(x, np.asarray(c)[None, :])
    return log_p @ u + log_q @ (1.0 - u)


def estimate_ability(
    responses,
    items: Sequence[ItemParameters],
    bounds: tuple[float, float] = (-6.0, 6.0),
    respondent_id: str = "",
    grid_step: float = 0.05,
) -> AbilityEstimate:
    """Bounded maximum-likelihood ability for one response vector.

    A coarse grid locates the best basin (the 3PL likelihood can be
    multimodal), then Brent's golden-section/parabolic search refines it.
    """
    u = np.asarray(responses)
    if len(items) == 0 or u.size == 0:
        raise ValidationError("ability estimation needs at least one item")
    if u.shape != (len(items),):
        raise ValidationError(f"expected {len(items)} responses, got shape {u.shape}")
    if not np.isin(u, (0, 1)).all():
        raise ValidationError("responses must be 0 or 1")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ValidationError(f"invalid ability bounds {bounds}")
    a = np.array([it.a for it in items])
    b = np.array([it.b for it in items])
    c = np.array([it.c for it in items])

    def nll(t: float) -> float:
        return -float(log_likelihood_curve(t, u, a, b, c)[0])

    n_grid = max(3, int(math.ceil((hi - lo) / grid_step)) + 1)
    grid = np.linspace(lo, hi, n_grid)
    ll = log_likelihood_curve(grid, u, a, b, c)
    k = int(np.argmax(ll))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = minimize_scalar(nll, bounds=(left, right), method="bounded", options={"xatol": 1e-8})
    candidates = [float(res.x), float(grid[k]), lo, hi]
    values = [nll(t) for t in candidates]
    theta = candidates[int(np.argmin(values))]
    at_bound = False
    for edge in (lo, hi):
        if abs(theta - edge) < 1e-6:
            theta, at_bound = edge, True
    theta = min(max(theta, lo), hi)
    return AbilityEstimate(respondent_id, theta, at_bound, (lo, hi))


def estimate_abilities(
    matrix: ResponseMatrix,
    items: Sequence[ItemParameters],
    bounds: tuple[float, float] = (-6.0, 6.0),
    grid_step: float = 0.05,
    workers: int = 1,
) -> list[AbilityEstimate]:
    """Ability of every row of ``matrix`` against ``items`` (columns matched by id)."""
    sub = matrix.select_items([it.item_id for it in items])
    items = list(items)

    def one(j: int) -> AbilityEstimate:
        return estimate_ability(sub.cells[j], items, bounds, sub.respondent_ids[j], grid_step)

    return _map(one, range(sub.shape[0]), workers)


def birnbaum_fit(
    matrix: ResponseMatrix,
    config: CalibrationConfig | None = None,
    held_out: ResponseMatrix | None = None,
) -> tuple[CalibrationResult, list[AbilityEstimate]]:
    """Calibrate items on ``matrix``, then score its rows and any ``held_out`` rows.

    Held-out respondents never enter calibration; their abilities follow the
    population's in the returned list.
    """
    config = config or CalibrationConfig()
    result = calibrate_items(matrix, config)
    rows = matrix if held_out is None else matrix.stack(held_out)
    abilities = estimate_abilities(
        rows, result.items, config.ability_bounds, config.ability_grid_step, config.workers
    )
    return result, abilities
