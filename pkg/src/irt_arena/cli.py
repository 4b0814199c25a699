"""Command-line interface: ``irt-arena <subcommand>``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.  Errors are
also printed to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    CalibrationConfig,
    CalibrationResult,
    calibrate_items,
    estimate_abilities,
)
from .cli_io import (
    RunManifest,
    class_balance,
    load_labels,
    load_prediction_set,
    read_items,
    read_response_matrix,
    read_score_table,
    write_abilities,
    write_excluded,
    write_items,
    write_json,
    write_labels,
    write_metric_table,
    write_predictions,
    write_response_matrix,
    write_scores,
)
from .data_model import (
    AbilityEstimate,
    ConfusionPartition,
    ItemParameters,
    NumericalError,
    ResponseMatrix,
    ValidationError,
    build_response_matrix,
    make_outcomes,
)
from .evaluation import (
    ALL_METRICS,
    CLASSIC_METRICS,
    DEFAULT_GRID,
    IccmcReport,
    MetricTable,
    filter_negative_discrimination,
    filtered_metric_table,
    iccmc_summaries,
    metric_table,
    parameter_distributions,
    theta_grid,
)
from .stats_tests import compare_metrics
from .synthesis import GENERATOR_ID, AbilityDistribution, classifier_fixture

log = logging.getLogger("irt_arena")

CONFIG_KEYS = ("calibration", "grid", "synth")


# ---------------------------------------------------------------------------
# option parsing helpers


def _floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"{flag}: expected {n} comma-separated numbers, got {text!r}") from exc
    if len(vals) != n:
        raise ValidationError(f"{flag}: expected {n} comma-separated numbers, got {text!r}")
    return vals


class Settings:
    """Run settings merged from ``--config`` and individual flags (flags win)."""

    def __init__(self, args: argparse.Namespace):
        raw: dict = {}
        if getattr(args, "config", None):
            from .cli_io import read_json

            raw = read_json(args.config)
            if not isinstance(raw, dict):
                raise ValidationError(f"{args.config}: config must be a JSON object")
            unknown = sorted(set(raw) - set(CONFIG_KEYS))
            if unknown:
                raise ValidationError(f"{args.config}: unknown config sections {unknown}")
        cal = dict(raw.get("calibration", {}))
        if getattr(args, "seed", None) is not None:
            cal["seed"] = args.seed
        if getattr(args, "theta_bounds", None):
            cal["ability_bounds"] = _floats(args.theta_bounds, 2, "--theta-bounds")
        self.calibration = CalibrationConfig.from_dict(cal)
        grid = raw.get("grid", list(DEFAULT_GRID))
        if getattr(args, "grid", None):
            grid = _floats(args.grid, 3, "--grid")
        if len(grid) != 3:
            raise ValidationError("grid must be [lo, hi, step]")
        self.grid_spec = tuple(float(g) for g in grid)
        self.grid = theta_grid(*self.grid_spec)
        self.synth = dict(raw.get("synth", {}))
        if getattr(args, "seed", None) is not None:
            self.synth["seed"] = args.seed

    def echo(self) -> dict:
        return {"calibration": self.calibration.to_dict(), "grid": list(self.grid_spec)}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _labels(args, manifest: RunManifest) -> dict[str, int]:
    labels, _codec = load_labels(args.labels, args.positive_label)
    manifest.add_input(args.labels)
    manifest.extra["class_balance"] = class_balance(labels)
    args._codec = _codec
    return labels


def _predictions(args, paths: Sequence[str], manifest: RunManifest, model_id=None) -> dict:
    preds, files = load_prediction_set(paths, args._codec, model_id)
    for f in files:
        manifest.add_input(f)
    return preds


def _items(args, manifest: RunManifest) -> list[ItemParameters]:
    items = read_items(args.items)
    manifest.add_input(args.items)
    return items


def _record(manifest: RunManifest, out: Path, path: Path) -> None:
    manifest.outputs.append(Path(path).relative_to(out).as_posix())


def _ability_warnings(abilities: Sequence[AbilityEstimate]) -> list[str]:
    return [
        f"ability of {ab.respondent_id} clamped at bound {ab.theta}" for ab in abilities if ab.at_bound
    ]


def _degenerate_warnings(table: MetricTable, label: str = "") -> list[str]:
    prefix = f"{label} " if label else ""
    return [
        f"{prefix}model {r.model_id}: zero denominator for {', '.join(r.degenerate)}; reported as 0"
        for r in table.rows
        if r.degenerate
    ]


def _calibration_warnings(result: CalibrationResult, config: CalibrationConfig) -> list[str]:
    out = [f"item {iid} excluded from calibration: {reason}" for iid, reason in result.excluded_items]
    if not result.converged:
        out.append(
            f"EM did not reach tolerance {config.em_tolerance} within {result.iterations_used} iterations"
        )
    out += [f"item {it.item_id} did not converge" for it in result.items if not it.converged]
    return out


def _calibration_summary(result: CalibrationResult, manifest: RunManifest) -> dict:
    return {
        "input_hash": manifest.input_hash(),
        "log_likelihood": result.log_likelihood,
        "iterations_used": result.iterations_used,
        "converged": result.converged,
        "n_items": len(result.items),
        "excluded_items": [list(e) for e in result.excluded_items],
        "log_likelihood_trace": list(result.log_likelihood_trace),
    }


def _abilities_for(
    predictions: Mapping[str, Mapping[str, int]],
    labels: Mapping[str, int],
    items: Sequence[ItemParameters],
    config: CalibrationConfig,
) -> dict[str, AbilityEstimate]:
    matrix = build_response_matrix(labels, predictions)
    known = set(matrix.item_ids)
    scored = [it for it in items if it.item_id in known]
    if not scored:
        raise ValidationError("no calibrated items match the labelled instances")
    abilities = estimate_abilities(
        matrix, scored, config.ability_bounds, config.ability_grid_step, config.workers
    )
    return {ab.respondent_id: ab for ab in abilities}


def _iccmc_payload(reports: Sequence[IccmcReport], grid: np.ndarray, manifest: RunManifest) -> dict:
    models = {}
    for rep in reports:
        cells = {}
        for name, s in rep.cells.items():
            cv = rep.curves[name]
            cells[name] = {
                "n": s.n,
                "mean_a": s.mean_a,
                "mean_b": s.mean_b,
                "mean_c": s.mean_c,
                "mean_information": s.mean_information,
                "total_score_contribution": s.total_score_contribution,
                "negative_discrimination_count": s.negative_discrimination_count,
                "empty": s.empty,
                "curves": [
                    {
                        "item_id": iid,
                        "discrimination": "negative" if neg else "positive",
                        "probabilities": cv.probabilities[k],
                    }
                    for k, (iid, neg) in enumerate(zip(cv.item_ids, cv.negative))
                ],
                "mean_curve": cv.mean_curve,
            }
        models[rep.model_id] = {
            "theta": rep.theta,
            "information_evaluated_at": "model ability",
            "total_score_raw": rep.total_score,
            "dropped_instances": list(rep.dropped),
            "cells": cells,
        }
    return {"input_hash": manifest.input_hash(), "grid": grid, "models": models}


def _iccmc_reports(
    labels, predictions, items, abilities, grid
) -> list[IccmcReport]:
    reports = []
    for model_id in sorted(predictions):
        part = ConfusionPartition.from_outcomes(make_outcomes(labels, predictions[model_id], model_id))
        reports.append(iccmc_summaries(part, items, abilities[model_id], grid, model_id))
    return reports


def _distributions_payload(items, labels, manifest: RunManifest) -> dict:
    d = parameter_distributions(items, {it.item_id: labels[it.item_id] for it in items})
    return {
        "input_hash": manifest.input_hash(),
        "majority_label": d.majority_label,
        "minority_label": d.minority_label,
        "means": d.means,
        "fraction_negative_a": d.fraction_negative_a,
        "histograms": {
            name: {"edges": h.edges, "majority": h.majority, "minority": h.minority}
            for name, h in d.histograms.items()
        },
        "scatter": [
            {"item_id": iid, "b": b, "a": a, "c": c, "label": lab} for iid, b, a, c, lab in d.scatter
        ],
    }


def _comparison_payload(table: MetricTable, metrics: Sequence[str], manifest: RunManifest) -> dict:
    x = np.array([[r.get(m) for m in metrics] for r in table.rows])
    report = compare_metrics(x, table.model_ids, metrics)
    return {"input_hash": manifest.input_hash(), **report.to_dict()}


# ---------------------------------------------------------------------------
# subcommands


def cmd_calibrate(args) -> None:
    settings = Settings(args)
    out = _out_dir(args)
    manifest = RunManifest("calibrate", config=settings.echo(), seed=settings.calibration.seed)
    if args.responses:
        matrix = read_response_matrix(args.responses)
        manifest.add_input(args.responses)
    else:
        if not (args.labels and args.predictions):
            raise ValidationError("calibrate needs --responses or both --labels and --predictions")
        labels = _labels(args, manifest)
        matrix = build_response_matrix(labels, _predictions(args, args.predictions, manifest))
    result = calibrate_items(matrix, settings.calibration)
    manifest.warn(_calibration_warnings(result, settings.calibration))
    _record(manifest, out, write_items(out / "items.csv", result.items))
    _record(manifest, out, write_excluded(out / "excluded_items.csv", result.excluded_items))
    _record(manifest, out, write_json(out / "calibration.json", _calibration_summary(result, manifest)))
    manifest.write(out)


def cmd_ability(args) -> None:
    settings = Settings(args)
    out = _out_dir(args)
    manifest = RunManifest("ability", config=settings.echo(), seed=settings.calibration.seed)
    labels = _labels(args, manifest)
    items = _items(args, manifest)
    preds = _predictions(args, args.predictions, manifest, args.model_id)
    abilities = _abilities_for(preds, labels, items, settings.calibration)
    manifest.warn(_ability_warnings(list(abilities.values())))
    _record(manifest, out, write_abilities(out / "abilities.csv", abilities.values()))
    manifest.write(out)


def cmd_score(args) -> None:
    settings = Settings(args)
    out = _out_dir(args)
    manifest = RunManifest("score", config=settings.echo(), seed=settings.calibration.seed)
    labels = _labels(args, manifest)
    items = _items(args, manifest)
    preds = _predictions(args, args.predictions, manifest, args.model_id)
    abilities = _abilities_for(preds, labels, items, settings.calibration)
    table = metric_table(labels, preds, items, abilities)
    manifest.warn(_ability_warnings(list(abilities.values())))
    _record(manifest, out, write_abilities(out / "abilities.csv", abilities.values()))
    _record(manifest, out, write_scores(out / "scores.csv", table))
    manifest.write(out)


def cmd_metrics(args) -> None:
    out = _out_dir(args)
    manifest = RunManifest("metrics")
    labels = _labels(args, manifest)
    preds = _predictions(args, args.predictions, manifest, args.model_id)
    table = metric_table(labels, preds)
    manifest.warn(_degenerate_warnings(table))
    _record(manifest, out, write_metric_table(out / "metrics.csv", table, CLASSIC_METRICS))
    manifest.write(out)


def cmd_iccmc(args) -> None:
    settings = Settings(args)
    out = _out_dir(args)
    manifest = RunManifest("iccmc", config=settings.echo(), seed=settings.calibration.seed)
    labels = _labels(args, manifest)
    items = _items(args, manifest)
    preds = _predictions(args, args.predictions, manifest, args.model_id)
    abilities = _abilities_for(preds, labels, items, settings.calibration)
    reports = _iccmc_reports(labels, preds, items, abilities, settings.grid)
    for rep in reports:
        manifest.warn(rep.warnings)
    manifest.warn(_ability_warnings(list(abilities.values())))
    _record(manifest, out, write_json(out / "iccmc.json", _iccmc_payload(reports, settings.grid, manifest)))
    manifest.write(out)


def _filter_outputs(labels, preds, items, out: Path, manifest: RunManifest) -> None:
    _, removed = filter_negative_discrimination(items)
    removed_set = set(removed)
    retained = sorted(i for i in labels if i not in removed_set)
    table = filtered_metric_table(labels, preds, retained)
    manifest.warn(_degenerate_warnings(table, "filtered"))
    counts = {m: {"n_instances": len(retained)} for m in table.model_ids}
    _record(
        manifest,
        out,
        write_metric_table(out / "filtered_metrics.csv", table, CLASSIC_METRICS, counts),
    )
    _record(
        manifest,
        out,
        write_json(
            out / "filter.json",
            {
                "input_hash": manifest.input_hash(),
                "rule": "remove items with a < 0",
                "removed": list(removed),
                "retained": retained,
                "fraction_removed": len(removed) / len(labels),
            },
        ),
    )


def cmd_filter(args) -> None:
    out = _out_dir(args)
    manifest = RunManifest("filter")
    labels = _labels(args, manifest)
    items = _items(args, manifest)
    preds = _predictions(args, args.predictions, manifest, args.model_id)
    _filter_outputs(labels, preds, items, out, manifest)
    manifest.write(out)


def cmd_compare(args) -> None:
    out = _out_dir(args)
    manifest = RunManifest("compare")
    models, metrics, x = read_score_table(args.table, args.metrics.split(",") if args.metrics else None)
    manifest.add_input(args.table)
    report = compare_metrics(x, models, metrics)
    payload = {"input_hash": manifest.input_hash(), **report.to_dict()}
    _record(manifest, out, write_json(out / "comparison.json", payload))
    manifest.write(out)


SYNTH_DEFAULTS = {
    "n_population": 200,
    "n_items": 81,
    "n_models": 10,
    "n_positive": 36,
    "seed": 0,
    "ability": {"kind": "normal", "mean": 0.0, "sd": 1.0},
    "held_out_ability": {"kind": "normal", "mean": 1.0, "sd": 0.5},
    "a_range": [0.8, 2.2],
    "b_range": [-2.0, 2.0],
    "c_range": [0.0, 0.25],
    "negative_fraction": 0.0,
}


def cmd_synth(args) -> None:
    settings = Settings(args)
    out = _out_dir(args)
    unknown = sorted(set(settings.synth) - set(SYNTH_DEFAULTS) - {"items"})
    if unknown:
        raise ValidationError(f"unknown synth config keys {unknown}")
    cfg = {**SYNTH_DEFAULTS, **settings.synth}
    explicit = cfg.pop("items", None)
    items = None
    if explicit is not None:
        items = [ItemParameters(d["item_id"], d["a"], d["b"], d["c"]) for d in explicit]
        cfg["n_items"] = len(items)
    fx = classifier_fixture(
        n_population=int(cfg["n_population"]),
        n_items=int(cfg["n_items"]),
        n_models=int(cfg["n_models"]),
        n_positive=int(cfg["n_positive"]),
        seed=int(cfg["seed"]),
        ability=AbilityDistribution.from_dict(cfg["ability"]),
        held_out_ability=AbilityDistribution.from_dict(cfg["held_out_ability"]),
        a_range=cfg["a_range"],
        b_range=cfg["b_range"],
        c_range=cfg["c_range"],
        negative_fraction=float(cfg["negative_fraction"]),
        items=items,
    )
    manifest = RunManifest("synth", config={"synth": cfg}, seed=int(cfg["seed"]))
    manifest.extra["generator"] = GENERATOR_ID
    manifest.extra["class_balance"] = class_balance(fx.labels)
    _record(manifest, out, write_labels(out / "labels.csv", fx.labels))
    pop_matrix = build_response_matrix(fx.labels, fx.population)
    _record(manifest, out, write_response_matrix(out / "responses.csv", pop_matrix))
    for sub, preds in (("predictions", fx.population), ("models", fx.held_out)):
        d = out / sub
        d.mkdir(exist_ok=True)
        for mid in sorted(preds):
            _record(manifest, out, write_predictions(d / f"{mid}.csv", preds[mid]))
    truth = {
        "generator": GENERATOR_ID,
        "seed": int(cfg["seed"]),
        "items": [{"item_id": it.item_id, "a": it.a, "b": it.b, "c": it.c} for it in fx.items],
        "population_theta": fx.population_theta,
        "held_out_theta": fx.held_out_theta,
    }
    _record(manifest, out, write_json(out / "truth.json", truth))
    manifest.write(out)


def cmd_report(args) -> None:
    settings = Settings(args)
    config = settings.calibration
    out = _out_dir(args)
    manifest = RunManifest("report", config=settings.echo(), seed=config.seed)
    labels = _labels(args, manifest)
    population = _predictions(args, args.predictions, manifest)
    evaluated = _predictions(args, args.models, manifest) if args.models else population
    manifest.extra["evaluated_models"] = "held-out" if args.models else "calibration population"

    matrix = build_response_matrix(labels, population)
    result = calibrate_items(matrix, config)
    manifest.warn(_calibration_warnings(result, config))
    items = list(result.items)
    _record(manifest, out, write_items(out / "items.csv", items))
    _record(manifest, out, write_excluded(out / "excluded_items.csv", result.excluded_items))
    _record(manifest, out, write_json(out / "calibration.json", _calibration_summary(result, manifest)))

    abilities = _abilities_for(evaluated, labels, items, config)
    manifest.warn(_ability_warnings(list(abilities.values())))
    _record(manifest, out, write_abilities(out / "abilities.csv", abilities.values()))

    table = metric_table(labels, evaluated, items, abilities)
    manifest.warn(_degenerate_warnings(table))
    _record(manifest, out, write_scores(out / "scores.csv", table))
    _record(manifest, out, write_metric_table(out / "metrics.csv", table, ALL_METRICS))

    reports = _iccmc_reports(labels, evaluated, items, abilities, settings.grid)
    for rep in reports:
        manifest.warn(rep.warnings)
    _record(manifest, out, write_json(out / "iccmc.json", _iccmc_payload(reports, settings.grid, manifest)))

    _filter_outputs(labels, evaluated, items, out, manifest)
    _record(
        manifest,
        out,
        write_json(out / "distributions.json", _distributions_payload(items, labels, manifest)),
    )
    if len(table.rows) >= 2:
        _record(
            manifest,
            out,
            write_json(out / "comparison.json", _comparison_payload(table, ALL_METRICS, manifest)),
        )
    else:
        manifest.warn("comparison skipped: Friedman/Nemenyi need at least 2 evaluated models")
    manifest.write(out)


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, *, labels=True, items=False, preds=True, settings=True) -> None:
    p.add_argument("--out", required=True, help="output directory")
    if labels:
        p.add_argument("--labels", required=True, help="CSV with header instance_id,label")
        p.add_argument("--positive-label", help="label symbol encoding the positive class")
    if preds:
        p.add_argument(
            "--predictions", nargs="+", required=True, metavar="PATH",
            help="prediction CSVs (instance_id,prediction) or directories of them",
        )
        p.add_argument("--model-id", help="model id for a single prediction file")
    if items:
        p.add_argument("--items", required=True, help="item parameter CSV from `calibrate`")
    if settings:
        p.add_argument("--config", help="JSON config with 'calibration', 'grid' and 'synth' sections")
        p.add_argument("--seed", type=int)
        p.add_argument("--theta-bounds", metavar="LO,HI")
        p.add_argument("--grid", metavar="LO,HI,STEP", help="ICC theta grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irt-arena", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate 3PL item parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--responses", help="response-matrix CSV (respondent_id,<items>...)")
    p.add_argument("--labels")
    p.add_argument("--positive-label")
    p.add_argument("--predictions", nargs="+", metavar="PATH")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta-bounds", metavar="LO,HI")
    p.add_argument("--grid", metavar="LO,HI,STEP")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("ability", help="estimate model abilities against calibrated items")
    _add_common(p, items=True)
    p.set_defaults(func=cmd_ability)

    p = sub.add_parser("score", help="abilities plus normalized True and Total Scores")
    _add_common(p, items=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("metrics", help="classic confusion-matrix metrics with ranks")
    _add_common(p, settings=False)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("iccmc", help="per-cell item characteristic curves")
    _add_common(p, items=True)
    p.set_defaults(func=cmd_iccmc)

    p = sub.add_parser("filter", help="metrics without negative-discrimination items")
    _add_common(p, items=True, settings=False)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("compare", help="Friedman and Nemenyi tests over a models x metrics table")
    p.add_argument("--out", required=True)
    p.add_argument("--table", required=True, help="CSV: model_id,<metric>,...")
    p.add_argument("--metrics", help="comma-separated subset of metric columns")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic labelled split with model predictions")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="full pipeline: calibrate, score, ICCMC, filter, compare")
    _add_common(p)
    p.add_argument(
        "--models", nargs="+", metavar="PATH",
        help="held-out model predictions to evaluate (default: the calibration population)",
    )
    p.set_defaults(func=cmd_report)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except ValidationError as exc:
        return _fail("validation", str(exc), 1)
    except NumericalError as exc:
        return _fail("numerical", str(exc), 2)
    except OSError as exc:
        return _fail("validation", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
