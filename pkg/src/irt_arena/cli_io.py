"""File formats: label/prediction CSV ingestion, artifact writers and run manifests.

Floats are written with ``repr``, the shortest string that round-trips to the
same double, so every artifact reloads bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import AbilityEstimate, ItemParameters, ResponseMatrix, ValidationError
from .evaluation import MetricTable, competition_ranks

TOOL = "irt-arena"


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _parse_float(s: str, where: str) -> float:
    try:
        return float(s)
    except ValueError as exc:
        raise ValidationError(f"{where}: expected a number, got {s!r}") from exc


def _parse_bool(s: str, where: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1"):
        return True
    if low in ("false", "0"):
        return False
    raise ValidationError(f"{where}: expected true/false, got {s!r}")


def _read_rows(path: Path, header: Sequence[str] | None = None) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a UTF-8 CSV, returning its header and (line number, fields) pairs."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: file not found") from exc
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{path}: not valid UTF-8") from exc
    reader = csv.reader(io.StringIO(text))
    rows = [(reader.line_num, [f.strip() for f in r]) for r in reader if r]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    _, head = rows[0]
    head[0] = head[0].lstrip("﻿")
    if header is not None and head != list(header):
        raise ValidationError(f"{path}: expected header {','.join(header)!r}, got {','.join(head)!r}")
    body = rows[1:]
    for line, fields in body:
        if len(fields) != len(head):
            raise ValidationError(
                f"{path}:{line}: expected {len(head)} fields, got {len(fields)}"
            )
        if not fields[0]:
            raise ValidationError(f"{path}:{line}: empty id")
    return head, body


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# labels and predictions


@dataclass(frozen=True)
class LabelCodec:
    """Maps label symbols to 1 (positive) / 0 (negative).

    Without a positive label the symbols must already be ``0``/``1``.
    """

    positive: str | None = None
    symbols: tuple[str, ...] = ("0", "1")

    def encode(self, symbol: str, where: str) -> int:
        if self.positive is None:
            if symbol in ("0", "1"):
                return int(symbol)
        elif symbol == self.positive:
            return 1
        elif symbol in self.symbols:
            return 0
        raise ValidationError(
            f"{where}: unknown label symbol {symbol!r}; observed symbols {list(self.symbols)}"
        )


def load_labels(path, positive_label: str | None = None) -> tuple[dict[str, int], LabelCodec]:
    """Read ``instance_id,label`` rows into {instance_id: 0/1}."""
    path = Path(path)
    _, rows = _read_rows(path, ("instance_id", "label"))
    observed = sorted({f[1] for _, f in rows})
    if positive_label is None:
        bad = [s for s in observed if s not in ("0", "1")]
        if bad:
            raise ValidationError(
                f"{path}: unknown label symbols {bad}; observed symbols {observed}; "
                "pass --positive-label to map a vocabulary"
            )
        codec = LabelCodec(None, ("0", "1"))
    else:
        if positive_label not in observed and len(observed) >= 2:
            raise ValidationError(
                f"{path}: positive label {positive_label!r} not among observed symbols {observed}"
            )
        if len(observed) > 2:
            raise ValidationError(f"{path}: more than two label symbols observed: {observed}")
        codec = LabelCodec(positive_label, tuple(observed))
    labels: dict[str, int] = {}
    first_line: dict[str, int] = {}
    for line, (iid, sym) in rows:
        if iid in labels:
            raise ValidationError(
                f"{path}: duplicate instance id {iid!r} at lines {first_line[iid]} and {line}"
            )
        labels[iid] = codec.encode(sym, f"{path}:{line}")
        first_line[iid] = line
    if not labels:
        raise ValidationError(f"{path}: no label rows")
    return labels, codec


def load_predictions(path, codec: LabelCodec, model_id: str | None = None) -> tuple[str, dict[str, int]]:
    """Read ``instance_id,prediction`` rows; the model id defaults to the file stem."""
    path = Path(path)
    _, rows = _read_rows(path, ("instance_id", "prediction"))
    preds: dict[str, int] = {}
    first_line: dict[str, int] = {}
    for line, (iid, sym) in rows:
        if iid in preds:
            raise ValidationError(
                f"{path}: duplicate instance id {iid!r} at lines {first_line[iid]} and {line}"
            )
        preds[iid] = codec.encode(sym, f"{path}:{line}")
        first_line[iid] = line
    return model_id or path.stem, preds


def prediction_files(paths: Sequence[str | Path]) -> list[Path]:
    """Expand directories to their ``*.csv`` files (sorted); keep files as given."""
    out: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            out.append(p)
        else:
            raise ValidationError(f"{p}: no such file or directory")
    if not out:
        raise ValidationError(f"no prediction files found in {[str(p) for p in paths]}")
    return out


def load_prediction_set(
    paths: Sequence[str | Path], codec: LabelCodec, model_id: str | None = None
) -> tuple[dict[str, dict[str, int]], list[Path]]:
    files = prediction_files(paths)
    if model_id is not None and len(files) != 1:
        raise ValidationError("--model-id applies to a single prediction file only")
    out: dict[str, dict[str, int]] = {}
    for f in files:
        mid, preds = load_predictions(f, codec, model_id)
        if mid in out:
            raise ValidationError(f"duplicate model id {mid!r} ({f})")
        out[mid] = preds
    return out, files


def class_balance(labels: Mapping[str, int]) -> dict:
    n = len(labels)
    pos = sum(labels.values())
    return {
        "n": n,
        "positive": pos,
        "negative": n - pos,
        "positive_pct": round(100.0 * pos / n, 1),
        "negative_pct": round(100.0 * (n - pos) / n, 1),
    }


def write_labels(path, labels: Mapping[str, int]) -> Path:
    return _write_csv(path, ("instance_id", "label"), ((i, labels[i]) for i in sorted(labels)))


def write_predictions(path, predictions: Mapping[str, int]) -> Path:
    return _write_csv(
        path, ("instance_id", "prediction"), ((i, predictions[i]) for i in sorted(predictions))
    )


# ---------------------------------------------------------------------------
# response matrices


def write_response_matrix(path, matrix: ResponseMatrix) -> Path:
    return _write_csv(
        path,
        ("respondent_id",) + matrix.item_ids,
        ([rid] + [int(v) for v in matrix.cells[j]] for j, rid in enumerate(matrix.respondent_ids)),
    )


def read_response_matrix(path) -> ResponseMatrix:
    path = Path(path)
    head, rows = _read_rows(path)
    if head[0] != "respondent_id":
        raise ValidationError(f"{path}: first column must be respondent_id")
    cells = []
    for line, fields in rows:
        try:
            cells.append([int(v) for v in fields[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}:{line}: cells must be 0 or 1") from exc
    arr = np.array(cells, dtype=int).reshape(len(rows), len(head) - 1)
    return ResponseMatrix([f[0] for _, f in rows], head[1:], arr)


# ---------------------------------------------------------------------------
# item parameters and abilities

ITEM_HEADER = ("item_id", "a", "b", "c", "converged")


def write_items(path, items: Iterable[ItemParameters]) -> Path:
    return _write_csv(path, ITEM_HEADER, ((it.item_id, it.a, it.b, it.c, it.converged) for it in items))


def read_items(path) -> list[ItemParameters]:
    path = Path(path)
    _, rows = _read_rows(path, ITEM_HEADER)
    items = []
    for line, (iid, a, b, c, conv) in rows:
        where = f"{path}:{line}"
        try:
            items.append(
                ItemParameters(
                    iid,
                    _parse_float(a, where),
                    _parse_float(b, where),
                    _parse_float(c, where),
                    _parse_bool(conv, where),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    ids = [it.item_id for it in items]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate item ids")
    return items


def write_excluded(path, excluded: Iterable[tuple[str, str]]) -> Path:
    return _write_csv(path, ("item_id", "reason"), excluded)


def write_abilities(path, abilities: Iterable[AbilityEstimate]) -> Path:
    return _write_csv(
        path,
        ("model_id", "theta", "at_bound"),
        ((ab.respondent_id, ab.theta, ab.at_bound) for ab in abilities),
    )


def read_abilities(path, bounds=(-6.0, 6.0)) -> list[AbilityEstimate]:
    path = Path(path)
    _, rows = _read_rows(path, ("model_id", "theta", "at_bound"))
    return [
        AbilityEstimate(m, _parse_float(t, f"{path}:{line}"), _parse_bool(b, f"{path}:{line}"), bounds)
        for line, (m, t, b) in rows
    ]


# ---------------------------------------------------------------------------
# metric and score tables


def write_scores(path, table: MetricTable) -> Path:
    true = competition_ranks(table.column("true_score"))
    total = competition_ranks(table.column("total_score"))
    return _write_csv(
        path,
        ("model_id", "true_score", "total_score", "true_rank", "total_rank"),
        (
            (r.model_id, r.true_score, r.total_score, true[k], total[k])
            for k, r in enumerate(table.rows)
        ),
    )


def write_metric_table(path, table: MetricTable, metrics: Sequence[str], extra: Mapping[str, Mapping[str, object]] | None = None) -> Path:
    """One row per model: each metric followed by its competition rank, then degeneracy flags."""
    ranks = {m: competition_ranks(table.column(m)) for m in metrics}
    extra = extra or {}
    extra_cols = sorted({k for v in extra.values() for k in v})
    header = ["model_id"]
    for m in metrics:
        header += [m, f"{m}_rank"]
    header += extra_cols + ["degenerate"]
    rows = []
    for k, r in enumerate(table.rows):
        row: list = [r.model_id]
        for m in metrics:
            row += [r.get(m), ranks[m][k]]
        row += [extra.get(r.model_id, {}).get(c) for c in extra_cols]
        row.append(";".join(r.degenerate))
        rows.append(row)
    return _write_csv(path, header, rows)


def read_score_table(path, metrics: Sequence[str] | None = None) -> tuple[list[str], list[str], np.ndarray]:
    """Read a ``model_id,<metric>,...`` table; ``*_rank`` and ``degenerate`` columns are ignored."""
    path = Path(path)
    head, rows = _read_rows(path)
    if head[0] != "model_id":
        raise ValidationError(f"{path}: first column must be model_id")
    available = [h for h in head[1:] if not h.endswith("_rank") and h != "degenerate"]
    cols = list(metrics) if metrics else available
    missing = [m for m in cols if m not in available]
    if missing:
        raise ValidationError(f"{path}: missing metric columns {missing}")
    idx = [head.index(m) for m in cols]
    x = np.array(
        [[_parse_float(f[i], f"{path}:{line}") for i in idx] for line, f in rows], dtype=float
    )
    return [f[0] for _, f in rows], cols, x


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    """Provenance record written next to every set of artifacts."""

    command: str
    inputs: list[Path] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    warnings: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def warn(self, messages: Iterable[str] | str) -> None:
        if isinstance(messages, str):
            messages = [messages]
        for m in messages:
            if m not in self.warnings:
                self.warnings.append(m)

    def add_input(self, path) -> None:
        p = Path(path)
        if p not in self.inputs:
            self.inputs.append(p)

    def input_records(self) -> list[dict]:
        return [{"path": str(p), "sha256": sha256_file(p)} for p in self.inputs]

    def input_hash(self) -> str:
        h = hashlib.sha256()
        for rec in self.input_records():
            h.update(rec["sha256"].encode())
        h.update(dumps({"config": self.config, "seed": self.seed}).encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        started = None
        if epoch is not None:
            try:
                started = datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
            except ValueError as exc:
                raise ValidationError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from exc
        return {
            "tool": TOOL,
            "version": __version__,
            "command": self.command,
            "inputs": self.input_records(),
            "input_hash": self.input_hash(),
            "config": self.config,
            "seed": self.seed,
            "timestamps": {"started": started, "source": "SOURCE_DATE_EPOCH"},
            **self.extra,
            "warnings": list(self.warnings),
            "outputs": sorted(self.outputs),
        }

    def write(self, out_dir: Path) -> Path:
        return write_json(Path(out_dir) / "manifest.json", self.to_dict())
