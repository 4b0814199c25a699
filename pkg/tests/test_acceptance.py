"""Acceptance criteria, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line; ``conftest.py`` prints
them in the terminal summary.  Run with ``pytest tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest
from scipy.stats import norm, spearmanr

from irt_arena.calibration import CalibrationConfig, birnbaum_fit, calibrate_items
from irt_arena.cli import main
from irt_arena.data_model import AbilityEstimate, ItemParameters
from irt_arena.evaluation import (
    CLASSIC_METRICS,
    classic_metrics,
    evaluate_model,
    filter_negative_discrimination,
    filtered_metric_table,
)
from irt_arena.irt_core import information_array, prob_correct_array
from irt_arena.stats_tests import compare_metrics, studentized_range_sf
from irt_arena.synthesis import PopulationSpec, generate_population, random_items

from .fixtures import gb_filter_fixture
from .published_tables import CLASSIC, COUNTS, METRIC_COLUMNS, MODELS, TABLE_1, TABLE_2, score_matrix

RESULTS: list[str] = []


def verdict(n: int, title: str, checks: dict[str, bool], detail: str = "") -> None:
    failed = [k for k, ok in checks.items() if not ok]
    line = f"{'PASS' if not failed else 'FAIL'} [{n}] {title}"
    if detail:
        line += f" ({detail})"
    if failed:
        line += " -- failed: " + ", ".join(failed)
    RESULTS.append(line)
    print(line)
    assert not failed, line


def assert_monotone(trace, tol=1e-9):
    return all(b >= a - tol * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))


def test_1_metric_reproduction():
    checks = {}
    worst = 0.0
    for model in ("GB", "RF"):
        row = classic_metrics(*COUNTS[model])
        for metric, (ref, _) in zip(CLASSIC, TABLE_1[model]):
            dev = abs(row.get(metric) - ref)
            worst = max(worst, dev)
            checks[f"{model}.{metric}"] = dev <= 0.0005
    verdict(1, "classic metrics match GB and RF rows within 0.0005", checks, f"max dev {worst:.2e}")


def test_2_score_identity():
    checks = {}
    worst = 0.0
    for m in MODELS:
        true, _, total, _ = TABLE_2[m]
        dev = abs((true - total) - (1 - TABLE_1[m][0][0]))
        worst = max(worst, dev)
        checks[f"table {m}"] = dev <= 0.0015

    rng = np.random.default_rng(2024)
    random_worst = 0.0
    for trial in range(200):
        n = int(rng.integers(1, 120))
        ids = [f"x{k}" for k in range(n)]
        labels = {i: int(rng.integers(2)) for i in ids}
        preds = {i: int(rng.integers(2)) for i in ids}
        items = [
            ItemParameters(i, rng.uniform(-3, 3), rng.uniform(-4, 4), rng.uniform(0, 0.5)) for i in ids
        ]
        ab = AbilityEstimate("m", float(rng.uniform(-6, 6)))
        row = evaluate_model("m", labels, preds, items, ab)
        errors = sum(labels[i] != preds[i] for i in ids)
        random_worst = max(random_worst, abs(row.total_score - (row.true_score - errors / n)))
    checks["random inputs 1e-12"] = random_worst <= 1e-12
    verdict(
        2,
        "TrueScore - TotalScore = error rate",
        checks,
        f"table max dev {worst:.4f}, random max dev {random_worst:.1e}",
    )


def test_3_statistical_comparison():
    models, x = score_matrix()
    t0 = time.perf_counter()
    rep = compare_metrics(x, models, METRIC_COLUMNS)
    elapsed = time.perf_counter() - t0
    p = rep.p
    checks = {
        "friedman p < 1e-7": rep.friedman.p < 1e-7,
        "p(total,f1) = 0.4775 +- 0.05": abs(p("total_score", "f1") - 0.4775) <= 0.05,
        "p(total,recall) = 0.7516 +- 0.05": abs(p("total_score", "recall") - 0.7516) <= 0.05,
        "runtime < 1 s": elapsed < 1.0,
    }
    for m in ("accuracy", "precision", "auc", "specificity"):
        checks[f"p(total,{m}) < 0.05"] = p("total_score", m) < 0.05
    for m in CLASSIC_METRICS:
        checks[f"p(true,{m}) > 0.05"] = p("true_score", m) > 0.05
    verdict(
        3,
        "Friedman and Nemenyi on the published 10x8 table",
        checks,
        f"friedman p={rep.friedman.p:.3g}, p(total,f1)={p('total_score', 'f1'):.4f}, "
        f"p(total,recall)={p('total_score', 'recall'):.4f}, {elapsed * 1000:.0f} ms",
    )


def test_4_studentized_range():
    q = np.linspace(0, 8, 801)
    closed = 2 * norm.sf(q / np.sqrt(2))
    ours = np.array([studentized_range_sf(v, 2) for v in q])
    err = float(np.max(np.abs(ours - closed)))
    s3 = studentized_range_sf(3.314, 3)
    s8 = studentized_range_sf(4.286, 8)
    checks = {
        "k=2 closed form 1e-8": err <= 1e-8,
        "k=3 q=3.314": abs(s3 - 0.05) <= 0.002,
        "k=8 q=4.286": abs(s8 - 0.05) <= 0.002,
    }
    verdict(4, "studentized range survival function", checks, f"k=2 err {err:.1e}, sf3={s3:.5f}, sf8={s8:.5f}")


def test_5_parameter_recovery():
    config = CalibrationConfig(n_workers=1)
    t0 = time.perf_counter()
    items = random_items(40, seed=101)
    matrix, _ = generate_population(PopulationSpec(5000, items, seed=102))
    res = calibrate_items(matrix, config)
    elapsed = time.perf_counter() - t0
    est = {it.item_id: it for it in res.items}
    r_a = np.corrcoef([it.a for it in items], [est[it.item_id].a for it in items])[0, 1]
    r_b = np.corrcoef([it.b for it in items], [est[it.item_id].b for it in items])[0, 1]

    small, theta = generate_population(PopulationSpec(200, items, seed=103))
    _, abilities = birnbaum_fit(small, config)
    rho = spearmanr(theta, [ab.theta for ab in abilities]).statistic
    checks = {
        "r(b) >= 0.95": r_b >= 0.95,
        "r(a) >= 0.85": r_a >= 0.85,
        "spearman(theta) >= 0.9": rho >= 0.9,
        "5000x40 runtime < 60 s": elapsed < 60,
        "EM monotone": assert_monotone(res.log_likelihood_trace),
    }
    verdict(
        5,
        "item and ability recovery (single-threaded)",
        checks,
        f"r(a)={r_a:.3f}, r(b)={r_b:.3f}, rho={rho:.3f}, {elapsed:.1f} s",
    )


def test_6_property_suite():
    rng = np.random.default_rng(6)
    n = 10_000
    a = rng.uniform(-4, 4, n)
    b = rng.uniform(-5, 5, n)
    c = rng.uniform(0, 0.95, n)
    mid = float(np.max(np.abs(prob_correct_array(b, a, b, c) - (1 + c) / 2)))

    grid = np.linspace(-6, 6, 241)[:, None]
    p = prob_correct_array(grid, a[:1000], b[:1000], c[:1000])
    dp = np.diff(p, axis=0)
    sign = np.sign(a[:1000])
    monotone = bool(np.all(dp * sign >= -1e-15))

    theta = rng.uniform(-3, 3, 2000)
    fa, fb, fc = rng.uniform(0.2, 3, 2000) * rng.choice([-1, 1], 2000), rng.uniform(-3, 3, 2000), rng.uniform(0, 0.5, 2000)
    h = 1e-5
    deriv = (prob_correct_array(theta + h, fa, fb, fc) - prob_correct_array(theta - h, fa, fb, fc)) / (2 * h)
    pp = prob_correct_array(theta, fa, fb, fc)
    fd_info = deriv**2 / (pp * (1 - pp))
    info_err = float(np.max(np.abs(information_array(theta, fa, fb, fc) - fd_info)))

    traces_ok = True
    for seed in range(4):
        its = random_items(12, seed=60 + seed, negative_fraction=0.2)
        m, _ = generate_population(PopulationSpec(300, its, seed=70 + seed))
        r = calibrate_items(m, CalibrationConfig(max_em_iterations=80))
        traces_ok &= assert_monotone(r.log_likelihood_trace)
    checks = {
        "midpoint < 1e-12": mid < 1e-12,
        "monotone per sign of a": monotone,
        "information vs finite difference 1e-6": info_err <= 1e-6,
        "EM log-likelihood nondecreasing": traces_ok,
    }
    verdict(6, "3PL properties", checks, f"midpoint {mid:.1e}, info err {info_err:.1e}")


def test_7_filtering():
    fx = gb_filter_fixture()
    retained, removed = filter_negative_discrimination(fx.items)
    table = filtered_metric_table(fx.labels, fx.predictions, retained)
    gb, lda = table.row("GB"), table.row("LDA")
    checks = {
        "GB filtered recall = 1": gb.recall == 1.0,
        "perfect-on-retained model all 1.0": all(lda.get(m) == 1.0 for m in CLASSIC_METRICS),
        "removed 20 items": len(removed) == 20,
    }
    verdict(7, "negative-discrimination filtering", checks, f"GB recall {gb.recall}, acc {gb.accuracy:.3f}")


def test_8_report_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    monkeypatch.setenv("IRT_ARENA_THREADS", "2")
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "--seed", "11"]) == 0
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        code = main([
            "report", "--labels", str(data / "labels.csv"),
            "--predictions", str(data / "predictions"),
            "--models", str(data / "models"),
            "--seed", "11", "--out", str(out),
        ])
        assert code == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    checks = {"same file set": names == sorted(p.name for p in outs[1].iterdir())}
    for f in names:
        checks[f] = (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    checks["manifest lists outputs"] = set(manifest["outputs"]) == set(names) - {"manifest.json"}
    verdict(8, "report is byte-identical across runs", checks, f"{len(names)} files")
