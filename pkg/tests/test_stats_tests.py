import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from irt_arena.data_model import ValidationError
from irt_arena.stats_tests import (
    chi2_sf,
    compare_metrics,
    confidence,
    friedman_test,
    gamma_q,
    nemenyi_test,
    rank_within_blocks,
    studentized_range_sf,
)

from .published_tables import METRIC_COLUMNS, score_matrix


class TestIncompleteGamma:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 3.5, 7.0, 20.0, 150.0])
    @pytest.mark.parametrize("x", [1e-4, 0.3, 1.0, 4.0, 9.5, 30.0, 120.0, 400.0])
    def test_against_scipy(self, a, x):
        ref = special.gammaincc(a, x)
        if ref > 1e-290:
            assert gamma_q(a, x) == pytest.approx(ref, rel=1e-12)

    def test_chi2_closed_forms(self):
        # df = 2 is an exponential tail
        for x in (0.1, 2.0, 17.0):
            assert chi2_sf(x, 2) == pytest.approx(np.exp(-x / 2), rel=1e-13)
        assert chi2_sf(0.0, 7) == 1.0

    def test_domain(self):
        with pytest.raises(ValidationError):
            gamma_q(0.0, 1.0)
        with pytest.raises(ValidationError):
            gamma_q(1.0, -1.0)


class TestStudentizedRange:
    def test_zero(self):
        for k in (2, 3, 10):
            assert studentized_range_sf(0.0, k) == 1.0

    def test_two_groups_closed_form(self):
        for q in np.linspace(0, 8, 81):
            closed = 2 * (1 - stats.norm.cdf(q / np.sqrt(2)))
            assert studentized_range_sf(q, 2) == pytest.approx(closed, abs=1e-8)
        assert studentized_range_sf(1.96 * np.sqrt(2), 2) == pytest.approx(0.05, abs=1e-4)

    @pytest.mark.parametrize("k,q05", [(3, 3.314), (4, 3.633), (5, 3.858), (8, 4.286), (10, 4.474)])
    def test_published_critical_values(self, k, q05):
        assert studentized_range_sf(q05, k) == pytest.approx(0.05, abs=0.002)

    def test_nonincreasing(self):
        for k in (3, 8):
            vals = [studentized_range_sf(q, k) for q in np.linspace(0, 7, 71)]
            assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))

    def test_rejects(self):
        with pytest.raises(ValidationError):
            studentized_range_sf(float("inf"), 3)
        with pytest.raises(ValidationError):
            studentized_range_sf(1.0, 1)


class TestFriedman:
    def test_all_identical(self):
        res = friedman_test(np.ones((5, 4)))
        assert res.chi2 == 0.0 and res.p == 1.0 and res.degenerate

    def test_matches_scipy(self):
        rng = np.random.default_rng(9)
        x = rng.random((12, 6)).round(1)  # rounding forces ties
        ref = stats.friedmanchisquare(*x.T)
        res = friedman_test(x)
        assert res.chi2 == pytest.approx(ref.statistic, rel=1e-12)
        assert res.p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_permutation_oracle(self):
        rng = np.random.default_rng(2024)
        x = rng.normal(size=(20, 5)) + np.array([0.0, 0.1, 0.2, 0.3, 0.5])
        n, k = x.shape

        def stat(ranks):
            s = ranks.sum(axis=-2)
            return 12.0 / (n * k * (k + 1)) * (s * s).sum(axis=-1) - 3.0 * n * (k + 1)

        obs = stat(rank_within_blocks(x).ranks)
        perm_rng = np.random.default_rng(7)
        hits = 0
        for _ in range(10):
            # within-block permutations: each row's ranks are a uniform random permutation
            r = perm_rng.random((10_000, n, k)).argsort(axis=-1).argsort(axis=-1) + 1.0
            hits += int((stat(r) >= obs - 1e-12).sum())
        assert friedman_test(x).p == pytest.approx(hits / 100_000, abs=0.02)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), block=st.integers(0, 7), scale=st.floats(0.1, 10))
    def test_monotone_transform_invariance(self, seed, block, scale):
        x = np.random.default_rng(seed).random((8, 5))
        y = x.copy()
        y[block] = np.exp(scale * y[block])
        assert friedman_test(x).chi2 == friedman_test(y).chi2

    def test_rank_rows_sum(self):
        x = np.random.default_rng(1).integers(0, 3, (30, 6)).astype(float)
        ranks = rank_within_blocks(x).ranks
        assert np.allclose(ranks.sum(axis=1), 6 * 7 / 2)

    def test_shape_errors(self):
        with pytest.raises(ValidationError):
            friedman_test(np.ones((1, 4)))
        with pytest.raises(ValidationError):
            friedman_test(np.ones((4, 2)))


class TestNemenyi:
    def test_properties(self):
        x = np.random.default_rng(4).random((15, 6))
        p = nemenyi_test(x)
        assert np.allclose(p, p.T) and np.all(np.diag(p) == 1)
        assert np.all((0 <= p) & (p <= 1))
        mr = rank_within_blocks(x).mean_ranks
        diffs = np.abs(mr[:, None] - mr[None, :])[np.triu_indices(6, 1)]
        ps = p[np.triu_indices(6, 1)]
        order = np.argsort(diffs)
        assert np.all(np.diff(ps[order]) <= 1e-12)

    def test_identical_mean_ranks(self):
        x = np.array([[3.0, 1.0, 2.0, 0.0], [1.0, 3.0, 2.0, 0.0]])
        assert nemenyi_test(x)[0, 1] == 1.0

    def test_against_scipy_distribution(self):
        x = np.random.default_rng(8).random((10, 8))
        mr = rank_within_blocks(x).mean_ranks
        se = np.sqrt(8 * 9 / 120)
        p = nemenyi_test(x)
        for i in range(8):
            for j in range(i + 1, 8):
                ref = stats.studentized_range.sf(abs(mr[i] - mr[j]) / se, 8, np.inf)
                assert p[i, j] == pytest.approx(ref, abs=1e-9)


@pytest.fixture(scope="module")
def report():
    models, x = score_matrix()
    return compare_metrics(x, models, METRIC_COLUMNS)


class TestPublishedComparison:
    def test_friedman(self, report):
        assert report.friedman.p < 1e-7
        assert report.friedman.p == pytest.approx(1.9e-9, rel=0.1)

    def test_total_score_pairs(self, report):
        assert report.p("total_score", "f1") == pytest.approx(0.4775, abs=0.05)
        assert report.p("total_score", "recall") == pytest.approx(0.7516, abs=0.05)
        for m in ("accuracy", "precision", "auc", "specificity"):
            assert report.p("total_score", m) < 0.05

    def test_true_score_indistinct(self, report):
        for m in ("accuracy", "f1", "precision", "recall", "auc", "specificity"):
            assert report.p("true_score", m) > 0.05

    def test_confidence_matrix(self, report):
        assert np.allclose(report.confidence, 1 - report.nemenyi_p)


def test_confidence():
    assert confidence(0.0227) == pytest.approx(0.9773, abs=1e-12)
    assert confidence(0.4775) == pytest.approx(0.5225, abs=1e-12)
    assert confidence(1.0) == 0.0
    with pytest.raises(ValidationError):
        confidence(1.5)
