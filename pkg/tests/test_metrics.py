import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochamort.errors import InvalidArgumentError
from stochamort.metrics import (
    REPORT_COLUMNS,
    MetricReport,
    aupr_mislabeled,
    auroc_mislabeled,
    compare,
    negative_fraction,
    write_report_csv,
)


def truth(seed=0, shape=(20, 6)):
    return np.random.default_rng(seed).standard_normal(shape)


class TestCompare:
    @pytest.mark.parametrize("mode", ["per-example", "global"])
    def test_identity(self, mode):
        gt = truth()
        rep = compare(gt, gt, mode)
        assert rep.mse == 0.0 and rep.sign_agreement == 1.0
        assert rep.pearson == pytest.approx(1.0) and rep.spearman == pytest.approx(1.0)

    def test_mean_prediction_has_unit_normalized_error(self):
        gt = truth(1)
        rep = compare(np.full_like(gt, gt.mean()), gt, "global")
        assert rep.mse_normalized == pytest.approx(1.0, rel=1e-12)
        assert rep.pearson is None

    @pytest.mark.parametrize("mode", ["per-example", "global"])
    def test_negation(self, mode):
        gt = truth(2)
        rep = compare(-gt, gt, mode)
        assert rep.pearson == pytest.approx(-1.0) and rep.spearman == pytest.approx(-1.0)
        assert rep.sign_agreement == 0.0

    def test_zero_counts_as_positive(self):
        rep = compare([0.0, -1.0, 2.0], [1.0, 0.0, 3.0])
        assert rep.sign_agreement == pytest.approx(2 / 3)

    def test_per_example_averages_rows(self):
        gt = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        est = np.array([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]])
        assert compare(est, gt).pearson == pytest.approx(0.0, abs=1e-15)

    def test_constant_truth_reports_missing(self):
        rep = compare(truth(shape=(4,)), np.ones(4))
        assert rep.pearson is None and rep.spearman is None and rep.mse_normalized is None

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            compare(np.zeros(3), np.zeros(4))
        with pytest.raises(InvalidArgumentError):
            compare(np.zeros(2), [0.0, np.nan])
        with pytest.raises(InvalidArgumentError):
            compare(np.zeros(2), np.ones(2), mode="local")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(0.1, 10))
    def test_invariances(self, seed, shift, scale):
        rng = np.random.default_rng(seed)
        gt = rng.standard_normal(30)
        est = gt + rng.standard_normal(30)
        a = compare(est, gt, "global")
        b = compare(est + shift, gt + shift, "global")
        c = compare(scale * est, scale * gt, "global")
        s = compare(gt, est, "global")
        assert b.mse_normalized == pytest.approx(a.mse_normalized, rel=1e-8)
        assert c.mse_normalized == pytest.approx(a.mse_normalized, rel=1e-8)
        assert s.pearson == pytest.approx(a.pearson, abs=1e-12)
        assert s.spearman == pytest.approx(a.spearman, abs=1e-12)
        assert s.mse == pytest.approx(a.mse, rel=1e-12)
        assert s.mse_normalized == pytest.approx(a.mse * 1 / np.var(est), rel=1e-10)


class TestMislabeled:
    def test_perfect_separation(self):
        scores = np.array([-3.0, -2.0, 1.0, 2.0, 5.0])
        flags = np.array([1, 1, 0, 0, 0], dtype=bool)
        assert auroc_mislabeled(scores, flags) == 1.0
        assert aupr_mislabeled(scores, flags) == 1.0

    def test_random_scores(self):
        rng = np.random.default_rng(0)
        flags = np.arange(10000) < 2000
        assert abs(auroc_mislabeled(rng.permutation(10000).astype(float), flags) - 0.5) <= 0.02

    def test_all_tied(self):
        flags = np.array([1, 0, 0, 1, 0], dtype=bool)
        assert auroc_mislabeled(np.zeros(5), flags) == 0.5

    def test_matches_pairwise_count(self):
        rng = np.random.default_rng(1)
        s = np.round(rng.standard_normal(60), 1)
        f = rng.random(60) < 0.3
        pos, neg = -s[f], -s[~f]
        expected = np.mean((pos[:, None] > neg[None, :]) + 0.5 * (pos[:, None] == neg[None, :]))
        assert auroc_mislabeled(s, f) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.standard_normal(40)
        f = np.arange(40) < 10
        assert auroc_mislabeled(np.exp(s) * 3 + 1, f) == pytest.approx(auroc_mislabeled(s, f), abs=1e-12)

    def test_single_class_flags(self):
        with pytest.raises(InvalidArgumentError):
            auroc_mislabeled([1.0, 2.0], [True, True])
        with pytest.raises(InvalidArgumentError):
            aupr_mislabeled([1.0, 2.0], [False, False])

    def test_negative_fraction(self):
        flags = np.array([1, 1, 1, 1, 0], dtype=bool)
        assert negative_fraction([-1.0, -2.0, -0.5, 0.3, -9.0], flags) == 0.75
        assert negative_fraction([-1.0, -1.0, -1.0, -1.0, 1.0], flags) == 1.0
        assert negative_fraction([0.0, 1.0, 2.0, 3.0, -1.0], flags) == 0.0
        with pytest.raises(InvalidArgumentError):
            negative_fraction([1.0], [False])


def test_report_csv(tmp_path):
    rep = MetricReport(0.5, None, 0.25, None, 1.0, "global", 0.75, 40)
    write_report_csv(tmp_path / "r.csv", [({"task": "shapley", "method": "permutation", "num_samples": 4, "seed": 0}, rep)])
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[0]["mse"] == "0.5" and rows[0]["mse_normalized"] == "" and rows[0]["evals_total"] == "40"
