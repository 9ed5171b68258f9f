import numpy as np
import pytest

from ccspnet import fixtures, stats
from ccspnet.errors import NumericalError

from oracles import f_sf_quadrature, student_t_sf_quadrature


class TestTailProbabilities:
    @pytest.mark.parametrize("t,df", [(0.5, 5), (1.7679, 106), (2.6621, 106),
                                      (3.2, 20), (0.0, 10)])
    def test_t_sf_matches_quadrature(self, t, df):
        assert stats.student_t_sf(t, df) == pytest.approx(
            student_t_sf_quadrature(t, df), abs=1e-6)

    def test_t_sf_negative_argument_symmetry(self):
        assert stats.student_t_sf(-1.3, 8) == pytest.approx(
            1.0 - stats.student_t_sf(1.3, 8), abs=1e-12)

    @pytest.mark.parametrize("f,d1,d2", [(1.6945, 8, 477), (2.97, 5, 318),
                                         (1.0, 3, 10), (4.2, 2, 40)])
    def test_f_sf_matches_quadrature(self, f, d1, d2):
        assert stats.f_sf(f, d1, d2) == pytest.approx(
            f_sf_quadrature(f, d1, d2), abs=1e-6)

    def test_f_sf_at_zero_is_one(self):
        assert stats.f_sf(0.0, 4, 30) == 1.0


class TestPairedT:
    def test_identical_vectors_convention(self):
        a = np.array([1.0, 2.0, 3.0])
        assert stats.paired_t(a, a.copy()) == (0.0, 1.0)

    def test_constant_nonzero_difference_rejected(self):
        with pytest.raises(NumericalError):
            stats.paired_t(np.array([1.0, 2.0, 3.0]), np.array([2.0, 3.0, 4.0]))

    def test_hand_computed_example(self):
        a = np.array([3.0, 4.0, 5.0, 7.0])
        b = np.array([1.0, 2.0, 4.0, 4.0])
        d = a - b
        t_expected = d.mean() / (d.std(ddof=1) / 2.0)
        t, p = stats.paired_t(a, b)
        assert t == pytest.approx(t_expected)
        assert p == pytest.approx(2 * student_t_sf_quadrature(abs(t), 3), abs=1e-6)

    def test_subject_fixture_sd_vs_si(self):
        # published two-decimal value is 0.45; the printed integer accuracies
        # give a one-sided p of 0.4702, i.e. 0.47 at report precision
        t, p = stats.paired_t(fixtures.SUBJECT_ACCURACY_SD,
                              fixtures.SUBJECT_ACCURACY_SI, tail="one")
        assert t == pytest.approx(0.0751, abs=1e-4)
        assert round(p, 2) == pytest.approx(0.45, abs=0.02)

    def test_identical_vectors_one_sided(self):
        a = np.array([1.0, 2.0, 3.0])
        assert stats.paired_t(a, a.copy(), tail="one") == (0.0, 0.5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(NumericalError):
            stats.paired_t(np.zeros(3), np.zeros(4))


class TestUnpairedTFromSummary:
    def test_reference_csp_row(self):
        t, p = stats.unpaired_t_from_summary(74.41, 16.75, 54, 68.57, 17.57, 54)
        assert t == pytest.approx(1.7679, abs=0.001)
        assert p == pytest.approx(0.0400, abs=0.002)

    def test_reference_eegnet_row(self):
        t, p = stats.unpaired_t_from_summary(74.41, 16.75, 54, 65.31, 18.72, 54)
        assert t == pytest.approx(2.6621, abs=0.001)
        assert p == pytest.approx(0.0045, abs=0.002)

    def test_identical_groups(self):
        assert stats.unpaired_t_from_summary(70, 10, 54, 70, 10, 54)[0] == 0.0
        assert stats.unpaired_t_from_summary(70, 10, 54, 70, 10, 54)[1] == 0.5

    def test_two_sided_doubles_one_sided(self):
        t1, p1 = stats.unpaired_t_from_summary(74, 16, 54, 68, 17, 54, tail="one")
        t2, p2 = stats.unpaired_t_from_summary(74, 16, 54, 68, 17, 54, tail="two")
        assert t1 == t2
        assert p2 == pytest.approx(2 * p1)

    def test_small_group_rejected(self):
        with pytest.raises(NumericalError):
            stats.unpaired_t_from_summary(1, 1, 1, 2, 1, 5)


class TestAnovaFromSummary:
    def test_reference_sd_table(self):
        # the published pair is (1.6945, 0.0972); recomputing from the printed
        # summary table gives F = 1.7060, so the published run evidently used
        # unrounded per-subject data (the SI row below reproduces to 3e-5)
        f, p, dfb, dfw = stats.anova_from_summary(
            fixtures.SD_METHOD_SUMMARIES.values())
        assert (dfb, dfw) == (8, 477)
        assert f == pytest.approx(1.7060, abs=1e-4)
        assert p == pytest.approx(0.0972, abs=0.02)

    def test_reference_si_table(self):
        f, p, dfb, dfw = stats.anova_from_summary(
            fixtures.SI_METHOD_SUMMARIES.values())
        assert (dfb, dfw) == (5, 318)
        assert f == pytest.approx(2.9700, abs=0.005)
        assert p == pytest.approx(0.0123, abs=0.02)

    def test_identical_groups_give_zero_f(self):
        f, p, _, _ = stats.anova_from_summary([(70, 10, 54)] * 4)
        assert f == 0.0
        assert p == 1.0

    def test_two_group_anova_equals_t_squared(self):
        # textbook identity with pooled-variance t; use equal n and equal sd
        m1, s, n, m2 = 74.0, 16.0, 54, 68.0
        f, _, dfb, dfw = stats.anova_from_summary([(m1, s, n), (m2, s, n)])
        t, _ = stats.unpaired_t_from_summary(m1, s, n, m2, s, n)
        assert f == pytest.approx(t ** 2, abs=1e-9)
        assert (dfb, dfw) == (1, 2 * n - 2)

    def test_zero_within_variance_rejected(self):
        with pytest.raises(NumericalError):
            stats.anova_from_summary([(1, 0, 5), (2, 0, 5)])


class TestSummarize:
    def test_subject_fixture_sd_column(self):
        mean, sd, median, (width, lo, hi) = stats.summarize(
            fixtures.SUBJECT_ACCURACY_SD)
        assert round(mean, 2) == 74.41
        assert round(sd, 2) == 16.75
        assert median == 68.5
        assert (width, lo, hi) == (53, 47, 100)

    def test_subject_fixture_si_column(self):
        mean, sd, median, (width, lo, hi) = stats.summarize(
            fixtures.SUBJECT_ACCURACY_SI)
        assert round(mean, 2) == 74.28
        assert round(sd, 2) == 16.12
        assert median == 73
        assert (width, lo, hi) == (51, 49, 100)

    def test_single_value_convention(self):
        assert stats.summarize([7.0]) == (7.0, 0.0, 7.0, (0.0, 7.0, 7.0))

    def test_even_n_median_averaging(self):
        assert stats.summarize([1.0, 2.0, 3.0, 10.0])[2] == 2.5


class TestReferenceReport:
    def test_contains_reference_rows(self):
        report = stats.reference_report()
        assert "t=1.7679" in report
        assert "t=2.6621" in report
        assert "F(8,477)=" in report
        assert "F(5,318)=2.9700" in report
        assert "paired t-test SD vs SI" in report
        assert "mean=74.41" in report and "mean=74.28" in report
