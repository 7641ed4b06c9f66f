import numpy as np
import pytest

from overcnn import (AvgPoolDistribution, DeskRule, Topology, WeightVector,
                     bayes_risk_mc, check_lemma1, fit_loglog_slope, forward,
                     l2_risk_mc, make_patch_spec, misclassification_risk_mc,
                     network_classifier, parameter_count, rate_study)
from overcnn.errors import DomainError
from overcnn.evaluation import constant_classifier
from overcnn.synthdata import bayes_classifier


def const_dist(value):
    return AvgPoolDistribution(d1=4, d2=4,
                               patch=make_patch_spec("constant", 1, value=value))


def mean_dist():
    return AvgPoolDistribution(d1=4, d2=4, patch=make_patch_spec("patch-mean", 1))


def bias_only_network(outer_value):
    """K=1 network with zero inner weights: f_w == outer_value / 2 everywhere."""
    t = Topology.theorem1(kappa=1, L=2, K=1, d1=4, d2=4)
    flat = np.zeros(parameter_count(t))
    flat[0] = outer_value
    return WeightVector(t, flat), t


class TestMisclassificationRisk:
    def test_bayes_equals_bayes_risk_mc_exactly(self):
        dist = mean_dist()
        a = misclassification_risk_mc(bayes_classifier(dist), dist, 5000, seed=1)
        b = bayes_risk_mc(dist, 5000, seed=1)
        assert a == b

    def test_constant_one_classifier(self):
        est, se = misclassification_risk_mc(constant_classifier(1),
                                            const_dist(0.3), 128, seed=2)
        assert est == pytest.approx(0.7, abs=1e-15)
        assert se <= 1e-16

    def test_no_classifier_beats_bayes(self):
        dist = mean_dist()
        bayes, se_b = bayes_risk_mc(dist, 20000, seed=3)
        for clf in (constant_classifier(0), constant_classifier(1)):
            est, se = misclassification_risk_mc(clf, dist, 20000, seed=3)
            assert est >= bayes - 3 * (se + se_b)

    def test_minimum_sample_size(self):
        with pytest.raises(DomainError):
            misclassification_risk_mc(constant_classifier(0), mean_dist(), 50, seed=4)


class TestL2Risk:
    def test_zero_network_constant_target(self):
        w, t = bias_only_network(0.0)
        est, se = l2_risk_mc(w, t, const_dist(0.3), 128, seed=5)
        assert est == pytest.approx(0.09, abs=1e-15)
        assert se <= 1e-16

    def test_bisection_calibrated_constant_fit(self):
        # fit f_w == 0.3 by bisection on the single outer weight
        dist = const_dist(0.3)
        t = Topology.theorem1(kappa=1, L=2, K=1, d1=4, d2=4)
        img = np.full((4, 4), 0.5)
        lo, hi = 0.0, 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            flat = np.zeros(parameter_count(t))
            flat[0] = mid
            if forward(WeightVector(t, flat), img, t) < 0.3:
                lo = mid
            else:
                hi = mid
        flat = np.zeros(parameter_count(t))
        flat[0] = 0.5 * (lo + hi)
        est, _ = l2_risk_mc(WeightVector(t, flat), t, dist, 1000, seed=6)
        assert est <= 1e-4

    def test_range_bound(self):
        g = np.random.default_rng(7)
        t = Topology.theorem1(kappa=1, L=2, K=3, d1=4, d2=4)
        w = WeightVector(t, g.uniform(-5, 5, parameter_count(t)))
        est, _ = l2_risk_mc(w, t, mean_dist(), 500, seed=8)
        assert 0.0 <= est <= 4.0

    def test_truncation_idempotence(self):
        # values outside [-1, 1] are clamped before the squared error
        w, t = bias_only_network(4.0)      # f_w == 2 everywhere
        est, se = l2_risk_mc(w, t, const_dist(0.3), 128, seed=9)
        assert est == pytest.approx(0.49, abs=1e-15)


class TestCheckLemma1:
    def test_zero_weight_constant_target(self):
        w, t = bias_only_network(0.0)
        rep = check_lemma1(w, t, const_dist(0.3), 1000, seed=10)
        # plug-in classifies 0 (f == 0 < 1/2) = Bayes, so excess is exactly 0
        assert rep["excess"] == 0.0
        assert rep["bound"] == pytest.approx(0.6, abs=1e-14)
        assert rep["passed"]

    def test_bayes_like_network_passes(self):
        # constant 0.55 target, network fitted to 0.55: classifies 1 == Bayes
        w, t = bias_only_network(1.1)      # f_w == 0.55
        rep = check_lemma1(w, t, const_dist(0.55), 1000, seed=11)
        assert rep["excess"] == 0.0
        assert rep["passed"]


class TestSlopeFitter:
    def test_exact_log_linear_data(self):
        slope, intercept, r2 = fit_loglog_slope([100, 200, 400], [0.4, 0.2, 0.1])
        assert slope == pytest.approx(-1.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_flat_series(self):
        slope, _, _ = fit_loglog_slope([10, 20, 40], [0.5, 0.5, 0.5])
        assert slope == pytest.approx(0.0, abs=1e-12)


class TestRateStudy:
    def micro_rule(self):
        return DeskRule(kn_scale=1.0, tn_cap=8, lipschitz_trials=2,
                        lipschitz_subsample=16)

    def test_preconditions(self):
        with pytest.raises(DomainError):
            rate_study(mean_dist(), 1, [10, 20], 3, self.micro_rule(), seed=1)
        with pytest.raises(DomainError):
            rate_study(mean_dist(), 1, [10, 20, 30], 2, self.micro_rule(), seed=1)

    def test_training_error_carries_run_context(self, monkeypatch):
        from overcnn import evaluation
        from overcnn.errors import NonFiniteError

        def boom(*args, **kwargs):
            raise NonFiniteError("non-finite weights at step 3", step=3)

        monkeypatch.setattr(evaluation, "train", boom)
        with pytest.raises(NonFiniteError, match=r"n=16, rep=0"):
            rate_study(mean_dist(), 1, [16, 24, 32], 3, self.micro_rule(), seed=2)

    def test_micro_study_runs_and_is_thread_invariant(self):
        dist = mean_dist()
        kwargs = dict(n_grid=[16, 24, 32], replications=3,
                      desk_hp_rule=self.micro_rule(), seed=99, eval_m=200)
        a = rate_study(dist, 1, threads=1, **kwargs)
        b = rate_study(dist, 1, threads=2, **kwargs)
        assert a.rows == b.rows
        assert a.slope == b.slope
        assert len(a.rows) == 9
        assert [r["n"] for r in a.rows] == sorted(r["n"] for r in a.rows)
        csv = a.to_csv().splitlines()
        assert csv[0].startswith("n,rep,excess_risk")
        assert len(csv) == 10
