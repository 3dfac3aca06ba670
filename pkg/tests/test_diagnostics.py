from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import kstest

from msdhawkes.core import HawkesParams, EventStream, StateTrajectory, FitResult
from msdhawkes.diagnostics import ks_test_exp1, residuals, fit_report, qq_points, LOW_POWER_SIZE
from msdhawkes.likelihood import log_likelihood
from msdhawkes.simulate import simulate_replicates, single_exponential_params
from msdhawkes.util import LowPowerWarning, ValidationError


class TestKolmogorovSmirnov(TestCase):

    def test_statistic(self):
        sample = np.random.default_rng(0).exponential(size=500)
        result = ks_test_exp1(sample)
        assert_allclose(result.statistic, kstest(sample, "expon").statistic, rtol=1e-12)
        self.assertGreater(result.p_value, 1e-3)

    def test_rejects_wrong_law(self):
        sample = np.random.default_rng(1).uniform(0, 0.5, size=500)
        self.assertLess(ks_test_exp1(sample).p_value, 1e-6)

    def test_small_samples(self):
        result = ks_test_exp1([1.0])
        self.assertAlmostEqual(result.statistic, max(1 - np.exp(-1), np.exp(-1)))
        with self.assertRaises(ValueError):
            ks_test_exp1([])


class TestResiduals(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = single_exponential_params()
        [(cls.events, cls.state)] = simulate_replicates(cls.params, 1000.0, 1, seed=21)

    def test_true_model_passes(self):
        series = residuals(self.params, self.events, self.state)
        counts = self.events.counts()
        self.assertEqual([len(r) for r in series.residuals], list(counts - 1))
        for r in series.residuals:
            self.assertTrue(np.all(r >= 0))
            self.assertLess(abs(r.mean() - 1), 0.15)
        self.assertTrue(np.all(series.p_values > 1e-3))
        assert_array_equal(series.low_power, [False, False])

    def test_redundant_breakpoints(self):
        state = self.state
        left, right = state.breakpoints[:-1], state.breakpoints[1:]
        refined = StateTrajectory(breakpoints=np.r_[np.column_stack([left, (left + right) / 2]).ravel(), state.horizon],
                                  values=np.repeat(state.values, 2, axis=0))
        series = residuals(self.params, self.events, state)
        again = residuals(self.params, self.events, refined)
        for r, s in zip(series.residuals, again.residuals):
            assert_allclose(s, r, rtol=1e-9, atol=1e-8)
        assert_allclose(again.p_values, series.p_values, rtol=1e-6, atol=1e-9)

    def test_wrong_model_fails(self):
        # a Poisson model at the average rate misses the clustering
        rate = self.events.counts() / self.events.horizon
        poisson = HawkesParams(nu=rate, alpha=np.zeros((2, 2, 1)), beta=np.ones((2, 2, 1)), theta=np.zeros((2, 2)))
        series = residuals(poisson, self.events, self.state)
        self.assertFalse(series.all_passed)

    def test_frames(self):
        series = residuals(self.params, self.events, self.state)
        frame = series.to_frame()
        self.assertEqual(list(frame.columns), ["r_1", "r_2"])
        self.assertEqual(len(frame), max(len(r) for r in series.residuals))
        summary = series.summary_frame()
        self.assertEqual(list(summary["type"]), [1, 2])
        self.assertEqual(list(summary["n"]), [len(r) for r in series.residuals])

    def test_low_power(self):
        events = EventStream([1.0, 2.0, 3.0, 4.0], [0, 0, 0, 1], horizon=5.0)
        state = StateTrajectory.constant(2, 5.0)
        with self.assertWarns(LowPowerWarning):
            series = residuals(self.params, events, state)
        self.assertEqual(len(series.residuals[1]), 0)
        self.assertTrue(np.isnan(series.p_values[1]))
        self.assertTrue(series.low_power[0])
        self.assertLess(len(series.residuals[0]), LOW_POWER_SIZE)
        with self.assertRaises(ValidationError):
            residuals(self.params, events, state, level=1.5)

    def test_fit_report(self):
        per_coordinate = log_likelihood(self.params, self.events, self.state)[1]
        fit = FitResult(params=self.params, per_coordinate_loglik=per_coordinate, n_params=self.params.n_params(),
                        method="MLE", covariates=("I", "S2"))
        named = StateTrajectory(self.state.breakpoints, self.state.values, names=("I", "S2"))
        report = fit_report(fit, self.events, named)
        record = report.to_dict()
        self.assertEqual(record["model"], "msd-I-S2-1")
        self.assertEqual(record["n_params"], 14)
        self.assertEqual(len(record["p_values"]), 2)
        self.assertIn("all_passed", record)
        self.assertEqual(record["level"], 0.05)

    def test_qq_points(self):
        frame = qq_points([3.0, 1.0, 2.0])
        assert_array_equal(frame["empirical"], [1.0, 2.0, 3.0])
        assert_allclose(frame["theoretical"], -np.log(1 - np.array([0.5, 1.5, 2.5]) / 3))
