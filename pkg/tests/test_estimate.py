import os
from unittest import TestCase, skipUnless

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from msdhawkes.core import ModelShape, HawkesParams, EventStream, FitResult, FitMethod
from msdhawkes.estimate import (MleOptions, EmOptions, fit_mle, fit_em, coordinate_starts, random_start,
                                compute_branching, branching_sums, expected_complete_log_likelihood,
                                select_model, SelectionEntry, SelectionTable)
from msdhawkes.likelihood import log_likelihood, compensator_increments
from msdhawkes.simulate import simulate_state, simulate_msd, simulate_replicates, single_exponential_params
from msdhawkes.util import ValidationError, UnidentifiableCoordinateWarning, stream

SLOW = bool(os.environ.get("MSDHAWKES_SLOW_TESTS"))


def univariate_params():
    return HawkesParams.from_arrays(nu=[0.5], alpha=[[1.0]], beta=[[2.0]], theta=[[1.0]])


def simulate(params, horizon, seed):
    rng = stream(seed)
    state = simulate_state(1.0, params.shape.d_x, horizon, rng)
    return simulate_msd(params, state, horizon, rng), state


class TestOptions(TestCase):

    def test_validation(self):
        with self.assertRaises(ValidationError):
            MleOptions(n_starts=0)
        with self.assertRaises(ValidationError):
            MleOptions(beta_bounds=(0.0, 1.0))
        with self.assertRaises(ValidationError):
            MleOptions(alpha_mask=np.ones(3))
        with self.assertRaises(ValidationError):
            MleOptions(optimizer="BFGS")
        with self.assertRaises(ValidationError):
            EmOptions(tol_loglik=0.0)
        with self.assertRaises(ValidationError):
            EmOptions(beta_bounds=(1.0, 1.0))

    def test_mask(self):
        options = MleOptions().no_cross_excitation(2)
        assert_array_equal(options.mask(2), np.eye(2, dtype=bool))
        assert_array_equal(MleOptions().mask(3), np.ones((3, 3), dtype=bool))
        with self.assertRaises(ValidationError):
            options.mask(3)

    def test_starts(self):
        shape = ModelShape(2, 3, 1)
        options = MleOptions(n_starts=4, seed=5, init=single_exponential_params().with_theta(np.zeros((2, 1))))
        with self.assertRaises(ValidationError):
            coordinate_starts(shape, 0, 10, 100.0, options)
        init = HawkesParams.random(shape, np.random.default_rng(0))
        starts = coordinate_starts(shape, 1, 10, 100.0, MleOptions(n_starts=4, seed=5, init=init))
        self.assertEqual(len(starts), 5)
        assert_allclose(starts[0][0], init.nu[1])
        # starts are reproducible and independent of the number of starts
        again = coordinate_starts(shape, 1, 10, 100.0, MleOptions(n_starts=2, seed=5))
        for a, b in zip(starts[1:3], again):
            for u, v in zip(a, b):
                assert_allclose(u, v)
        nu, alpha, beta, theta = random_start(shape, 10, 100.0, np.random.default_rng(1))
        self.assertEqual(alpha.shape, (2, 3))
        self.assertTrue(np.all(np.diff(beta, axis=-1) < 0))
        self.assertTrue(0.05 <= nu <= 0.2)
        self.assertEqual(theta.shape, (1,))


class TestMle(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = univariate_params()
        cls.events, cls.state = simulate(cls.params, 2000.0, 0)
        cls.fit = fit_mle(cls.events, cls.state, cls.params.shape, MleOptions(n_starts=4, seed=1))

    def test_recovery(self):
        fit = self.fit
        self.assertIsInstance(fit, FitResult)
        self.assertEqual(fit.method, FitMethod.MLE)
        self.assertEqual(fit.starts_used, 4)
        self.assertEqual(fit.n_params, 4)
        self.assertAlmostEqual(fit.per_coordinate_loglik.sum(), fit.log_likelihood)
        self.assertAlmostEqual(fit.log_likelihood, log_likelihood(fit.params, self.events, self.state)[0])
        ratio = fit.params.alpha[0, 0, 0] / fit.params.beta[0, 0, 0]
        self.assertLess(abs(ratio - 0.5), 0.15)
        self.assertLess(abs(fit.params.theta[0, 0] - 1.0), 0.3)
        self.assertLess(abs(np.log(fit.params.nu[0] / 0.5)), 0.5)

    def test_truncated_newton(self):
        options = MleOptions(n_starts=4, seed=1, optimizer="TNC")
        fit = fit_mle(self.events, self.state, self.params.shape, options)
        self.assertEqual(fit.optimizer, "TNC")
        self.assertEqual(self.fit.optimizer, "L-BFGS-B")
        self.assertAlmostEqual(fit.log_likelihood, self.fit.log_likelihood, delta=1e-3)
        assert_allclose(fit.params.theta, self.fit.params.theta, atol=1e-2)
        self.assertEqual(FitResult.from_dict(fit.to_dict()).optimizer, "TNC")

    def test_at_least_as_good_as_truth(self):
        self.assertGreaterEqual(self.fit.log_likelihood,
                                log_likelihood(self.params, self.events, self.state)[0] - 1e-6)

    def test_compensator_matches_event_count(self):
        # stationarity along the joint scaling of nu and alpha
        _, increments = compensator_increments(self.fit.params, self.events, self.state)
        assert_allclose(increments.sum(), len(self.events), rtol=1e-4)

    def test_init_start(self):
        fit = fit_mle(self.events, self.state, self.params.shape, MleOptions(n_starts=1, seed=2, init=self.params))
        self.assertEqual(fit.starts_used, 2)
        self.assertGreaterEqual(fit.log_likelihood, log_likelihood(self.params, self.events, self.state)[0] - 1e-6)

    def test_mask(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 200.0, 1, seed=3)
        options = MleOptions(n_starts=2, seed=0).no_cross_excitation(2)
        fit = fit_mle(events, state, params.shape, options)
        self.assertEqual(fit.n_params, 2 * 3 + 2 * 2)
        self.assertEqual(fit.params.alpha[0, 1, 0], 0.0)
        self.assertEqual(fit.params.alpha[1, 0, 0], 0.0)
        self.assertEqual(fit.covariates, None)

    def test_coordinates_fit_independently(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 200.0, 1, seed=4)
        other = HawkesParams(nu=params.nu * [1.0, 3.0], alpha=params.alpha, beta=params.beta,
                             theta=params.theta * [[1.0], [-1.0]])
        fits = [fit_mle(events, state, params.shape, MleOptions(n_starts=1, seed=0, init=init))
                for init in [params, other]]
        # identical starts for the first coordinate, different ones for the second
        for a, b in zip(fits[0].params.coordinate(0), fits[1].params.coordinate(0)):
            assert_array_equal(a, b)
        self.assertEqual(fits[0].per_coordinate_loglik[0], fits[1].per_coordinate_loglik[0])

    def test_missing_type(self):
        events = EventStream(self.events.times, np.zeros(len(self.events), dtype=int), horizon=self.events.horizon,
                             d_e=2)
        shape = ModelShape(2, 1, 1)
        with self.assertWarns(UnidentifiableCoordinateWarning):
            fit = fit_mle(events, self.state, shape, MleOptions(n_starts=1, seed=0))
        self.assertIn("no-events-type-2", fit.flags)
        self.assertTrue(np.isfinite(fit.log_likelihood))

    def test_invalid_inputs(self):
        empty = EventStream([], [], horizon=2000.0, d_e=1)
        with self.assertRaises(ValidationError):
            fit_mle(empty, self.state, self.params.shape)
        with self.assertRaises(ValidationError):
            fit_mle(self.events, self.state, ModelShape(1, 1, 2))
        with self.assertRaises(TypeError):
            fit_mle(self.events, self.state, (1, 1, 1))


class TestEm(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = univariate_params()
        cls.events, cls.state = simulate(cls.params, 500.0, 4)

    def test_monotone_and_close_to_mle(self):
        em = fit_em(self.events, self.state, self.params.shape, EmOptions(seed=0, init=self.params))
        self.assertEqual(em.method, FitMethod.EM)
        self.assertNotIn("non-monotone-type-1", em.flags)
        trace = np.array(em.trace)
        self.assertTrue(np.all(np.diff(trace) >= -1e-8))
        self.assertAlmostEqual(em.log_likelihood, trace.max(), places=6)
        mle = fit_mle(self.events, self.state, self.params.shape, MleOptions(n_starts=2, seed=0, init=self.params))
        self.assertLess(abs(em.log_likelihood - mle.log_likelihood), 0.05)

    def test_random_start(self):
        em = fit_em(self.events, self.state, self.params.shape, EmOptions(seed=3, max_sweeps=50))
        self.assertLessEqual(len(em.trace), 51)
        self.assertGreaterEqual(em.trace[-1], em.trace[0] - 1e-6)
        self.assertEqual(em.to_dict()["trace"], list(em.trace))
        self.assertIsNone(em.to_dict()["optimizer"])

    def test_no_events_coordinate(self):
        events = EventStream(self.events.times, np.zeros(len(self.events), dtype=int), horizon=self.events.horizon,
                             d_e=2)
        with self.assertWarns(UnidentifiableCoordinateWarning):
            fit = fit_em(events, self.state, ModelShape(2, 1, 1), EmOptions(seed=0, max_sweeps=20))
        self.assertIn("no-events-type-2", fit.flags)
        self.assertEqual(fit.params.alpha[1].sum(), 0.0)


class TestBranching(TestCase):

    def test_probabilities(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 100.0, 1, seed=8)
        probabilities = compute_branching(params, events, state)
        assert_allclose(probabilities.row_sums(), 1.0)
        # parents precede their children
        k = len(events)
        self.assertTrue(np.all(probabilities.offspring[np.triu_indices(k)] == 0))
        direct = probabilities.aggregate(2)
        recursive = branching_sums(params, events, state)
        assert_allclose(recursive.immigrants, direct.immigrants, rtol=1e-9)
        assert_allclose(recursive.offspring, direct.offspring, rtol=1e-9, atol=1e-12)
        assert_allclose(recursive.lag_weighted, direct.lag_weighted, rtol=1e-9, atol=1e-12)
        self.assertAlmostEqual(direct.immigrants.sum() + direct.offspring.sum(), k)

    def test_complete_log_likelihood(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 50.0, 1, seed=9)
        probabilities = compute_branching(params, events, state)
        # log-likelihood = expected complete log-likelihood + entropy of the branching probabilities
        with np.errstate(divide="ignore", invalid="ignore"):
            entropy = -(np.sum(np.where(probabilities.immigrant > 0,
                                        probabilities.immigrant * np.log(probabilities.immigrant), 0.0))
                        + np.sum(np.where(probabilities.offspring > 0,
                                          probabilities.offspring * np.log(probabilities.offspring), 0.0)))
        expected = expected_complete_log_likelihood(params, events, state, probabilities)
        assert_allclose(expected + entropy, log_likelihood(params, events, state)[0], rtol=1e-9)
        poisson = HawkesParams(nu=[0.3, 0.7], alpha=np.zeros((2, 2, 1)), beta=np.ones((2, 2, 1)), theta=params.theta)
        immigrants_only = compute_branching(poisson, events, state)
        assert_allclose(expected_complete_log_likelihood(poisson, events, state, immigrants_only),
                        log_likelihood(poisson, events, state)[0], rtol=1e-10)


class TestSelection(TestCase):

    def test_covariate_model_wins(self):
        params = univariate_params()
        events, state = simulate(params, 1000.0, 6)
        table = select_model(events, state, [(1, ()), (2, ()), (1, (0,))], options=MleOptions(n_starts=2, seed=0))
        self.assertEqual(len(table.entries), 3)
        self.assertEqual(table.best.covariates, (0,))
        self.assertEqual(table.best.code, "msd-x1-1")
        frame = table.to_frame()
        self.assertEqual(list(frame["rank"]), [1, 2, 3])
        self.assertEqual(frame.loc[0, "model"], "msd-x1-1")

    def test_failing_candidate_is_recorded(self):
        params = univariate_params()
        events, state = simulate(params, 200.0, 7)
        table = select_model(events, state, [(1, ()), (1, ("missing",))], options=MleOptions(n_starts=1, seed=0))
        self.assertIsNone(table.entries[1].fit)
        self.assertIn("ValidationError", table.entries[1].error)
        self.assertIs(table.best, table.entries[0])

    def test_tie_breaking(self):
        params = HawkesParams.zeros(ModelShape(1, 1, 0))
        small = FitResult(params=params, per_coordinate_loglik=[-10.0], n_params=4, method="MLE")
        large = FitResult(params=params, per_coordinate_loglik=[-9.0], n_params=5, method="MLE")
        self.assertEqual(small.aic, large.aic)
        table = SelectionTable(entries=(SelectionEntry(d_n=2, covariates=(), fit=large),
                                        SelectionEntry(d_n=1, covariates=("I",), fit=small),
                                        SelectionEntry(d_n=3, covariates=(), error="failed")))
        self.assertIs(table.best, table.entries[1])
        self.assertEqual(len(table.ranked), 2)
        with self.assertRaises(ValidationError):
            SelectionTable(entries=(SelectionEntry(d_n=1, covariates=(), error="failed"),)).best


@skipUnless(SLOW, "set MSDHAWKES_SLOW_TESTS to run full-scale estimation checks")
class TestEstimationFullScale(TestCase):

    def test_single_exponential_recovery(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 4000.0, 1, seed=11)
        fit = fit_mle(events, state, params.shape, MleOptions(seed=0))
        ratio = (fit.params.alpha / fit.params.beta).sum(axis=-1)
        assert_allclose(ratio, (params.alpha / params.beta).sum(axis=-1), atol=0.1)
        assert_allclose(fit.params.theta, params.theta, atol=0.15)

    def test_em_matches_mle(self):
        params = single_exponential_params()
        [(events, state)] = simulate_replicates(params, 1000.0, 1, seed=12)
        mle = fit_mle(events, state, params.shape, MleOptions(seed=0, init=params))
        em = fit_em(events, state, params.shape, EmOptions(init=params))
        self.assertLess(abs(mle.log_likelihood - em.log_likelihood), 1e-4 * abs(mle.log_likelihood))
