import itertools
from unittest import TestCase

import numpy as np
from numpy.testing import assert_array_equal, assert_allclose

from msdhawkes.core import (ModelShape, HawkesParams, EventStream, StateTrajectory, FitResult, FitMethod,
                            build_merged_timeline)
from msdhawkes.util import ValidationError, DuplicateTimestampError, HorizonMismatchError


def two_term_params():
    return HawkesParams.from_arrays(nu=[0.5, 1.0],
                                    alpha=[[[0.2, 1.0], [0.1, 0.5]], [[0.3, 2.0], [0.0, 1.0]]],
                                    beta=[[[1.0, 10.0], [0.5, 5.0]], [[2.0, 20.0], [1.0, 3.0]]],
                                    theta=[[0.5, -0.2], [0.0, 1.0]])


class TestModelShape(TestCase):

    def test_n_params(self):
        self.assertEqual(ModelShape(2, 1, 2).n_params(), 2 * 3 + 2 * 4)
        self.assertEqual(ModelShape(2, 3, 0).n_params(), 2 + 6 * 4)
        self.assertEqual(ModelShape(2, 1, 2).n_params(np.eye(2, dtype=bool)), 6 + 2 * 2)
        with self.assertRaises(ValidationError):
            ModelShape(2, 1).n_params(np.ones((3, 3)))

    def test_validation(self):
        for args in [(0, 1), (1, 0), (1, 1, -1), (1.5, 1), (True, 1)]:
            with self.assertRaises(ValidationError):
                ModelShape(*args)
        self.assertEqual(ModelShape(np.int64(2), 1).d_e, 2)

    def test_code(self):
        self.assertEqual(ModelShape(2, 3).code(), "std-3")
        self.assertEqual(ModelShape(2, 1, 2).code(), "msd-x1-x2-1")
        self.assertEqual(ModelShape(2, 3, 2).code(("I", "S2")), "msd-I-S2-3")


class TestHawkesParams(TestCase):

    def test_from_arrays_sorts_terms(self):
        params = two_term_params()
        self.assertEqual(params.shape, ModelShape(2, 2, 2))
        assert_array_equal(params.beta[0, 0], [10.0, 1.0])
        assert_array_equal(params.alpha[0, 0], [1.0, 0.2])
        assert_array_equal(params.beta[1, 1], [3.0, 1.0])
        self.assertFalse(params.alpha.flags.writeable)

    def test_from_arrays_single_term(self):
        params = HawkesParams.from_arrays(nu=[1.0], alpha=[[0.5]], beta=[[2.0]])
        self.assertEqual(params.shape, ModelShape(1, 1, 0))
        self.assertEqual(params.theta.shape, (1, 0))

    def test_ties_are_split(self):
        params = HawkesParams.from_arrays(nu=[1.0], alpha=[[[0.1, 0.2]]], beta=[[[3.0, 3.0]]])
        self.assertEqual(params.beta[0, 0, 0], 3.0)
        self.assertLess(params.beta[0, 0, 1], 3.0)
        self.assertEqual(params.beta[0, 0, 1], np.nextafter(3.0, 0))

    def test_validation_messages(self):
        good = dict(nu=[1.0], alpha=[[[0.5, 0.1]]], beta=[[[2.0, 1.0]]], theta=[[0.0]])
        cases = [(dict(nu=[0.0]), "nu[0]"),
                 (dict(alpha=[[[-0.5, 0.1]]]), "alpha[0, 0, 0]"),
                 (dict(beta=[[[2.0, 0.0]]]), "beta[0, 0, 1]"),
                 (dict(beta=[[[1.0, 2.0]]]), "beta[0, 0, 1]"),
                 (dict(theta=[[np.inf]]), "theta[0, 0]"),
                 (dict(theta=[[0.0], [0.0]]), "theta must have shape")]
        for change, text in cases:
            with self.assertRaises(ValidationError) as ctx:
                HawkesParams(**{**good, **change})
            self.assertIn(text, str(ctx.exception))

    def test_canonical(self):
        params = two_term_params()
        self.assertEqual(params.canonical(), params)

    def test_permuted_terms(self):
        nu = [0.5, 1.0]
        alpha = np.array([[[0.2, 1.0, 0.4], [0.1, 0.5, 0.3]], [[0.3, 2.0, 0.7], [0.0, 1.0, 0.2]]])
        beta = np.array([[[1.0, 10.0, 4.0], [0.5, 5.0, 2.0]], [[2.0, 20.0, 6.0], [1.0, 3.0, 8.0]]])
        reference = HawkesParams.from_arrays(nu=nu, alpha=alpha, beta=beta)
        for order in itertools.permutations(range(3)):
            permuted = HawkesParams.from_arrays(nu=nu, alpha=alpha[..., list(order)], beta=beta[..., list(order)])
            self.assertEqual(permuted, reference)
        # a permutation applied to one kernel only
        alpha[1, 0] = alpha[1, 0, ::-1]
        beta[1, 0] = beta[1, 0, ::-1]
        self.assertEqual(HawkesParams.from_arrays(nu=nu, alpha=alpha, beta=beta), reference)

    def test_dict_round_trip(self):
        params = two_term_params()
        self.assertEqual(HawkesParams.from_dict(params.to_dict()), params)
        std = HawkesParams.from_arrays(nu=[1.0, 2.0], alpha=np.ones((2, 2)), beta=np.full((2, 2), 3.0))
        self.assertEqual(HawkesParams.from_dict(std.to_dict()), std)

    def test_random(self):
        shape = ModelShape(3, 2, 1)
        params = HawkesParams.random(shape, np.random.default_rng(0))
        self.assertEqual(params.shape, shape)
        self.assertTrue(np.all((params.alpha / params.beta).sum(axis=-1) <= 0.8))
        self.assertEqual(HawkesParams.random(shape, np.random.default_rng(0)), params)

    def test_zeros(self):
        params = HawkesParams.zeros(ModelShape(2, 3, 1), nu=2.0)
        assert_array_equal(params.nu, [2.0, 2.0])
        assert_array_equal(params.alpha, 0.0)
        assert_array_equal(params.beta[0, 1], [3.0, 2.0, 1.0])


class TestEventStream(TestCase):

    def test_validation(self):
        for times, types, message in [([0.0, 1.0], [0, 0], "times[0]"),
                                      ([1.0, 0.5], [0, 0], "times[1]"),
                                      ([1.0, 11.0], [0, 0], "exceeds the horizon"),
                                      ([1.0, 2.0], [0, -1], "types[1]"),
                                      ([1.0, 2.0], [0], "differ in length")]:
            with self.assertRaises(ValidationError) as ctx:
                EventStream(times, types, horizon=10.0)
            self.assertIn(message, str(ctx.exception))
        with self.assertRaises(ValidationError):
            EventStream([1.0], [2], horizon=10.0, d_e=2)

    def test_strict(self):
        events = EventStream([1.0, 2.0, 10.0], [0, 1, 0], horizon=10.0)
        self.assertTrue(events.strict)
        self.assertEqual(events.d_e, 2)
        assert_array_equal(events.counts(), [2, 1])
        assert_array_equal(events.of_type(0), [1.0, 10.0])
        ties = EventStream([1.0, 1.0, 2.0], [0, 1, 0], horizon=10.0)
        self.assertFalse(ties.strict)
        with self.assertRaises(DuplicateTimestampError):
            ties.require_strict()
        with self.assertRaises(DuplicateTimestampError):
            EventStream([1.0, 1.0], [0, 1], horizon=10.0, strict=True)

    def test_empty(self):
        events = EventStream([], [], horizon=5.0, d_e=2)
        self.assertEqual(len(events), 0)
        assert_array_equal(events.counts(), [0, 0])


class TestStateTrajectory(TestCase):

    def setUp(self):
        self.state = StateTrajectory(breakpoints=[0.0, 1.0, 2.0, 4.0], names=("I", "S2"),
                                     values=[[0.5, -1.0], [0.5, 1.0], [-0.2, 1.0]])

    def test_values(self):
        self.assertEqual(self.state.horizon, 4.0)
        self.assertEqual(self.state.d_x, 2)
        # right-open segments
        assert_array_equal(self.state.value_at(1.0), [0.5, 1.0])
        assert_array_equal(self.state.value_at(4.0), [-0.2, 1.0])
        # the value before a breakpoint applies at the breakpoint itself
        assert_array_equal(self.state.value_before(1.0), [0.5, -1.0])
        assert_array_equal(self.state.value_before(1.5), [0.5, 1.0])
        assert_array_equal(self.state.value_before(0.0), [0.5, -1.0])
        assert_array_equal(self.state.value_before(np.array([2.0, 3.0])), [[0.5, 1.0], [-0.2, 1.0]])

    def test_validation(self):
        with self.assertRaises(ValidationError) as ctx:
            StateTrajectory([0.0, 1.0], [[1.5]])
        self.assertIn("values[0, 0]", str(ctx.exception))
        with self.assertRaises(ValidationError):
            StateTrajectory([0.5, 1.0], [[0.0]])
        with self.assertRaises(ValidationError):
            StateTrajectory([0.0, 1.0, 1.0], [[0.0], [0.0]])
        with self.assertRaises(ValidationError):
            StateTrajectory([0.0, 1.0, 2.0], [[0.0]])

    def test_select_merges_breakpoints(self):
        imbalance = self.state.select(["I"])
        assert_array_equal(imbalance.breakpoints, [0.0, 2.0, 4.0])
        assert_array_equal(imbalance.values, [[0.5], [-0.2]])
        self.assertEqual(imbalance.names, ("I",))
        spread = self.state.select([1])
        assert_array_equal(spread.breakpoints, [0.0, 1.0, 4.0])
        self.assertEqual(self.state.select([]).d_x, 0)
        with self.assertRaises(ValidationError):
            self.state.select(["S3"])
        with self.assertRaises(ValidationError):
            self.state.select([2])

    def test_constant(self):
        state = StateTrajectory.constant(2, 3.0)
        assert_array_equal(state.breakpoints, [0.0, 3.0])
        assert_array_equal(state.values, [[0.0, 0.0]])
        self.assertEqual(StateTrajectory.constant(0, 3.0).d_x, 0)


class TestMergedTimeline(TestCase):

    def test_merge(self):
        state = StateTrajectory([0.0, 1.0, 2.5, 4.0], [[0.1], [0.2], [0.3]])
        events = EventStream([0.5, 1.0, 3.0], [0, 1, 0], horizon=4.0)
        timeline = build_merged_timeline(events, state)
        assert_array_equal(timeline.times, [0.0, 0.5, 1.0, 2.5, 3.0, 4.0])
        assert_array_equal(timeline.event_types, [-1, 0, 1, -1, 0, -1])
        assert_array_equal(timeline.values[:, 0], [0.1, 0.1, 0.2, 0.3, 0.3])
        # the event at the breakpoint sees the value before it
        assert_array_equal(timeline.pre_values[:, 0], [0.1, 0.1, 0.1, 0.2, 0.3, 0.3])
        assert_array_equal(timeline.event_points(0), [1, 4])
        assert_array_equal(timeline.incidence().sum(axis=1), [2, 1])
        points = np.array([0.7, 2.0, 3.5])
        assert_array_equal(timeline.to_state().value_at(points), state.value_at(points))

    def test_idempotent(self):
        state = StateTrajectory([0.0, 1.0, 2.5, 4.0], [[0.1, -0.5], [0.2, -0.5], [0.2, 0.5]])
        events = EventStream([0.5, 1.0, 3.0, 4.0], [0, 1, 0, 1], horizon=4.0)
        timeline = build_merged_timeline(events, state)
        again = build_merged_timeline(events, timeline.to_state())
        for name in ["times", "event_types", "values", "pre_values"]:
            assert_array_equal(getattr(again, name), getattr(timeline, name), err_msg=name)
        self.assertEqual(again.to_state(), timeline.to_state())

    def test_event_at_horizon(self):
        state = StateTrajectory.constant(1, 2.0)
        timeline = build_merged_timeline(EventStream([1.0, 2.0], [0, 0], horizon=2.0), state)
        assert_array_equal(timeline.times, [0.0, 1.0, 2.0])
        assert_array_equal(timeline.lengths, [1.0, 1.0])

    def test_ties(self):
        events = EventStream([1.0, 1.0], [0, 1], horizon=2.0)
        state = StateTrajectory.constant(0, 2.0)
        with self.assertRaises(DuplicateTimestampError):
            build_merged_timeline(events, state)
        timeline = build_merged_timeline(events, state, allow_ties=True)
        assert_array_equal(timeline.lengths, [1.0, 0.0, 1.0])
        assert_array_equal(timeline.event_types, [-1, 0, 1, -1])

    def test_horizon_mismatch(self):
        with self.assertRaises(HorizonMismatchError):
            build_merged_timeline(EventStream([1.0], [0], horizon=2.0), StateTrajectory.constant(0, 3.0))


class TestFitResult(TestCase):

    def test_aic_and_round_trip(self):
        params = two_term_params()
        fit = FitResult(params=params, per_coordinate_loglik=[-10.0, -5.5], n_params=params.n_params(),
                        method="EM", starts_used=3, converged=False, flags=["non-monotone-type-1"],
                        covariates=["I", "S2"], trace=[-20.0, -15.5])
        self.assertEqual(fit.log_likelihood, -15.5)
        self.assertEqual(fit.n_params, 2 * 3 + 4 * 4)
        self.assertEqual(fit.aic, 2 * fit.n_params + 31.0)
        self.assertEqual(fit.method, FitMethod.EM)
        self.assertEqual(fit.model_code, "msd-I-S2-2")
        record = fit.to_dict()
        self.assertEqual(record["model"], "msd-I-S2-2")
        self.assertEqual(record["shape"], dict(d_e=2, d_n=2, d_x=2))
        copy = FitResult.from_dict(record)
        self.assertEqual(copy.params, params)
        self.assertEqual(copy.aic, fit.aic)
        self.assertEqual(copy.flags, ("non-monotone-type-1",))
        self.assertEqual(copy.trace, (-20.0, -15.5))
        assert_allclose(copy.per_coordinate_loglik, [-10.0, -5.5])
        del record["n_params"]
        with self.assertRaises(ValidationError):
            FitResult.from_dict(record)

    def test_per_coordinate_length(self):
        with self.assertRaises(ValidationError):
            FitResult(params=two_term_params(), per_coordinate_loglik=[-1.0], n_params=1, method="MLE")
