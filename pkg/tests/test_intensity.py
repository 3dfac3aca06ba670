from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from msdhawkes.core import HawkesParams, EventStream, StateTrajectory
from msdhawkes.intensity import (kernel_value, hawkes_intensity_left, msd_intensity_left, IncrementalIntensity,
                                 intensity_path, powerlaw_kernel_value, powerlaw_intensity_left)
from msdhawkes.simulate import PowerLawKernelParams
from msdhawkes.util import ValidationError


class TestIntensity(TestCase):

    def setUp(self):
        self.params = HawkesParams.from_arrays(nu=[0.5, 1.0],
                                               alpha=[[[1.0, 0.2], [0.5, 0.1]], [[0.0, 0.3], [2.0, 0.4]]],
                                               beta=[[[5.0, 1.0], [4.0, 0.5]], [[3.0, 2.0], [10.0, 1.0]]],
                                               theta=[[1.0], [-0.5]])
        self.events = EventStream([0.3, 1.0, 1.7, 2.0], [0, 1, 1, 0], horizon=3.0)
        self.state = StateTrajectory([0.0, 1.0, 3.0], [[0.4], [-0.6]])

    def test_kernel_value(self):
        self.assertAlmostEqual(kernel_value(self.params, 0, 1, 0.0), 0.6)
        self.assertAlmostEqual(kernel_value(self.params, 0, 1, 2.0), 0.5 * np.exp(-8) + 0.1 * np.exp(-1))
        self.assertEqual(kernel_value(self.params, 0, 0, np.array([0.0, 1.0, 2.0])).shape, (3,))
        with self.assertRaises(ValueError):
            kernel_value(self.params, 0, 0, -1.0)

    def test_left_limit_excludes_current_event(self):
        t = 1.0
        expected = self.params.nu + [kernel_value(self.params, e, 0, t - 0.3) for e in range(2)]
        assert_allclose(hawkes_intensity_left(self.params, self.events, t), expected)
        assert_allclose(hawkes_intensity_left(self.params, self.events, 0.3), self.params.nu)
        with self.assertRaises(ValidationError):
            hawkes_intensity_left(self.params, self.events, 3.5)

    def test_state_factor_uses_pre_event_value(self):
        value = msd_intensity_left(self.params, self.events, self.state, 1.0)
        assert_allclose(value.state_factor, np.exp([0.4, -0.2]))
        assert_allclose(value.total, value.hawkes_part * value.state_factor)
        value = msd_intensity_left(self.params, self.events, self.state, 1.5)
        assert_allclose(value.state_factor, np.exp([-0.6, 0.3]))

    def test_incremental_matches_direct(self):
        evaluator = IncrementalIntensity(self.params)
        for t, e in zip(self.events.times, self.events.types):
            evaluator.advance_to(t)
            assert_allclose(evaluator.left_limit(), hawkes_intensity_left(self.params, self.events, t))
            evaluator.add_event(e)
        evaluator.advance_to(2.5)
        assert_allclose(evaluator.left_limit(), hawkes_intensity_left(self.params, self.events, 2.5))
        with self.assertRaises(ValueError):
            evaluator.advance_to(1.0)

    def test_intensity_path(self):
        grid = np.array([0.0, 0.3, 0.5, 1.0, 1.0, 1.9, 2.0, 3.0])
        path = intensity_path(self.params, self.events, self.state, grid)
        self.assertEqual(path.shape, (len(grid), 2))
        for t, row in zip(grid, path):
            assert_allclose(row, msd_intensity_left(self.params, self.events, self.state, t).total)
        with self.assertRaises(ValidationError):
            intensity_path(self.params, self.events, self.state, [1.0, 0.5])

    def test_powerlaw(self):
        kernels = PowerLawKernelParams(alpha=[[0.5, 0.1], [0.2, 0.3]], beta=[[1.0, 2.0], [1.5, 0.5]],
                                       tau=[[0.1, 1.0], [0.5, 2.0]])
        self.assertAlmostEqual(powerlaw_kernel_value(kernels, 0, 1, 1.0), 0.1 * 2.0 ** -3)
        times, types = [0.5, 1.0, 2.0], [0, 1, 0]
        expected = np.array([0.2, 0.4])
        for s, e_ in zip(times[:2], types[:2]):
            expected += [powerlaw_kernel_value(kernels, e, e_, 2.0 - s) for e in range(2)]
        assert_allclose(powerlaw_intensity_left(kernels, [0.2, 0.4], times, types, 2.0), expected)
