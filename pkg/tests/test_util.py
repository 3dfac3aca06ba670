import sys
from unittest import TestCase, skipIf

import numpy as np
import torch
from numpy.testing import assert_array_equal

from msdhawkes.util import (zip, decay, as_rng, as_tensor, stream, parallel_map, EXP_UNDERFLOW, DataFormatError,
                            MsdHawkesError, ValidationError, EventCapExceededError)


def _square(x):
    return x * x


class TestUtil(TestCase):

    @skipIf(sys.version_info < (3, 10), "strict zip requires Python 3.10")
    def test_strict_zip(self):
        self.assertEqual(list(zip([1, 2], "ab")), [(1, "a"), (2, "b")])
        with self.assertRaises(ValueError):
            list(zip([1, 2, 3], "ab"))
        self.assertEqual(list(zip([1, 2, 3], "ab", strict=False)), [(1, "a"), (2, "b")])

    def test_decay(self):
        self.assertEqual(decay(2.0, 0.0), 1.0)
        self.assertAlmostEqual(float(decay(2.0, 1.5)), np.exp(-3.0))
        # no warnings and exact zeros past the underflow threshold
        with np.errstate(all="raise"):
            out = decay(np.array([1.0, 1.0, 1.0]), np.array([EXP_UNDERFLOW - 1, EXP_UNDERFLOW + 1, 1e300]))
        self.assertGreater(out[0], 0)
        assert_array_equal(out[1:], 0.0)
        # broadcasting
        self.assertEqual(decay(np.ones((2, 3)), np.zeros(3)).shape, (2, 3))

    def test_stream(self):
        a = stream(7, 1, 2).uniform(size=5)
        b = stream(7, 1, 2).uniform(size=5)
        c = stream(7, 2, 1).uniform(size=5)
        assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        # independent of draws from other streams
        stream(7, 0).uniform(size=100)
        assert_array_equal(stream(7, 1, 2).uniform(size=5), a)
        # seed sequences extend their spawn key
        seq = np.random.SeedSequence(7, spawn_key=(1,))
        assert_array_equal(stream(seq, 2).uniform(size=5), a)

    def test_as_rng(self):
        rng = np.random.default_rng(3)
        self.assertIs(as_rng(rng), rng)
        assert_array_equal(as_rng(3).uniform(size=3), np.random.default_rng(3).uniform(size=3))
        self.assertIsInstance(as_rng(None), np.random.Generator)

    def test_as_tensor(self):
        t = as_tensor([1, 2, 3])
        self.assertEqual(t.dtype, torch.float64)
        self.assertFalse(t.requires_grad)
        u = as_tensor(t, requires_grad=True)
        self.assertTrue(u.requires_grad)
        u.data[0] = 5
        self.assertEqual(t[0].item(), 1.0)

    def test_parallel_map(self):
        self.assertEqual(parallel_map(_square, range(5)), [0, 1, 4, 9, 16])
        self.assertEqual(parallel_map(_square, range(5), jobs=2), [0, 1, 4, 9, 16])
        self.assertEqual(parallel_map(_square, []), [])

    def test_errors(self):
        err = DataFormatError("cannot parse price", line=12)
        self.assertEqual(str(err), "line 12: cannot parse price")
        self.assertEqual(err.line, 12)
        self.assertEqual(str(DataFormatError("empty file")), "empty file")
        for cls in [DataFormatError, ValidationError, EventCapExceededError]:
            self.assertTrue(issubclass(cls, MsdHawkesError))
        self.assertTrue(issubclass(MsdHawkesError, ValueError))
