import cmath
import math
import tempfile
import unittest

import numpy as np

from app.exceptions import ConfigurationError, OutOfRegimeError
from app.resonance import kernels, storage
from app.resonance.eigenbasis import build_eigenbasis
from app.resonance.kernels import GramSettings, cross_gram, single_hole_gram
from app.resonance.models import HoleLayout, HoleShape


class SquareGramTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.basis = build_eigenbasis(HoleShape(kind='square'), 6)
        cls.gram = single_hole_gram(cls.basis, GramSettings())

    def test_constant_mode_entry(self):
        # (1/2pi) times the mean inverse distance between two points of the unit square
        expected = (4.0 * math.log(1.0 + math.sqrt(2.0)) + 4.0 * (1.0 - math.sqrt(2.0)) / 3.0) / (2.0 * math.pi)
        self.assertAlmostEqual(expected, 0.473198, places=5)
        self.assertAlmostEqual(float(self.gram.s0[0, 0]), expected, delta=1e-5)

    def test_s0_symmetric_positive_definite(self):
        s0 = self.gram.s0
        np.testing.assert_allclose(s0, s0.T, atol=1e-14)
        self.assertGreater(float(np.linalg.eigvalsh(s0).min()), 0.0)
        self.assertLessEqual(self.gram.estimate, GramSettings().tol_quad)

    def test_parity_zeros(self):
        # modes (1, 0) and (0, 0) have opposite parity in x1
        self.assertEqual(self.basis.labels[1], (1, 0))
        self.assertEqual(float(self.gram.s0[0, 1]), 0.0)

    def test_first_moment_is_exact(self):
        first = self.gram.moments[1]
        self.assertAlmostEqual(float(first[0, 0]), 1.0 / (2.0 * math.pi), places=12)
        self.assertLess(float(np.max(np.abs(first[1:, :]))), 1e-10)

    def test_d_is_complex_symmetric(self):
        d = self.gram.d(0.05 - 0.001j)
        np.testing.assert_allclose(d, d.T, atol=1e-14)
        np.testing.assert_allclose(self.gram.d(0.0), self.gram.s0)

    def test_d_splits_into_s0_and_remainder(self):
        eps = 0.03
        np.testing.assert_allclose(self.gram.d(eps), self.gram.s0 + self.gram.remainder(eps), atol=1e-14)
        r0 = self.gram.r0(eps)
        first = 1j * eps * self.gram.moments[1]
        np.testing.assert_allclose(self.gram.remainder(eps), first + eps * eps * r0, atol=1e-14)

    def test_regime_guards(self):
        with self.assertRaises(OutOfRegimeError):
            self.gram.d(1.0)
        with self.assertRaises(OutOfRegimeError):
            self.gram.r0(0.0)

    def test_truncation_is_leading_block(self):
        smaller = self.gram.truncated(3)
        np.testing.assert_allclose(smaller.s0, self.gram.s0[:4, :4])
        self.assertEqual(smaller.mode_count, 3)


class DiskGramTests(unittest.TestCase):
    def test_s0_symmetric_positive_definite(self):
        basis = build_eigenbasis(HoleShape(kind='disk'), 4)
        s0 = single_hole_gram(basis, GramSettings()).s0
        np.testing.assert_allclose(s0, s0.T, atol=1e-14)
        self.assertGreater(float(np.linalg.eigvalsh(s0).min()), 0.0)
        # disk of radius R: the double integral of 1/|x - y| is 16 pi R^3 / 3, R = pi^(-1/2)
        self.assertAlmostEqual(float(s0[0, 0]), 8.0 / (3.0 * math.pi ** 1.5), delta=1e-5)


class CrossGramTests(unittest.TestCase):
    def setUp(self):
        self.basis = build_eigenbasis(HoleShape(kind='square'), 3)
        self.layout = HoleLayout(centers=((0.0, 0.0), (1.0, 0.0)), h=0.01)

    def test_reciprocity(self):
        k = 3.0 - 0.01j
        forward = cross_gram(self.layout, self.basis, self.basis, 0, 1, k)
        backward = cross_gram(self.layout, self.basis, self.basis, 1, 0, k)
        np.testing.assert_allclose(forward, backward.T, rtol=1e-12, atol=1e-16)

    def test_far_field_leading_term(self):
        k = 3.0
        block = cross_gram(self.layout, self.basis, self.basis, 0, 1, k)
        expected = self.layout.h * cmath.exp(1j * k) / (2.0 * math.pi)
        self.assertLess(abs(block[0, 0] - expected) / abs(expected), 1e-3)

    def test_rejects_close_holes(self):
        close = HoleLayout(centers=((0.0, 0.0), (0.1, 0.0)), h=0.01)
        with self.assertRaises(ConfigurationError):
            cross_gram(close, self.basis, self.basis, 0, 1, 3.0)
        with self.assertRaises(ConfigurationError):
            cross_gram(self.layout, self.basis, self.basis, 0, 0, 3.0)


class GramCacheTests(unittest.TestCase):
    def tearDown(self):
        kernels.clear_memo()

    def test_tables_reload_from_disk(self):
        basis = build_eigenbasis(HoleShape(kind='square'), 2)
        with tempfile.TemporaryDirectory() as tmpdir:
            settings = GramSettings(cache_dir=tmpdir)
            kernels.clear_memo()
            built = single_hole_gram(basis, settings)
            self.assertIsNotNone(storage.load_gram_tables(tmpdir, built.key))
            kernels.clear_memo()
            loaded = single_hole_gram(basis, settings)
        self.assertEqual(loaded.key, built.key)
        np.testing.assert_array_equal(loaded.moments, built.moments)

    def test_key_depends_on_settings(self):
        self.assertNotEqual(
            storage.content_key({'shape': 'square', 'quad_order': 12}),
            storage.content_key({'shape': 'square', 'quad_order': 16}),
        )


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


class SmallEpsilonTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.gram = single_hole_gram(build_eigenbasis(HoleShape(kind='square'), 6), GramSettings())

    def test_constant_entry_remainder_is_second_order(self):
        eps_values = [1e-2, 5e-3, 2.5e-3]
        gaps = []
        for eps in eps_values:
            d = self.gram.d(eps)
            gaps.append(abs(d[0, 0] - self.gram.s0[0, 0] - 1j * eps * self.gram.moments[1][0, 0]))
        self.assertAlmostEqual(_slope(eps_values, gaps), 2.0, delta=0.01)

    def test_higher_entries_differ_from_s0_at_second_order(self):
        mask = np.ones(self.gram.s0.shape, dtype=bool)
        mask[0, 0] = False
        ratios = []
        for eps in (1e-1, 1e-2, 1e-3):
            gap = np.abs(self.gram.d(eps) - self.gram.s0)[mask]
            ratios.append(float(gap.max()) / eps ** 2)
        self.assertLess(max(ratios), 1.0)
        self.assertLess(max(ratios) / min(ratios), 1.2)

    def test_r0_is_bounded_and_tends_to_half_second_moment(self):
        norms = [float(np.max(np.abs(self.gram.r0(eps)))) for eps in (1e-1, 1e-2, 1e-3, 1e-4)]
        self.assertLess(max(norms) / min(norms), 1.2)
        limit = -0.5 * self.gram.moments[2][0, 0]
        self.assertLess(abs(self.gram.r0(1e-4)[0, 0] - limit) / abs(limit), 1e-3)


class CrossGramScalingTests(unittest.TestCase):
    def test_entries_scale_with_h(self):
        basis = build_eigenbasis(HoleShape(kind='square'), 6)
        k = 3.0
        h_values = [0.02, 0.01, 0.005]
        higher = []
        remainders = []
        for h in h_values:
            layout = HoleLayout(centers=((0.0, 0.0), (1.0, 0.0)), h=h)
            block = cross_gram(layout, basis, basis, 0, 1, k)
            others = np.abs(block).copy()
            others[0, 0] = 0.0
            higher.append(float(others.max()))
            remainders.append(abs(block[0, 0] - h * cmath.exp(1j * k) / (2.0 * math.pi)))
        self.assertAlmostEqual(_slope(h_values, higher), 2.0, delta=0.05)
        self.assertGreaterEqual(_slope(h_values, remainders), 1.9)
