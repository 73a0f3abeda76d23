import math
import unittest

import numpy as np

from app.exceptions import ConfigurationError, DomainError, OutOfRegimeError
from app.resonance import asymptotics
from app.resonance.eigenbasis import build_eigenbasis
from app.resonance.kernels import GramSettings, single_hole_gram
from app.resonance.models import HoleShape, ShapeConstants


CONSTANTS = ShapeConstants(s0_11=0.473198, alpha=0.12, M_used=10, alpha_convergence=0.0)


class ClosedFormTests(unittest.TestCase):
    def test_fabry_perot_points(self):
        self.assertAlmostEqual(asymptotics.fabry_perot_point(1, 'even'), math.pi)
        self.assertAlmostEqual(asymptotics.fabry_perot_point(1, 'odd'), 2.0 * math.pi)
        self.assertAlmostEqual(asymptotics.fabry_perot_point(3, 'even'), 5.0 * math.pi)

    def test_pi_function(self):
        eps = 0.05
        value = asymptotics.pi_function(CONSTANTS, eps)
        self.assertAlmostEqual(value.real, eps * eps / (2.0 * math.pi))
        self.assertAlmostEqual(value.imag, (CONSTANTS.alpha - CONSTANTS.s0_11) * eps)
        with self.assertRaises(OutOfRegimeError):
            asymptotics.pi_function(CONSTANTS, 1.0)

    def test_single_hole_leading_terms(self):
        l, h = 1.0, 0.01
        for parity in ('even', 'odd'):
            with self.subTest(parity=parity):
                k_m = asymptotics.fabry_perot_point(1, parity)
                eps = k_m * h / l
                k = asymptotics.single_hole_asymptotic(CONSTANTS, l, h, 1, parity)
                shift = 2.0 * eps * (CONSTANTS.alpha - CONSTANTS.s0_11)
                self.assertAlmostEqual(k.real * l, k_m + shift, delta=4.0 * eps ** 2)
                self.assertAlmostEqual(k.imag * l, -eps * eps / math.pi, delta=eps ** 3)

    def test_single_hole_regime(self):
        with self.assertRaises(OutOfRegimeError):
            asymptotics.single_hole_asymptotic(CONSTANTS, 1.0, 0.1, 1, 'even')
        with self.assertRaises(DomainError):
            asymptotics.single_hole_asymptotic(CONSTANTS, 0.0, 0.01, 1, 'even')


class CouplingTests(unittest.TestCase):
    def test_coupling_entries(self):
        coupling = asymptotics.coupling_matrix([(0.0, 0.0), (1.0, 0.0)], math.pi)
        self.assertAlmostEqual(coupling.entries[0, 1].real, -1.0 / (2.0 * math.pi ** 2), places=12)
        self.assertAlmostEqual(coupling.entries[0, 1].real, -0.050660, places=6)
        self.assertEqual(coupling.entries[0, 0], 0)
        np.testing.assert_allclose(coupling.entries, coupling.entries.T)

    def test_single_hole_has_no_coupling(self):
        coupling = asymptotics.coupling_matrix([(0.0, 0.0)], math.pi)
        self.assertEqual(coupling.entries.shape, (0, 0))

    def test_coupling_rejects_shared_centers(self):
        with self.assertRaises(ConfigurationError):
            asymptotics.coupling_matrix([(0.0, 0.0), (0.0, 0.0)], 1.0)

    def test_q_leading(self):
        self.assertAlmostEqual(asymptotics.q_leading(1, 0.01), 5000.0)
        self.assertAlmostEqual(asymptotics.q_leading(2, 0.01), 2500.0)
        self.assertLess(asymptotics.q_leading(1, 0.01, 0.1), 5000.0)
        with self.assertRaises(DomainError):
            asymptotics.q_leading(0, 0.01)
        with self.assertRaises(OutOfRegimeError):
            asymptotics.q_leading(1, 0.01, -1.0)


class MultiHoleTests(unittest.TestCase):
    def test_single_hole_matches_closed_form(self):
        predictions = asymptotics.multi_hole_asymptotic([CONSTANTS], [(0.0, 0.0)], 1.0, 0.01, 1, 'even')
        self.assertEqual(len(predictions), 1)
        expected = asymptotics.single_hole_asymptotic(CONSTANTS, 1.0, 0.01, 1, 'even')
        self.assertAlmostEqual(predictions[0].k, expected)
        self.assertAlmostEqual(predictions[0].q_leading, 5000.0)

    def test_order_indexing_without_parity(self):
        by_order = asymptotics.multi_hole_asymptotic([CONSTANTS], [(0.0, 0.0)], 1.0, 0.01, 2)
        by_parity = asymptotics.multi_hole_asymptotic([CONSTANTS], [(0.0, 0.0)], 1.0, 0.01, 1, 'odd')
        self.assertAlmostEqual(by_order[0].k, by_parity[0].k)

    def test_two_identical_holes_split(self):
        centers = [(0.0, 0.0), (0.5, 0.0)]
        predictions = asymptotics.multi_hole_asymptotic([CONSTANTS, CONSTANTS], centers, 1.0, 0.01, 1, 'even')
        self.assertEqual([item.branch for item in predictions], [1, 2])
        self.assertLessEqual(predictions[0].k.real, predictions[1].k.real)
        eps = math.pi * 0.01
        for prediction in predictions:
            with self.subTest(branch=prediction.branch):
                self.assertLess(prediction.k.imag, 0.0)
                self.assertIsNotNone(prediction.remark_k)
                self.assertLess(abs(prediction.k - prediction.remark_k), 10.0 * eps ** 3)
        splitting = abs(predictions[0].k - predictions[1].k)
        self.assertGreater(splitting, 0.0)
        self.assertLess(splitting, 4.0 * eps * eps)

    def test_needs_constants_per_hole(self):
        with self.assertRaises(ConfigurationError):
            asymptotics.multi_hole_asymptotic([CONSTANTS], [(0.0, 0.0), (1.0, 0.0)], 1.0, 0.01, 1, 'even')


class ShapeConstantTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.basis = build_eigenbasis(HoleShape(kind='square'), 8)
        cls.gram = single_hole_gram(cls.basis, GramSettings())

    def test_alpha_is_nonnegative(self):
        constants = asymptotics.alpha_constant(self.basis, self.gram, 8)
        self.assertGreaterEqual(constants.alpha, 0.0)
        self.assertAlmostEqual(constants.s0_11, float(self.gram.s0[0, 0]))
        self.assertEqual(constants.M_used, 8)
        self.assertGreaterEqual(constants.alpha_convergence, 0.0)

    def test_alpha_grows_with_modes(self):
        smaller = asymptotics.alpha_constant(self.basis, self.gram, 4).alpha
        larger = asymptotics.alpha_constant(self.basis, self.gram, 8).alpha
        self.assertGreaterEqual(larger, smaller - 1e-12)

    def test_witnesses_positive(self):
        values = asymptotics.alpha_witnesses(self.basis, self.gram.s0, 8)
        self.assertEqual(len(values), 5)
        self.assertTrue(all(value > 0 for value in values))

    def test_truncation_bounds(self):
        with self.assertRaises(ConfigurationError):
            asymptotics.alpha_constant(self.basis, self.gram, 1)
        with self.assertRaises(ConfigurationError):
            asymptotics.alpha_constant(self.basis, self.gram, 9)
