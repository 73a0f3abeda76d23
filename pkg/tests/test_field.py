import math
import unittest
from dataclasses import replace

from app.exceptions import ConfigurationError, DomainError
from app.resonance import asymptotics
from app.resonance.field import (
    aperture_mismatch,
    axis_profile,
    enhancement_exponents,
    evaluate_total_field,
    field_sample,
    solve_incident,
)
from app.resonance.kernels import GramSettings, build_gram_set
from app.resonance.models import Hole, HoleShape, SlabConfig
from app.resonance.solver import find_resonances


def square_slab(h=0.01, M=6, parity='even'):
    holes = (Hole(center=(0.0, 0.0), shape=HoleShape(kind='square')),)
    return SlabConfig(l=1.0, h=h, holes=holes, M=M, parity=parity)


class IncidentSolveTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = square_slab()
        cls.grams = build_gram_set(cls.config, GramSettings())
        constants = asymptotics.shape_constants(cls.grams, cls.config.M)
        cls.resonance = find_resonances(cls.config, cls.grams, [1], ['even'], constants)[0]
        cls.resonant = solve_incident(cls.config, cls.grams, cls.resonance.k.real, 'even')
        cls.odd = solve_incident(cls.config, cls.grams, cls.resonance.k.real, 'odd')

    def test_residual(self):
        self.assertLess(self.resonant.residual, 1e-10)
        self.assertEqual(self.resonant.a.shape, (1, self.config.M))

    def test_resonant_amplitude(self):
        self.assertAlmostEqual(abs(self.resonant.b0[0]) * self.config.h, 1.0 / math.pi, delta=0.3 / math.pi)

    def test_reflection_symmetry(self):
        upper = field_sample(self.resonant, self.config, (0.001, 0.002, -0.2)).value
        lower = field_sample(self.resonant, self.config, (0.001, 0.002, -0.8)).value
        self.assertLess(abs(upper - lower), 1e-9 * abs(upper))
        upper = field_sample(self.odd, self.config, (0.001, 0.002, -0.2)).value
        lower = field_sample(self.odd, self.config, (0.001, 0.002, -0.8)).value
        self.assertLess(abs(upper + lower), 1e-9 * abs(upper))

    def test_sample_metadata(self):
        sample = field_sample(self.resonant, self.config, (0.0, 0.0, -0.5))
        self.assertEqual(sample.hole, 1)
        self.assertEqual(sample.point, (0.0, 0.0, -0.5))
        self.assertGreaterEqual(sample.tail_bound, 0.0)
        self.assertLess(sample.tail_bound, abs(sample.value))

    def test_domain_checks(self):
        with self.assertRaises(DomainError):
            field_sample(self.resonant, self.config, (0.0, 0.0, 0.1))
        with self.assertRaises(DomainError):
            field_sample(self.resonant, self.config, (0.5, 0.0, -0.5))
        with self.assertRaises(DomainError):
            solve_incident(self.config, self.grams, 500.0)

    def test_total_field_and_profile(self):
        point = (0.0, 0.0, -0.3)
        total = evaluate_total_field([self.resonant, self.odd], self.config, point)
        parts = field_sample(self.resonant, self.config, point).value + field_sample(self.odd, self.config, point).value
        self.assertAlmostEqual(total, parts, places=12)
        profile = axis_profile([self.resonant], self.config, count=16)
        self.assertEqual(len(profile), 16)
        self.assertTrue(all(-1.0 < x3 < 0.0 for x3, _ in profile))

    def test_aperture_traces_agree(self):
        self.assertLess(aperture_mismatch(self.config, self.grams, [self.resonant, self.odd]), 1e-8)
        for solution in (self.resonant, self.odd):
            with self.subTest(parity=solution.parity):
                self.assertLess(aperture_mismatch(self.config, self.grams, [solution]), 1e-8)

    def test_aperture_mismatch_detects_bad_coefficients(self):
        perturbed = replace(self.resonant, b0=self.resonant.b0 * 1.1)
        self.assertGreater(aperture_mismatch(self.config, self.grams, [perturbed, self.odd]), 1e-4)
        with self.assertRaises(ConfigurationError):
            aperture_mismatch(self.config, self.grams, [])
        with self.assertRaises(ConfigurationError):
            aperture_mismatch(self.config, self.grams, [self.resonant, replace(self.odd, k0=self.odd.k0 + 0.1)])


class EnhancementTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.result = enhancement_exponents(square_slab(), [0.02, 0.01, 0.005], 1, GramSettings(), 'even')

    def test_resonant_slopes(self):
        self.assertAlmostEqual(self.result['slope_b0'], -1.0, delta=0.2)
        self.assertAlmostEqual(self.result['slope_interior'], -2.0, delta=0.3)
        self.assertAlmostEqual(self.result['slope_near_aperture'], -1.0, delta=0.3)

    def test_off_resonance_control(self):
        self.assertGreater(self.result['control_slope_b0'], -0.1)
        self.assertGreater(self.result['control_slope_interior'], -0.1)

    def test_rows(self):
        self.assertEqual([row['h'] for row in self.result['rows']], [0.02, 0.01, 0.005])

    def test_needs_decreasing_h(self):
        with self.assertRaises(ConfigurationError):
            enhancement_exponents(square_slab(), [0.01, 0.02, 0.005], 1)
        with self.assertRaises(ConfigurationError):
            enhancement_exponents(square_slab(), [0.02, 0.01], 1)
