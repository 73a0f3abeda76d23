import math
import unittest

from app.exceptions import ConfigurationError, DomainError
from app.resonance import asymptotics
from app.resonance.kernels import GramSettings, build_gram_set
from app.resonance.matching import truncation_report
from app.resonance.models import Hole, HoleShape, Seed, SlabConfig
from app.resonance.solver import (
    count_roots_in_disk,
    expand_parities,
    fabry_perot_seeds,
    find_resonance,
    find_resonances,
    quality_factor,
    resonance_sweep,
    rouche_disk,
    truncation_shift,
)


def square_slab(h=0.02, M=6, centers=((0.0, 0.0),), parity='even'):
    holes = tuple(Hole(center=center, shape=HoleShape(kind='square')) for center in centers)
    return SlabConfig(l=1.0, h=h, holes=holes, M=M, parity=parity)


class HelperTests(unittest.TestCase):
    def test_quality_factor(self):
        self.assertAlmostEqual(quality_factor(2.0 - 2.0j), 0.5)
        with self.assertRaises(DomainError):
            quality_factor(2.0 + 0.1j)

    def test_expand_parities(self):
        self.assertEqual(expand_parities('both'), ('even', 'odd'))
        self.assertEqual(expand_parities('odd'), ('odd',))
        with self.assertRaises(ConfigurationError):
            expand_parities('all')

    def test_rouche_disk(self):
        config = square_slab(h=0.04)
        center, radius = rouche_disk(config, 1, 'odd')
        self.assertAlmostEqual(center, 2.0 * math.pi)
        self.assertAlmostEqual(radius, 0.2)

    def test_seeds_need_small_aperture(self):
        config = square_slab(h=0.05)
        with self.assertRaises(ConfigurationError):
            fabry_perot_seeds(config, [4])

    def test_fallback_seeds(self):
        config = square_slab(centers=((0.0, 0.0), (0.5, 0.0)), h=0.01)
        seeds = fabry_perot_seeds(config, [1], parities=['even', 'odd'])
        self.assertEqual(len(seeds), 4)
        self.assertEqual({seed.order for seed in seeds}, {1, 2})
        self.assertTrue(all(seed.k.imag < 0 for seed in seeds))


class SingleHoleResonanceTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = square_slab()
        cls.grams = build_gram_set(cls.config, GramSettings())
        cls.constants = asymptotics.shape_constants(cls.grams, cls.config.M)
        cls.resonances = find_resonances(cls.config, cls.grams, [1], ['even', 'odd'], cls.constants)

    def test_one_root_per_order(self):
        self.assertEqual(len(self.resonances), 2)
        self.assertEqual(sorted(item.order for item in self.resonances), [1, 2])

    def test_roots_are_resonances(self):
        for resonance in self.resonances:
            with self.subTest(order=resonance.order):
                eps = resonance.order * math.pi * self.config.h
                self.assertLess(resonance.k.imag, 0.0)
                self.assertLess(abs(resonance.k - resonance.order * math.pi), math.sqrt(self.config.h))
                self.assertGreater(resonance.k.imag, -10.0 * eps * eps)
                self.assertLess(resonance.residual, 1e-10)
                self.assertEqual(resonance.provenance, 'direct')

    def test_quality_factor_law(self):
        for resonance in self.resonances:
            with self.subTest(order=resonance.order):
                scaled = resonance.Q * 2.0 * resonance.order * self.config.h ** 2
                self.assertAlmostEqual(scaled, 1.0, delta=0.25)

    def test_agrees_with_closed_form(self):
        for resonance in self.resonances:
            with self.subTest(order=resonance.order):
                eps = resonance.order * math.pi * self.config.h
                predicted = asymptotics.single_hole_asymptotic(
                    self.constants[0], self.config.l, self.config.h, resonance.m, resonance.parity,
                )
                self.assertLess(abs(resonance.k - predicted), eps * eps)

    def test_root_count_in_disk(self):
        center, radius = rouche_disk(self.config, 1, 'even')
        self.assertEqual(count_roots_in_disk(self.config, self.grams, center, radius, 'even'), 1)

    def test_newton_from_fallback_seed(self):
        seed = Seed(m=1, parity='even', branch=1, k=complex(math.pi, -0.001))
        resonance = find_resonance(self.config, self.grams, seed)
        target = [item for item in self.resonances if item.order == 1][0]
        self.assertLess(abs(resonance.k - target.k), 1e-9)


class TwoHoleResonanceTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = square_slab(h=0.01, centers=((0.0, 0.0), (0.5, 0.0)))
        cls.grams = build_gram_set(cls.config, GramSettings())
        cls.constants = asymptotics.shape_constants(cls.grams, cls.config.M)

    def test_two_branches(self):
        resonances = find_resonances(self.config, self.grams, [1], ['even'], self.constants)
        self.assertEqual([item.branch for item in resonances], [1, 2])
        self.assertGreater(abs(resonances[0].k - resonances[1].k), 1e-8)
        self.assertLessEqual(resonances[0].k.real, resonances[1].k.real)
        center, radius = rouche_disk(self.config, 1, 'even')
        self.assertEqual(count_roots_in_disk(self.config, self.grams, center, radius, 'even'), 2)


class SweepTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.rows = resonance_sweep(square_slab(M=20), [0.02, 0.01, 0.005], [1], ['even', 'odd'], GramSettings())

    def test_rows_and_csv(self):
        self.assertEqual(len(self.rows), 6)
        self.assertEqual(len(self.rows[1].csv_row()), len(self.rows[1].CSV_HEADER))
        self.assertEqual(sum(row.error_ratio is None for row in self.rows), 2)

    def test_error_is_third_order(self):
        for row in self.rows:
            if row.error_ratio is None:
                continue
            with self.subTest(parity=row.parity, h=row.h):
                self.assertGreaterEqual(row.error_ratio, 5.0)
                self.assertLessEqual(row.error_ratio, 12.0)

    def test_quality_factor_law_at_smallest_h(self):
        for row in self.rows:
            if row.h != 0.005:
                continue
            with self.subTest(parity=row.parity):
                self.assertGreaterEqual(row.Q_scaled, 0.9)
                self.assertLessEqual(row.Q_scaled, 1.1)


class ShapeIndependenceTests(unittest.TestCase):
    def test_square_and_disk_share_the_quality_factor(self):
        factors = {}
        for kind in ('square', 'disk'):
            config = SlabConfig(l=1.0, h=0.005, holes=(Hole(center=(0.0, 0.0), shape=HoleShape(kind=kind)),), M=20)
            grams = build_gram_set(config, GramSettings())
            constants = asymptotics.shape_constants(grams, config.M)
            for resonance in find_resonances(config, grams, [1], ['even', 'odd'], constants):
                factors[kind, resonance.parity] = resonance.Q
        for parity in ('even', 'odd'):
            with self.subTest(parity=parity):
                square, disk = factors['square', parity], factors['disk', parity]
                self.assertLess(abs(square - disk) / square, 0.05)


class CoupledHoleTests(unittest.TestCase):
    def test_splitting_matches_closed_form(self):
        config = square_slab(h=0.01, M=20, centers=((0.0, 0.0), (1.0, 0.0)))
        grams = build_gram_set(config, GramSettings())
        constants = asymptotics.shape_constants(grams, config.M)
        direct = find_resonances(config, grams, [1], ['even'], constants)
        predicted = asymptotics.multi_hole_asymptotic(constants, config.centers, config.l, config.h, 1, 'even')
        direct_split = abs(direct[1].k - direct[0].k)
        predicted_split = abs(predicted[1].k - predicted[0].k)
        self.assertLess(abs(direct_split - predicted_split) / predicted_split, 0.2)

    def test_three_holes_give_three_roots(self):
        config = square_slab(h=0.01, centers=((0.0, 0.0), (1.0, 0.0), (2.0, 0.0)))
        grams = build_gram_set(config, GramSettings())
        for parity in ('even', 'odd'):
            with self.subTest(parity=parity):
                center, radius = rouche_disk(config, 1, parity)
                self.assertEqual(count_roots_in_disk(config, grams, center, radius, parity), 3)


class TruncationTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = square_slab(h=0.01, M=40)
        cls.grams = build_gram_set(cls.config, GramSettings())
        constants = asymptotics.shape_constants(cls.grams, 20)
        cls.seed = fabry_perot_seeds(cls.config, [1], constants, ['even'])[0]

    def root(self, M):
        return find_resonance(self.config, self.grams.truncated(M), self.seed, 'even').k

    def test_self_convergence(self):
        k10, k20, k40 = self.root(10), self.root(20), self.root(40)
        self.assertLess(abs(k40 - k20) / abs(k40), 1e-4)
        self.assertGreater(abs(k20 - k10), abs(k40 - k20))

    def test_higher_mode_block_stays_conditioned(self):
        rows = truncation_report(self.config, self.grams, self.seed.k, [10, 20, 40], 'even')
        for row in rows:
            with self.subTest(M=row['M']):
                self.assertLess(row['a_condition'], 1e4)

    def test_reported_shift(self):
        grams = self.grams.truncated(20)
        resonance = find_resonance(self.config, grams, self.seed, 'even')
        shift = truncation_shift(self.config, grams, resonance)
        self.assertIsNotNone(shift)
        self.assertGreater(shift, 0.0)
        self.assertLess(shift, 1e-4)
        self.assertEqual(resonance.to_dict()['truncation_shift'], None)
        self.assertIsNone(truncation_shift(self.config, grams.truncated(1), resonance))
