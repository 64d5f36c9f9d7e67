"""
This file contains functions for testing functions in the domination.py script.
"""

import unittest
import os
import tempfile
import numpy as np
import pandas as pd
from rolf.scripts.flow_models import get_model, product_hyperbolic, sample_points, CAT_EXPONENT
from rolf.scripts.poincare import PoincareCocycle
from rolf.scripts.spectrum import batch_cocycles, gap_integral
from rolf.scripts.domination import Splitting, oseledets_splitting, splitting_from_bases, \
    domination_ratio, scan_orbit, scan_window, check_property_H, check_property_T, \
    check_property_E, recurrence_marks, uniqueness_defect, domination_map, start_domination, \
    LAMBDA, GAMMA
from rolf.scripts.utils import ValidationError, SplitDegenerate, NotDominated

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


class TestDomination(unittest.TestCase):
    """
    Tests splittings and domination verdicts on the cat suspension (dominated)
    and the irrational winding (not dominated).
    """
    @classmethod
    def setUpClass(cls):
        cls.cat = get_model('cat_suspension')
        cls.winding = get_model('irrational_winding')
        cls.cat_cocycle = batch_cocycles(cls.cat, [[0.3, 0.6, 0.1]], 0.01, 60)[0]
        cls.winding_cocycle = batch_cocycles(cls.winding, [[0.1, 0.2, 0.3]], 0.01, 60)[0]
        cls.cat_report = scan_orbit(cls.cat_cocycle, 1, [1, 2, 3])
        cls.winding_report = scan_orbit(cls.winding_cocycle, 1, [1, 2, 3])
        start, stop = scan_window(cls.cat_cocycle, 3)
        cls.cat_split = oseledets_splitting(cls.cat_cocycle, 1, start=start, stop=stop)

    def test_cat_lambda(self):
        self.assertEqual(set(self.cat_report.verdicts.values()), {LAMBDA})
        self.assertLess(self.cat_report.ratio_max[1], 0.5)
        self.assertGreater(self.cat_report.ratio_max[1], self.cat_report.ratio_max[3])
        self.assertEqual(self.cat_report.delta_marks[1], ())
        table = self.cat_report.table()
        self.assertEqual(list(table['m']), [1, 2, 3])

    def test_winding_gamma(self):
        self.assertEqual(set(self.winding_report.verdicts.values()), {GAMMA})
        self.assertAlmostEqual(self.winding_report.ratio_max[2], 1.0, places=8)
        self.assertEqual(len(self.winding_report.delta_marks[1]), len(self.winding_report.marks))

    def test_scan_window(self):
        self.assertEqual(scan_window(self.cat_cocycle, 3), (15, 42))
        with self.assertRaises(ValidationError):
            scan_window(self.cat_cocycle, 40)

    def test_invariance(self):
        self.assertLess(self.cat_split.invariance_defect(self.cat_cocycle), 1e-4)
        self.assertLess(self.cat_report.invariance_defect, 1e-4)

    def test_property_H(self):
        """
        An m-dominated splitting stays dominated for longer lengths.
        """
        result = check_property_H(self.cat_cocycle, self.cat_split, 1, [2, 4, 8])
        self.assertEqual(result, {2: True, 4: True, 8: True})
        with self.assertRaises(ValidationError):
            check_property_H(self.cat_cocycle, self.cat_split, 2, [1])

    def test_property_H_undominated(self):
        split = oseledets_splitting(self.winding_cocycle, 1, start=15, stop=42)
        with self.assertRaises(NotDominated):
            check_property_H(self.winding_cocycle, split, 1, [2])

    def test_property_T(self):
        """
        The cat eigenvectors are orthogonal, so the angle stays near pi / 2.
        """
        check = check_property_T(self.cat_report, 0.1)
        self.assertTrue(check.holds)
        self.assertGreater(check.value, 1.5)
        with self.assertRaises(NotDominated):
            check_property_T(self.winding_report, 0.1)

    def test_property_E(self):
        check = check_property_E(self.cat_cocycle, self.cat_split, 2, 0.5)
        self.assertTrue(check.holds)
        for mark in check.marks:
            self.assertTrue(self.cat_split.start <= mark <= self.cat_split.stop)

    def test_recurrence(self):
        marks = recurrence_marks(self.winding_cocycle, 10.0)
        self.assertEqual(marks, tuple(range(1, 61)))
        synthetic = PoincareCocycle.from_blocks(self.cat_cocycle.blocks)
        with self.assertRaises(ValidationError):
            recurrence_marks(synthetic, 0.1)

    def test_ratio_checks(self):
        with self.assertRaises(ValidationError):
            domination_ratio(self.cat_cocycle, self.cat_split, 30, 40)
        U = np.tile(np.array([[1.0], [0.0]]), (5, 1, 1))
        degenerate = Splitting(index=1, start=0, U=U, S=U.copy())
        with self.assertRaises(SplitDegenerate):
            domination_ratio(self.cat_cocycle, degenerate, 1, 0)

    def test_splitting_from_bases(self):
        """
        Carried bases of a diagonal cocycle stay on the axes.
        """
        coc = PoincareCocycle.from_blocks(np.tile(np.diag([0.5, 2.0]), (10, 1, 1)))
        split = splitting_from_bases(coc, [0.0, 1.0], [1.0, 0.0], 0, 10)
        self.assertEqual(split.stop, 10)
        self.assertAlmostEqual(abs(split.U_at(7)[1, 0]), 1.0)
        self.assertAlmostEqual(domination_ratio(coc, split, 2, 3), 1 / 16)
        self.assertAlmostEqual(split.angle_at(4), np.pi / 2)

    def test_uniqueness(self):
        self.assertLess(uniqueness_defect(self.cat_cocycle, 1, 30, 10), 1e-6)
        with self.assertRaises(ValidationError):
            uniqueness_defect(self.cat_cocycle, 1, 30, 20)

    def test_uniqueness_product(self):
        """
        Splittings estimated on disjoint windows agree for both dominated indices.
        """
        model = product_hyperbolic(extra=1)
        coc = batch_cocycles(model, sample_points(model, 1, np.random.default_rng(8)), 0.01, 80)[0]
        for k in model.metadata['dominated_indices']:
            self.assertLess(uniqueness_defect(coc, k, 40, 20), 1e-3)

    def test_product_index_two(self):
        """
        U holds the expanding and the neutral direction, S the contracting one,
        so the ratio is the m-th power of the cat contraction.
        """
        model = product_hyperbolic(extra=1)
        coc = batch_cocycles(model, sample_points(model, 1, np.random.default_rng(3)), 0.01, 80)[0]
        report = scan_orbit(coc, 2, [1, 2, 5])
        self.assertEqual(set(report.verdicts.values()), {LAMBDA})
        for m in (1, 2, 5):
            self.assertAlmostEqual(report.ratio_max[m], np.exp(-m * CAT_EXPONENT), places=4)

    def test_map_matches_metadata(self):
        """
        Only the indices a model declares dominated get Lambda verdicts.
        """
        for model in (product_hyperbolic(extra=1), product_hyperbolic(extra=2), self.winding):
            for k in range(1, model.dim - 1):
                table = domination_map(model, k, [1, 2], 2, 80, seed=6)
                expected = LAMBDA if k in model.metadata['dominated_indices'] else GAMMA
                self.assertEqual(set(table['verdict']), {expected})

    def test_gap_skips_dominated(self):
        model = product_hyperbolic(extra=1)
        estimate = gap_integral(model, 2, 3, 80, [1, 2], seed=1)
        self.assertEqual(estimate.n_undominated, 0)
        self.assertEqual(estimate.value, 0.0)

    def test_index_range(self):
        with self.assertRaises(ValidationError):
            oseledets_splitting(self.cat_cocycle, 2)

    def test_domination_map(self):
        table = domination_map(self.cat, 1, [1, 2], 3, 40, seed=4)
        self.assertEqual(len(table), 6)
        self.assertEqual(set(table['verdict']), {LAMBDA})
        self.assertEqual(list(table.columns), ['point', 'x0', 'x1', 'x2', 'm', 'verdict',
                                               'ratio_max'])

    def test_start_domination(self):
        with tempfile.TemporaryDirectory() as folder:
            start_domination({'fp': folder, 'model': 'cat_suspension', 'horizon': 40,
                              'samples': 2, 'm_grid': [1, 2], 'k': [1]})
            table = pd.read_csv(os.path.join(folder, 'domination.tsv'), sep='\t')
            self.assertEqual(len(table), 4)
            self.assertTrue(os.path.isfile(os.path.join(folder, 'domination.txt')))


if __name__ == '__main__':
    unittest.main()
