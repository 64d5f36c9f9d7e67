"""
This file contains functions for testing functions in the classify.py script.
"""

import unittest
import os
import tempfile
import numpy as np
import pandas as pd
from rolf.scripts.flow_models import get_model
from rolf.scripts.poincare import PoincareCocycle
from rolf.scripts.classify import classify_points, classify_cocycle, dominated_index, \
    verdict_fractions, start_classify, ClassificationRecord, Z_LIKE, D_LIKE, UNRESOLVED

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


class TestClassify(unittest.TestCase):
    """
    Tests the Z-like / D-like verdicts on the winding (all exponents zero)
    and the cat suspension (dominated everywhere).
    """
    @classmethod
    def setUpClass(cls):
        cls.cat = get_model('cat_suspension')
        cls.winding = get_model('irrational_winding')
        cls.cat_records = classify_points(cls.cat, 4, 40, [1], [1, 2], seed=5)
        cls.winding_records = classify_points(cls.winding, 4, 30, [1], [1, 2], seed=5)

    def test_winding_zero(self):
        self.assertEqual({record.verdict for record in self.winding_records}, {Z_LIKE})
        for record in self.winding_records:
            self.assertLess(record.max_exponent, record.zero_bound)
            self.assertAlmostEqual(record.zero_bound, 10 / 30)
            self.assertIsNone(record.k)

    def test_cat_dominated(self):
        self.assertEqual({record.verdict for record in self.cat_records}, {D_LIKE})
        self.assertEqual({(record.k, record.m) for record in self.cat_records}, {(1, 1)})

    def test_one_verdict_per_point(self):
        self.assertEqual([record.point for record in self.cat_records], [0, 1, 2, 3])

    def test_unresolved(self):
        """
        A single expanding block followed by identities has a nonzero exponent
        but no dominated window.
        """
        blocks = np.tile(np.eye(2), (60, 1, 1))
        blocks[0] = np.diag([np.exp(30.0), np.exp(-30.0)])
        verdict, largest, bound, found = classify_cocycle(PoincareCocycle.from_blocks(blocks),
                                                          [1], [1, 2])
        self.assertEqual(verdict, UNRESOLVED)
        self.assertAlmostEqual(largest, 0.5)
        self.assertIsNone(found)

    def test_index_outside_fiber(self):
        coc = PoincareCocycle.from_blocks(np.tile(np.diag([2.0, 0.5]), (40, 1, 1)))
        self.assertIsNone(dominated_index(coc, [2, 5], [1]))
        self.assertEqual(dominated_index(coc, [2, 1], [1]), (1, 1))

    def test_workers(self):
        """
        Chunks spread over processes give the records of a serial run.
        """
        serial = classify_points(self.winding, 20, 20, [1], [1], seed=8)
        parallel = classify_points(self.winding, 20, 20, [1], [1], seed=8, workers=2)
        self.assertEqual(serial, parallel)

    def test_fractions(self):
        table = verdict_fractions(self.cat_records)
        self.assertAlmostEqual(table['fraction'].sum(), 1.0)
        row = table[table['verdict'] == D_LIKE].iloc[0]
        self.assertEqual(row['fraction'], 1.0)
        self.assertEqual(row['stderr'], 0.0)
        records = [ClassificationRecord(point=i, state=(0.0,), verdict=verdict, max_exponent=0.0,
                                        zero_bound=0.1)
                   for i, verdict in enumerate([Z_LIKE, Z_LIKE, D_LIKE, UNRESOLVED])]
        table = verdict_fractions(records).set_index('verdict')
        self.assertAlmostEqual(table.loc[Z_LIKE, 'stderr'], np.sqrt(0.25 / 4))

    def test_start_classify(self):
        with tempfile.TemporaryDirectory() as folder:
            start_classify({'fp': folder, 'model': 'irrational_winding', 'horizon': 20,
                            'samples': 3, 'm_grid': [1], 'k': [1]})
            table = pd.read_csv(os.path.join(folder, 'classify.tsv'), sep='\t')
            self.assertEqual(list(table['verdict']), [Z_LIKE] * 3)
            self.assertTrue(os.path.isfile(os.path.join(folder, 'classify.txt')))


if __name__ == '__main__':
    unittest.main()
