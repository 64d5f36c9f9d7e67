"""
This file contains functions for testing functions in the spectrum.py script.
"""

import unittest
import os
import tempfile
import numpy as np
import pandas as pd
from rolf.scripts.flow_models import get_model, product_hyperbolic, sample_points, CAT_EXPONENT
from rolf.scripts.poincare import PoincareCocycle
from rolf.scripts.spectrum import mgs_qr, qr_sweep, adjoint_sweep, lyapunov_exponents, \
    compound_matrix, exterior_power, sigma_k, time_reversal_defect, log_wedge_norms, \
    batch_cocycles, subadditivity_violations, le_k, gap_integral, start_exponents, start_lek
from rolf.scripts.utils import IllConditioned, ValidationError

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


class TestSpectrum(unittest.TestCase):
    """
    Tests QR accumulation, exterior powers and the LE_k estimator.
    """
    @classmethod
    def setUpClass(cls):
        cls.cat = get_model('cat_suspension')
        cls.winding = get_model('irrational_winding')
        cls.cat_cocycle = batch_cocycles(cls.cat, [[0.3, 0.6, 0.1]], 0.01, 100)[0]
        cls.winding_cocycle = batch_cocycles(cls.winding, [[0.1, 0.2, 0.3]], 0.01, 50)[0]
        cls.diagonal = PoincareCocycle.from_blocks(np.tile(np.diag([np.exp(0.5), np.exp(-0.5)]),
                                                           (40, 1, 1)))
        rng = np.random.default_rng(11)
        cls.random3 = PoincareCocycle.from_blocks(rng.normal(size=(60, 3, 3)) + 2 * np.eye(3))

    def test_mgs_qr(self):
        matrix = np.array([[2.0, 1.0], [1.0, 3.0], [0.5, -1.0]])
        q, r = mgs_qr(matrix)
        np.testing.assert_allclose(q @ r, matrix, atol=1e-14)
        np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-14)
        self.assertTrue(np.all(np.diag(r) > 0))
        with self.assertRaises(IllConditioned):
            mgs_qr(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_sweeps(self):
        """
        Checks that the adjoint sweep finds the least expanded direction of a diagonal cocycle.
        """
        q, logs, history = qr_sweep(self.diagonal.blocks, record=True)
        self.assertEqual(len(history), 41)
        np.testing.assert_allclose(logs.sum(axis=0), [20.0, -20.0])
        basis, marks = adjoint_sweep(self.diagonal.blocks, record=True)
        self.assertEqual(len(marks), 41)
        self.assertAlmostEqual(abs(basis[1, 1]), 1.0)

    def test_diagonal_exponents(self):
        report = lyapunov_exponents(self.diagonal)
        np.testing.assert_allclose(report.exponents, [0.5, -0.5])
        self.assertEqual(report.groups, ((0, 1), (1, 2)))
        self.assertTrue(report.generic)
        self.assertLess(abs(report.volume_defect), 1e-12)

    def test_cat_exponents(self):
        report = lyapunov_exponents(self.cat_cocycle)
        np.testing.assert_allclose(report.exponents, [CAT_EXPONENT, -CAT_EXPONENT], atol=0.02)
        self.assertLess(abs(report.volume_defect), 1e-8)

    def test_winding_exponents(self):
        report = lyapunov_exponents(self.winding_cocycle)
        np.testing.assert_allclose(report.exponents, 0.0, atol=1e-10)
        self.assertEqual(len(report.groups), 1)

    def test_product_exponents(self):
        """
        The extra torus direction carries a zero exponent between the cat pair.
        """
        model = product_hyperbolic(extra=1)
        points = sample_points(model, 1, np.random.default_rng(3))
        coc = batch_cocycles(model, points, 0.01, 60)[0]
        report = lyapunov_exponents(coc)
        np.testing.assert_allclose(report.exponents, [CAT_EXPONENT, 0.0, -CAT_EXPONENT], atol=0.03)
        wedge = lyapunov_exponents(exterior_power(coc, 2))
        self.assertAlmostEqual(wedge.exponents[0], sigma_k(report, 2), places=6)

    def test_long_horizon(self):
        """
        Over 1000 units the exponents settle to within 1e-3 of their exact values.
        """
        coc = batch_cocycles(self.cat, [[0.3, 0.6, 0.1]], 0.01, 1000)[0]
        report = lyapunov_exponents(coc)
        np.testing.assert_allclose(report.exponents, [CAT_EXPONENT, -CAT_EXPONENT], atol=1e-3)
        model = product_hyperbolic(extra=1)
        points = sample_points(model, 1, np.random.default_rng(3))
        coc = batch_cocycles(model, points, 0.01, 1000)[0]
        report = lyapunov_exponents(coc)
        np.testing.assert_allclose(report.exponents, [CAT_EXPONENT, 0.0, -CAT_EXPONENT],
                                   atol=1e-3)
        wedge = lyapunov_exponents(exterior_power(coc, 2))
        self.assertAlmostEqual(wedge.exponents[0], CAT_EXPONENT, delta=2e-3)

    def test_horizon_range(self):
        with self.assertRaises(ValidationError):
            lyapunov_exponents(self.diagonal, T=41)

    def test_compound_matrix(self):
        """
        Checks the Cauchy-Binet identity and the degree-n compound.
        """
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        np.testing.assert_allclose(compound_matrix(a @ b, 2),
                                   compound_matrix(a, 2) @ compound_matrix(b, 2), atol=1e-10)
        np.testing.assert_allclose(compound_matrix(a, 1), a)
        self.assertAlmostEqual(compound_matrix(a, 4)[0, 0], np.linalg.det(a))

    def test_exterior_exponents(self):
        """
        The top exponent of the k-th exterior power is the sum of the k top exponents.
        """
        report = lyapunov_exponents(self.random3)
        wedge = lyapunov_exponents(exterior_power(self.random3, 2))
        self.assertAlmostEqual(wedge.exponents[0], sigma_k(report, 2), places=8)
        self.assertAlmostEqual(sigma_k(report, 0), 0.0)
        with self.assertRaises(ValidationError):
            sigma_k(report, 4)
        with self.assertRaises(ValidationError):
            exterior_power(self.random3, 3)

    def test_time_reversal(self):
        self.assertLess(time_reversal_defect(self.diagonal), 1e-12)
        self.assertLess(time_reversal_defect(self.cat_cocycle), 0.05)

    def test_log_wedge_norms(self):
        values = log_wedge_norms(self.diagonal.blocks[:10], 1)
        np.testing.assert_allclose(values, 0.5 * np.arange(1, 11))
        values = log_wedge_norms(self.diagonal.blocks[:10], 2)
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_subadditivity(self):
        self.assertEqual(subadditivity_violations(np.array([1.0, 3.0]), np.zeros(2)), ((1, 1),))
        self.assertEqual(subadditivity_violations(np.array([1.0, 2.0, 3.0]), np.zeros(3)), ())

    def test_le_k_cat(self):
        """
        ‖A^j‖ of the symmetric cat matrix is the j-th power of its top eigenvalue.
        """
        result = le_k(self.cat, 1, 4, 12, seed=2)
        self.assertAlmostEqual(result.estimate, CAT_EXPONENT, places=6)
        self.assertTrue(result.subadditive)
        self.assertEqual(len(result.means), 12)

    def test_gap_integral_dominated(self):
        estimate = gap_integral(self.cat, 1, 3, 40, [1, 2], seed=1)
        self.assertEqual(estimate.value, 0.0)
        self.assertEqual(estimate.n_undominated, 0)

    def test_start_exponents(self):
        with tempfile.TemporaryDirectory() as folder:
            start_exponents({'fp': folder, 'model': 'irrational_winding', 'horizon': 20,
                             'samples': 3})
            table = pd.read_csv(os.path.join(folder, 'exponents.tsv'), sep='\t')
            self.assertEqual(len(table), 3)
            np.testing.assert_allclose(table[['lambda_1', 'lambda_2']], 0.0, atol=1e-10)
            for name in ('exponents.txt', 'cocycle.tsv', 'orbit.tsv', 'manifest.yaml'):
                self.assertTrue(os.path.isfile(os.path.join(folder, name)))

    def test_start_lek(self):
        with tempfile.TemporaryDirectory() as folder:
            start_lek({'fp': folder, 'model': 'cat_suspension', 'samples': 2, 'j_max': 5,
                       'horizon': 40, 'm_grid': [1, 2]})
            table = pd.read_csv(os.path.join(folder, 'le_k.tsv'), sep='\t')
            self.assertEqual(list(table['j']), [1, 2, 3, 4, 5])
            with open(os.path.join(folder, 'le_k.txt')) as file:
                self.assertIn('gap', file.read())


if __name__ == '__main__':
    unittest.main()
