"""
This file contains functions for testing functions in the flow_models.py script.
"""

import unittest
import os
import tempfile
import numpy as np
import yaml
from rolf.scripts.flow_models import get_model, sample_points, eval_field, eval_jacobian, speed, \
    check_divergence, jacobian_fd_order, load_model, product_hyperbolic, CAT_EXPONENT
from rolf.scripts.utils import ValidationError

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


# x' = sin(z), y' = cos(x), z' = sin(y): no component depends on its own axis
free_model = {'id': 'free_table',
              'field': [[{'kind': 'sin', 'axis': 2, 'freq': 1.0}],
                        [{'kind': 'cos', 'axis': 0, 'freq': 1.0}],
                        [{'kind': 'sin', 'axis': 1, 'freq': 1.0},
                         {'kind': 'poly', 'powers': [1, 0, 0], 'coef': 0.0}]]}

# x' = sin(x) has trace cos(x)
compressible_model = {'id': 'compressible',
                      'field': [[{'kind': 'sin', 'axis': 0, 'freq': 1.0}],
                                [{'kind': 'const', 'coef': 1.0}],
                                [{'kind': 'const', 'coef': 1.0}]]}


class TestFlowModels(unittest.TestCase):
    """
    Tests the built-in models, the registry and the model file reader.
    """
    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.TemporaryDirectory()
        cls.free_path = os.path.join(cls.folder.name, 'free.yaml')
        cls.compressible_path = os.path.join(cls.folder.name, 'compressible.yaml')
        with open(cls.free_path, 'w') as file:
            yaml.safe_dump(free_model, file)
        with open(cls.compressible_path, 'w') as file:
            yaml.safe_dump(compressible_model, file)

    @classmethod
    def tearDownClass(cls):
        cls.folder.cleanup()

    def test_registry(self):
        """
        Checks that every built-in model is divergence-free and has the declared dimension.
        """
        for model_id, dim in (('cat_suspension', 3), ('irrational_winding', 3), ('abc_flow', 3)):
            model = get_model(model_id)
            self.assertEqual(model.dim, dim)
            self.assertLess(check_divergence(model, n_samples=500), 1e-12)

    def test_unknown_model(self):
        with self.assertRaises(ValidationError) as context:
            get_model('lorenz')
        self.assertEqual(context.exception.field, 'model')

    def test_unknown_parameter(self):
        with self.assertRaises(ValidationError) as context:
            get_model('abc_flow', D=1.0)
        self.assertEqual(context.exception.field, 'model_params')

    def test_cat_metadata(self):
        model = get_model('cat_suspension')
        self.assertAlmostEqual(model.metadata['exponents'][0], 0.9624236501, places=9)
        self.assertAlmostEqual(CAT_EXPONENT, -model.metadata['exponents'][1])

    def test_product_hyperbolic(self):
        model = product_hyperbolic(extra=2)
        self.assertEqual(model.dim, 5)
        self.assertEqual(len(model.metadata['exponents']), 4)
        with self.assertRaises(ValidationError):
            product_hyperbolic(extra=0)

    def test_batch_evaluation(self):
        """
        Checks that batches give the same velocities as single states.
        """
        model = get_model('abc_flow')
        points = sample_points(model, 5, np.random.default_rng(1))
        batch = eval_field(model, points)
        for i, point in enumerate(points):
            np.testing.assert_allclose(batch[i], eval_field(model, point))
        self.assertEqual(eval_jacobian(model, points).shape, (5, 3, 3))
        self.assertEqual(speed(model, points).shape, (5,))

    def test_sample_points(self):
        model = get_model('abc_flow')
        points = sample_points(model, 200, np.random.default_rng(0))
        self.assertTrue(np.all(points >= 0))
        self.assertTrue(np.all(points < 2 * np.pi))
        again = sample_points(model, 200, np.random.default_rng(0))
        np.testing.assert_array_equal(points, again)

    def test_jacobian_order(self):
        """
        Checks that central differences converge to the analytic Jacobian at second order.
        """
        model = get_model('abc_flow')
        order, errors = jacobian_fd_order(model, [0.3, 1.1, 2.5])
        self.assertAlmostEqual(order, 2.0, delta=0.2)
        self.assertLess(errors[1], errors[0])

    def test_load_model(self):
        model = load_model(self.free_path)
        self.assertEqual(model.id, 'free_table')
        self.assertEqual(model.dim, 3)
        x = np.array([0.2, 0.4, 0.6])
        np.testing.assert_allclose(eval_field(model, x), [np.sin(0.6), np.cos(0.2), np.sin(0.4)])
        order, _ = jacobian_fd_order(model, x)
        self.assertAlmostEqual(order, 2.0, delta=0.2)
        self.assertEqual(get_model(self.free_path).id, 'free_table')

    def test_bundled_model(self):
        model = get_model('shear_flow')
        self.assertEqual(model.periods, (1.0, 1.0, 1.0))
        np.testing.assert_allclose(eval_field(model, [0.0, 0.25, 0.3]), [1.0, 0.5, 1.0])

    def test_reject_compressible(self):
        with self.assertRaises(ValidationError) as context:
            load_model(self.compressible_path)
        self.assertEqual(context.exception.field, 'field')


if __name__ == '__main__':
    unittest.main()
