"""
This file contains functions for testing functions in the base.py script.

The config files are written to a temporary directory,
so line numbers of invalid fields can be checked.
"""

import unittest
import os
import tempfile
from unittest import mock
from rolf.scripts.base import build_config, config_hash, write_manifest, run_pool, ExperimentConfig
from rolf.scripts.utils import ValidationError

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


valid_config = """model: cat_suspension
seed: 3
horizon: 200
m_grid: [1, 2, 4]
k: 1
"""

invalid_kappa = """model: abc_flow
kappa: 1.5
"""

empty_grid = """model: abc_flow
horizon: 100
m_grid: []
"""


class TestBase(unittest.TestCase):
    """
    Tests config merging and validation, the manifest and the worker pool.
    """
    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.TemporaryDirectory()
        for name, text in (('valid.yaml', valid_config), ('kappa.yaml', invalid_kappa),
                           ('grid.yaml', empty_grid)):
            with open(os.path.join(cls.folder.name, name), 'w') as file:
                file.write(text)

    @classmethod
    def tearDownClass(cls):
        cls.folder.cleanup()

    def _inputs(self, config=None, **flags):
        inputs = {'fp': self.folder.name, 'config': None}
        if config:
            inputs['config'] = os.path.join(self.folder.name, config)
        inputs.update(flags)
        return inputs

    def test_valid_config(self):
        config = build_config(self._inputs('valid.yaml'), 'domination')
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.m_grid, (1, 2, 4))
        self.assertEqual(config.k, (1,))
        self.assertEqual(config.epsilon, ExperimentConfig().epsilon)
        self.assertEqual(config.output, self.folder.name)

    def test_flags_override(self):
        config = build_config(self._inputs('valid.yaml', seed=5, horizon=None), 'domination')
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.horizon, 200)

    def test_invalid_kappa(self):
        """
        The error names the field and the line it was set on.
        """
        with self.assertRaises(ValidationError) as context:
            build_config(self._inputs('kappa.yaml'), 'perturb')
        self.assertEqual(context.exception.field, 'kappa')
        self.assertEqual(context.exception.line, 2)

    def test_empty_grid(self):
        with self.assertRaises(ValidationError) as context:
            build_config(self._inputs('grid.yaml'), 'domination')
        self.assertEqual(context.exception.field, 'm_grid')
        self.assertEqual(context.exception.line, 3)

    def test_index_range(self):
        with self.assertRaises(ValidationError) as context:
            build_config(self._inputs(model='abc_flow', k=[2]), 'domination')
        self.assertEqual(context.exception.field, 'k')

    def test_unknown_model(self):
        with self.assertRaises(ValidationError) as context:
            build_config(self._inputs(model='lorenz'), 'exponents')
        self.assertEqual(context.exception.field, 'model')

    def test_step_size(self):
        with self.assertRaises(ValidationError) as context:
            build_config(self._inputs(step=0.03), 'exponents')
        self.assertEqual(context.exception.field, 'step')
        with self.assertRaises(ValidationError):
            build_config(self._inputs(horizon=True), 'exponents')

    def test_output_variable(self):
        with tempfile.TemporaryDirectory() as folder:
            with mock.patch.dict(os.environ, {'ROLF_OUTPUT': folder}):
                config = build_config({'model': 'cat_suspension'}, 'exponents')
            self.assertEqual(config.output, folder)

    def test_config_hash(self):
        first = build_config(self._inputs('valid.yaml'), 'domination')
        second = build_config(self._inputs('valid.yaml'), 'domination')
        self.assertEqual(config_hash(first), config_hash(second))
        other = build_config(self._inputs('valid.yaml', seed=4), 'domination')
        self.assertNotEqual(config_hash(first), config_hash(other))

    def test_manifest(self):
        config = build_config(self._inputs('valid.yaml'), 'domination')
        manifest = write_manifest(config, 'domination', 1.5)
        for key in ('command', 'config_hash', 'config', 'versions', 'host', 'wall_time'):
            self.assertIn(key, manifest)
        self.assertEqual(manifest['config']['m_grid'], [1, 2, 4])
        self.assertTrue(os.path.isfile(os.path.join(self.folder.name, 'manifest.yaml')))

    def test_run_pool(self):
        """
        Results come back in job order for any number of workers.
        """
        jobs = [-3, 1, -2, 5]
        self.assertEqual(run_pool(abs, jobs, 1), [3, 1, 2, 5])
        self.assertEqual(run_pool(abs, jobs, 2), [3, 1, 2, 5])


if __name__ == '__main__':
    unittest.main()
