"""
This file contains functions for testing functions in the utils.py script.
"""

import unittest
import os
import logging.handlers
import tempfile
from rolf.scripts.utils import _read_config, _get_path, _create_logger, _resource_path, \
    ValidationError, ParseError, AngleBudgetExceeded, HorizonTooShort, NumericalError, RolfError

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


config_text = """model: abc_flow
seed: 7

horizon: 50
"""


class TestUtils(unittest.TestCase):
    """
    Tests config reading, path lookup, logging and the error types.
    """
    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.TemporaryDirectory()
        cls.config_path = os.path.join(cls.folder.name, 'config.yaml')
        with open(cls.config_path, 'w') as file:
            file.write(config_text)
        with open(os.path.join(cls.folder.name, 'list.yaml'), 'w') as file:
            file.write('- 1\n- 2\n')
        with open(os.path.join(cls.folder.name, 'broken.yaml'), 'w') as file:
            file.write('model: abc_flow\nseed: [1, 2\n')

    @classmethod
    def tearDownClass(cls):
        cls.folder.cleanup()

    def test_read_config(self):
        """
        Flags that were given replace config values and lose their line number.
        """
        config, lines = _read_config({'config': self.config_path, 'seed': 9, 'horizon': None})
        self.assertEqual(config['model'], 'abc_flow')
        self.assertEqual(config['seed'], 9)
        self.assertEqual(config['horizon'], 50)
        self.assertEqual(lines, {'model': 1, 'horizon': 4})

    def test_read_config_relative(self):
        config, _ = _read_config({'config': 'config.yaml', 'fp': self.folder.name})
        self.assertEqual(config['seed'], 7)

    def test_invalid_config(self):
        with self.assertRaises(ValidationError) as context:
            _read_config({'config': os.path.join(self.folder.name, 'list.yaml')})
        self.assertEqual(context.exception.field, 'config')
        with self.assertRaises(ValidationError) as context:
            _read_config({'config': os.path.join(self.folder.name, 'broken.yaml')})
        self.assertIsNotNone(context.exception.line)

    def test_get_path(self):
        self.assertEqual(_get_path('config.yaml', self.folder.name), self.config_path)
        with self.assertRaises(ValidationError):
            _get_path('missing.yaml', self.folder.name)

    def test_resource_path(self):
        path = _resource_path('models')
        self.assertEqual(os.path.basename(os.path.dirname(path)), 'rolf')

    def test_create_logger(self):
        """
        Repeated calls attach a single file handler per output directory.
        """
        _create_logger(self.folder.name)
        _create_logger(self.folder.name)
        target = os.path.abspath(os.path.join(self.folder.name, 'rolf.log'))
        package_logger = logging.getLogger('rolf')
        handlers = [handler for handler in package_logger.handlers
                    if isinstance(handler, logging.handlers.RotatingFileHandler) and
                    handler.baseFilename == target]
        self.assertEqual(len(handlers), 1)
        package_logger.removeHandler(handlers[0])
        handlers[0].close()

    def test_error_messages(self):
        error = ValidationError('Must be positive. ', field='epsilon', line=4)
        self.assertEqual(str(error), "Field 'epsilon' (line 4): Must be positive. ")
        self.assertEqual(error.detail, 'Must be positive. ')
        error = ParseError('Missing field.', offset=17)
        self.assertIsInstance(error, ValidationError)
        self.assertIn('byte offset 17', str(error))
        error = AngleBudgetExceeded('Too short.', min_length=80)
        self.assertIsInstance(error, NumericalError)
        self.assertEqual(error.min_length, 80)
        self.assertIn('80', str(error))
        self.assertIsNone(HorizonTooShort('No chain.').min_horizon)
        self.assertIsInstance(error, RolfError)


if __name__ == '__main__':
    unittest.main()
