"""
This file contains functions for testing functions in the io.py script.
"""

import unittest
import os
import tempfile
import numpy as np
from rolf.scripts.io import write_table, read_table, orbit_table, write_cocycle, read_cocycle, \
    write_record, read_record, require
from rolf.scripts.utils import ParseError

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'


header = 'mark\tx_factor\ta_0_0\ta_0_1\ta_1_0\ta_1_1'
first_row = '0\t1.0\t2.0\t1.0\t1.0\t1.0'
broken_row = '1\t1.0\t2.0\t\t1.0\t1.0'


class TestIo(unittest.TestCase):
    """
    Tests tables, cocycle files and YAML records.
    """
    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(3)
        cls.blocks = rng.normal(size=(4, 2, 2))
        cls.x_factors = rng.uniform(0.5, 2.0, size=4)

    @classmethod
    def tearDownClass(cls):
        cls.folder.cleanup()

    def _path(self, name):
        return os.path.join(self.folder.name, name)

    def test_orbit_table(self):
        states = np.arange(9, dtype=float).reshape(3, 3)
        table = orbit_table(states, np.ones(3), step=0.5)
        self.assertEqual(list(table.columns), ['t', 'x0', 'x1', 'x2', 'speed'])
        np.testing.assert_allclose(table['t'], [0.0, 0.5, 1.0])

    def test_table_precision(self):
        """
        Tables are written with 17 significant digits, so floats read back exactly.
        """
        table = orbit_table(np.array([[np.pi, 1 / 3, np.e]]), np.array([np.sqrt(2)]))
        write_table(table, self._path('orbit.tsv'))
        again = read_table(self._path('orbit.tsv'))
        np.testing.assert_array_equal(again.to_numpy(), table.to_numpy())

    def test_cocycle_file(self):
        write_cocycle(self._path('cocycle.tsv'), self.blocks, self.x_factors)
        blocks, x_factors = read_cocycle(self._path('cocycle.tsv'))
        np.testing.assert_array_equal(blocks, self.blocks)
        np.testing.assert_array_equal(x_factors, self.x_factors)

    def test_cocycle_missing_entry(self):
        """
        A missing entry is reported at the byte offset of its row.
        """
        path = self._path('broken.tsv')
        with open(path, 'w') as file:
            file.write('\n'.join([header, first_row, broken_row]) + '\n')
        with self.assertRaises(ParseError) as context:
            read_cocycle(path)
        self.assertEqual(context.exception.offset, len(header) + len(first_row) + 2)

    def test_cocycle_without_blocks(self):
        path = self._path('columns.tsv')
        with open(path, 'w') as file:
            file.write('mark\tx_factor\n0\t1.0\n')
        with self.assertRaises(ParseError):
            read_cocycle(path)

    def test_record(self):
        record = {'base': 3, 'values': [0.1, 1 / 3], 'nested': {'u': [[1.0, 2.0]]}}
        write_record(record, self._path('record.yaml'))
        again, size = read_record(self._path('record.yaml'))
        self.assertEqual(again, record)
        self.assertEqual(size, os.path.getsize(self._path('record.yaml')))

    def test_invalid_record(self):
        path = self._path('invalid.yaml')
        with open(path, 'w') as file:
            file.write('steps: [1, 2\nbase: 3\n')
        with self.assertRaises(ParseError) as context:
            read_record(path)
        self.assertIsNotNone(context.exception.offset)
        path = self._path('scalar.yaml')
        with open(path, 'w') as file:
            file.write('3.0\n')
        with self.assertRaises(ParseError) as context:
            read_record(path)
        self.assertEqual(context.exception.offset, 0)

    def test_require(self):
        self.assertEqual(require({'a': 1}, 'a'), 1)
        with self.assertRaises(ParseError) as context:
            require({'a': None}, 'a', 120)
        self.assertEqual(context.exception.offset, 120)
        with self.assertRaises(ParseError):
            require([1, 2], 'a')


if __name__ == '__main__':
    unittest.main()
