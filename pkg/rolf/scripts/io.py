"""
This module contains functions for reading and writing rolf files.
Columnar data (orbits, cocycles, report tables) is written as tab-separated files
through pandas, with enough digits to read floats back exactly.
Plans, certificates and manifests are YAML records.
Human-readable copies of the tables are written with DataFrame.to_string.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import sys
import numpy as np
import pandas as pd
import yaml
from rolf.scripts.utils import ParseError
import logging

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

FLOAT_FORMAT = '%.17g'


def write_table(table, path):
    """
    Writes a table as tab-separated file.

    :param table: pandas DataFrame
    :param path: Target file
    :return:
    """
    table.to_csv(path, sep='\t', index=False, float_format=FLOAT_FORMAT)
    logger.info('Wrote ' + path + '. ')


def read_table(path):
    return pd.read_csv(path, sep='\t')


def write_report(table, path):
    """
    Writes a table in fixed-width text for reading by eye.
    """
    with open(path, 'w') as file:
        file.write(table.to_string(index=False) + '\n')


def orbit_table(states, speeds, step=1.0):
    """
    Converts states along an orbit to a table with one row per state.

    :param states: Array (T + 1, d)
    :param speeds: Array (T + 1,)
    :param step: Time between consecutive states
    :return: pandas DataFrame
    """
    table = pd.DataFrame(states, columns=['x' + str(i) for i in range(states.shape[1])])
    table.insert(0, 't', step * np.arange(len(states)))
    table['speed'] = speeds
    return table


def write_cocycle(path, blocks, x_factors):
    """
    Writes cocycle blocks row-major, one row per mark, next to their x-factors.

    :param path: Target file
    :param blocks: Array (T, n, n)
    :param x_factors: Array (T,)
    :return:
    """
    blocks = np.asarray(blocks)
    n = blocks.shape[-1]
    columns = ['a_' + str(i) + '_' + str(j) for i in range(n) for j in range(n)]
    table = pd.DataFrame(blocks.reshape(len(blocks), n * n), columns=columns)
    table.insert(0, 'x_factor', x_factors)
    table.insert(0, 'mark', np.arange(len(blocks)))
    write_table(table, path)


def read_cocycle(path):
    """
    Reads a cocycle written by write_cocycle.

    :param path: Source file
    :return: Blocks (T, n, n), x-factors (T,)
    """
    try:
        table = read_table(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError('Cocycle file ' + path + ' is not a table: ' + str(e), offset=0)
    entries = [name for name in table.columns if name.startswith('a_')]
    n = int(round(np.sqrt(len(entries))))
    if 'x_factor' not in table.columns or n < 1 or n * n != len(entries):
        with open(path, 'rb') as file:
            size = len(file.read())
        raise ParseError('Cocycle file ' + path + ' lacks block columns.', offset=size)
    values = table[entries].to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ParseError('Cocycle file ' + path + ' has missing entries.',
                         offset=_row_offset(path, int(np.nonzero(np.isnan(values))[0][0]) + 1))
    return values.reshape(len(table), n, n), table['x_factor'].to_numpy(dtype=float)


def _row_offset(path, row):
    with open(path, 'rb') as file:
        lines = file.read().split(b'\n')
    return sum(len(line) + 1 for line in lines[:row])


def write_record(record, path):
    """
    Writes a dictionary as YAML; Python floats are written with repr,
    so they read back exactly.
    """
    with open(path, 'w') as file:
        yaml.safe_dump(record, file, sort_keys=False, default_flow_style=None)
    logger.info('Wrote ' + path + '. ')


def read_record(path):
    """
    Reads a YAML record.

    :param path: Source file
    :return: Record as dict, byte size of the file
    """
    with open(path, 'rb') as file:
        data = file.read()
    text = data.decode('utf-8', errors='replace')
    try:
        record = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        offset = len(data)
        if mark is not None:
            offset = len(text[:mark.index].encode('utf-8'))
        raise ParseError('File ' + path + ' is not valid YAML.', offset=offset)
    if not isinstance(record, dict):
        raise ParseError('File ' + path + ' does not hold a record.', offset=0)
    return record, len(data)


def require(record, key, size=None):
    """
    Returns a required field of a record; a missing field means the file ended early.
    """
    if not isinstance(record, dict) or key not in record or record[key] is None:
        raise ParseError("Missing field '" + key + "'.", offset=size)
    return record[key]
