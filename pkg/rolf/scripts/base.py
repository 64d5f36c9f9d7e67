"""
This file contains the experiment configuration shared by all rolf commands,
the manifest written next to every set of reports,
and the worker pool used to spread sample points or trials over processes.

Settings come from a YAML config file merged with command-line flags.
Each setting is checked against its documented range; a failing field is reported
by name, with its line number if it came from the config file.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import os
import sys
import hashlib
import platform
from dataclasses import dataclass, asdict, field
from multiprocessing import Pool
import numpy as np
import pandas as pd
import scipy
import yaml
from psutil import cpu_count, virtual_memory
from pbr.version import VersionInfo
from rolf.scripts.flow_models import get_model
from rolf.scripts.io import write_record
from rolf.scripts.utils import ValidationError, _read_config
import logging

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

MODES = ('exchange', 'local', 'campaign')
EXCHANGE_CASES = ('SmallAngle', 'NormRatio', 'RotationChain')


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Validated settings of one rolf run.
    """
    model: str = 'cat_suspension'
    model_params: dict = field(default_factory=dict)
    cocycle: str = None
    seed: int = 0
    horizon: int = 1000
    step: float = 0.01
    samples: int = 100
    m_grid: tuple = tuple(range(1, 11))
    k: tuple = (1,)
    epsilon: float = 3.0
    kappa: float = 0.99
    delta: float = 0.1
    max_angle: float = float(np.pi / 3)
    cost_lambda: float = None
    cost_sigma: float = 0.95
    j_max: int = 50
    radius: tuple = (0.01,)
    flowbox_time: float = 1.0
    flowbox_samples: int = 100000
    mode: str = 'exchange'
    cases: tuple = EXCHANGE_CASES
    trials: int = 1000
    workers: int = 1
    output: str = '.'

    def to_record(self):
        record = asdict(self)
        for key, value in record.items():
            if isinstance(value, tuple):
                record[key] = list(value)
        return record


def _integer(value):
    if isinstance(value, bool) or float(value) != int(float(value)):
        raise ValueError
    return int(float(value))


def _integers(value):
    if isinstance(value, (str, int, float)):
        value = [value]
    return tuple(_integer(v) for v in value)


def _floats(value):
    if isinstance(value, (str, int, float)):
        value = [value]
    return tuple(float(v) for v in value)


def _strings(value):
    if isinstance(value, str):
        value = [value]
    return tuple(str(v) for v in value)


def _unit_step(h):
    return 0 < h <= 0.1 and abs(1 / h - round(1 / h)) < 1e-9


# name: (converter, check, requirement shown in the error)
FIELDS = {'seed': (_integer, lambda v: 0 <= v < 2 ** 64, 'an integer in [0, 2^64)'),
          'horizon': (_integer, lambda v: v >= 2, 'an integer >= 2'),
          'step': (float, _unit_step, 'a step in (0, 0.1] with 1/h integral'),
          'samples': (_integer, lambda v: v >= 1, 'an integer >= 1'),
          'm_grid': (_integers, lambda v: len(v) > 0 and min(v) >= 1,
                     'a non-empty list of positive integers'),
          'k': (_integers, lambda v: len(v) > 0 and min(v) >= 1, 'a non-empty list of integers >= 1'),
          'epsilon': (float, lambda v: v > 0, 'a positive number'),
          'kappa': (float, lambda v: 0 < v < 1, 'a number in (0, 1)'),
          'delta': (float, lambda v: v > 0, 'a positive number'),
          'max_angle': (float, lambda v: 0 < v <= np.pi / 2, 'an angle in (0, pi/2]'),
          'cost_lambda': (float, lambda v: 0 < v < 1, 'a number in (0, 1)'),
          'cost_sigma': (float, lambda v: 0 < v < 1, 'a number in (0, 1)'),
          'j_max': (_integer, lambda v: v >= 2, 'an integer >= 2'),
          'radius': (_floats, lambda v: len(v) > 0 and min(v) > 0, 'a non-empty list of radii > 0'),
          'flowbox_time': (float, lambda v: 0 < v <= 10, 'a time in (0, 10]'),
          'flowbox_samples': (_integer, lambda v: v >= 10, 'an integer >= 10'),
          'mode': (str, lambda v: v in MODES, 'one of ' + ', '.join(MODES)),
          'cases': (_strings, lambda v: len(v) > 0 and set(v) <= set(EXCHANGE_CASES),
                    'a non-empty list out of ' + ', '.join(EXCHANGE_CASES)),
          'trials': (_integer, lambda v: v >= 1, 'an integer >= 1'),
          'workers': (_integer, lambda v: v >= 1, 'an integer >= 1')}


def build_config(inputs, command):
    """
    Merges the config file with the given flags and validates every setting.

    :param inputs: Dictionary of arguments.
    :param command: Name of the subcommand
    :return: ExperimentConfig
    """
    settings, lines = _read_config(inputs)
    values = dict()
    for name, (convert, check, requirement) in FIELDS.items():
        if settings.get(name) is None:
            continue
        try:
            value = convert(settings[name])
        except (TypeError, ValueError):
            raise ValidationError('Must be ' + requirement + '. ', field=name, line=lines.get(name))
        if not check(value):
            raise ValidationError('Must be ' + requirement + ', got ' + str(settings[name]) + '. ',
                                  field=name, line=lines.get(name))
        values[name] = value
    params = settings.get('model_params') or dict()
    if not isinstance(params, dict):
        raise ValidationError('Must be a mapping. ', field='model_params',
                              line=lines.get('model_params'))
    values['model_params'] = params
    if settings.get('model') is not None:
        values['model'] = str(settings['model'])
    if settings.get('cocycle') is not None:
        values['cocycle'] = str(settings['cocycle'])
    values['output'] = settings.get('fp') or os.environ.get('ROLF_OUTPUT') or os.getcwd()
    config = ExperimentConfig(**values)
    if config.cocycle is None and command != 'replay':
        try:
            model = get_model(config.model, **config.model_params)
        except ValidationError as e:
            raise ValidationError(e.detail, field=e.field, line=lines.get(e.field))
        if max(config.k) > model.dim - 2:
            raise ValidationError('Must lie in [1, ' + str(model.dim - 2) + '] for ' + model.id +
                                  '. ', field='k', line=lines.get('k'))
    if not os.path.isdir(config.output):
        os.makedirs(config.output)
    logger.info('Running ' + command + ' with output in ' + config.output + '. ')
    return config


def config_hash(config):
    """
    SHA-256 of the canonical YAML dump of the config.
    """
    text = yaml.safe_dump(config.to_record(), sort_keys=True)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _version():
    try:
        return VersionInfo('rolf').version_string()
    except Exception:
        return 'unknown'


def write_manifest(config, command, wall_time):
    """
    Writes manifest.yaml into the output directory.

    :param config: ExperimentConfig
    :param command: Name of the subcommand
    :param wall_time: Seconds spent on the command
    :return: Manifest as dict
    """
    manifest = {'command': command,
                'config_hash': config_hash(config),
                'config': config.to_record(),
                'versions': {'rolf': _version(), 'python': platform.python_version(),
                             'numpy': np.__version__, 'scipy': scipy.__version__,
                             'pandas': pd.__version__},
                'host': {'cpus': cpu_count(), 'memory': int(virtual_memory().total)},
                'wall_time': float(wall_time)}
    write_record(manifest, os.path.join(config.output, 'manifest.yaml'))
    return manifest


def run_pool(function, jobs, workers=1):
    """
    Maps a function over jobs, in order, on a pool of worker processes.

    :param function: Module-level function taking one job
    :param jobs: List of picklable jobs
    :param workers: Number of processes; 1 runs in this process
    :return: List of results in job order
    """
    if workers == 1:
        return [function(job) for job in jobs]
    with Pool(workers) as pool:
        return list(pool.imap(function, jobs))
