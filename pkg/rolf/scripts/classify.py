"""
The classify module sorts sampled points of a model into finite-time surrogates
of the two invariant sets of the dichotomy: points whose exponents all vanish
and points that carry a dominated splitting.

A point is D-like when the domination scan returns a Lambda verdict for some
index k and some m of the grid. Otherwise it is Z-like when every finite-time
exponent lies within 10/T of zero. Points meeting neither predicate are unresolved.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import os
import sys
import time
from dataclasses import dataclass
import numpy as np
import pandas as pd
from rolf.scripts.base import build_config, write_manifest, run_pool
from rolf.scripts.domination import scan_orbit, LAMBDA
from rolf.scripts.flow_models import get_model, sample_points
from rolf.scripts.io import write_table, write_report
from rolf.scripts.spectrum import lyapunov_exponents, batch_cocycles, CHUNK
from rolf.scripts.utils import NumericalError, _create_logger
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

Z_LIKE = 'Z-like'
D_LIKE = 'D-like'
UNRESOLVED = 'unresolved'
VERDICTS = (Z_LIKE, D_LIKE, UNRESOLVED)
ZERO_SCALE = 10.0


def start_classify(inputs):
    """
    Takes all arguments and classifies sampled points of a model.
    Writes one record per point and the fraction of each verdict with its standard error.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'classify')
    _create_logger(config.output)
    model = get_model(config.model, **config.model_params)
    records = classify_points(model, config.samples, config.horizon, config.k, config.m_grid,
                              h=config.step, seed=config.seed, workers=config.workers)
    table = pd.DataFrame([record.to_row() for record in records])
    write_table(table, os.path.join(config.output, 'classify.tsv'))
    write_report(verdict_fractions(records), os.path.join(config.output, 'classify.txt'))
    write_manifest(config, 'classify', time.perf_counter() - started)
    logger.info('Completed classification! ')


@dataclass(frozen=True)
class ClassificationRecord:
    """
    Verdict for one sampled point.

    :param point: Index of the point in the sample
    :param state: Coordinates of the point
    :param verdict: Z-like, D-like or unresolved
    :param max_exponent: Largest absolute finite-time exponent
    :param zero_bound: Bound 10/T that counts as zero
    :param k: Index of the first Lambda verdict, None if there is none
    :param m: m of the first Lambda verdict, None if there is none
    """
    point: int
    state: tuple
    verdict: str
    max_exponent: float
    zero_bound: float
    k: int = None
    m: int = None

    def to_row(self):
        row = {'point': self.point}
        row.update({'x' + str(i): value for i, value in enumerate(self.state)})
        row.update({'verdict': self.verdict, 'max_exponent': self.max_exponent,
                    'zero_bound': self.zero_bound, 'k': self.k, 'm': self.m})
        return row


def dominated_index(coc, k_list, m_grid):
    """
    First (k, m) with a Lambda verdict, scanning k in order and m ascending.
    A k whose scan fails numerically contributes no verdict.

    :return: (k, m) or None
    """
    for k in k_list:
        if not 1 <= k < coc.fiber_dim:
            continue
        try:
            report = scan_orbit(coc, k, m_grid)
        except NumericalError as e:
            logger.info('No domination verdict for k = ' + str(k) + ': ' + str(e))
            continue
        for m in sorted(report.verdicts):
            if report.verdicts[m] == LAMBDA:
                return k, m
    return None


def classify_cocycle(coc, k_list, m_grid):
    """
    Verdict, largest absolute exponent and the dominated (k, m) for one cocycle.
    """
    report = lyapunov_exponents(coc)
    bound = ZERO_SCALE / report.horizon
    largest = float(np.max(np.abs(report.exponents)))
    found = dominated_index(coc, k_list, m_grid)
    if found is not None:
        return D_LIKE, largest, bound, found
    if largest < bound:
        return Z_LIKE, largest, bound, None
    return UNRESOLVED, largest, bound, None


def _classify_chunk(job):
    model, points, offset, h, T, k_list, m_grid = job
    records = []
    for i, coc in enumerate(batch_cocycles(model, points, h, T)):
        verdict, largest, bound, found = classify_cocycle(coc, k_list, m_grid)
        k, m = found if found is not None else (None, None)
        records.append(ClassificationRecord(point=offset + i, state=tuple(float(v) for v in points[i]),
                                            verdict=verdict, max_exponent=largest,
                                            zero_bound=bound, k=k, m=m))
    return records


def classify_points(model, n_points, T, k_list, m_grid, h=0.01, seed=0, workers=1):
    """
    Classifies n_points sampled points; every point gets exactly one verdict.

    :param model: FlowModel
    :param n_points: Number of points
    :param T: Cocycle length per point
    :param k_list: Indices tested for domination
    :param m_grid: m values tested for domination
    :param h: Step size
    :param seed: Sampling seed
    :param workers: Number of processes
    :return: List of ClassificationRecord in sample order
    """
    points = sample_points(model, n_points, np.random.default_rng(seed))
    jobs = [(model, points[i:i + CHUNK], i, h, T, tuple(k_list), tuple(m_grid))
            for i in range(0, len(points), CHUNK)]
    records = [record for chunk in run_pool(_classify_chunk, jobs, workers) for record in chunk]
    logger.info('Classified ' + str(len(records)) + ' points of ' + model.id + '. ')
    return records


def verdict_fractions(records):
    """
    Fraction of each verdict with standard error sqrt(p (1 - p) / N).

    :param records: List of ClassificationRecord
    :return: pandas DataFrame
    """
    n = len(records)
    verdicts = [record.verdict for record in records]
    rows = []
    for verdict in VERDICTS:
        count = verdicts.count(verdict)
        p = count / n if n else 0.0
        rows.append({'verdict': verdict, 'count': count, 'fraction': p,
                     'stderr': float(np.sqrt(p * (1 - p) / n)) if n else 0.0})
    return pd.DataFrame(rows)
