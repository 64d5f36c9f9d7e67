"""
The domination module tests the m-domination inequality
‖P^m|S‖ / 𝔪(P^m|U) <= 1/2 along an orbit.

Candidate splittings come from finite-time Oseledets subspaces:
U is carried by a forward QR sweep from the start of the cocycle
(the most expanded directions coming from the past), S by an adjoint sweep
from its end (the least expanded directions going into the future).
Both sweeps keep the bases exactly invariant under the blocks.
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
from scipy.linalg import subspace_angles, null_space
from rolf.scripts.base import build_config, write_manifest
from rolf.scripts.flow_models import get_model, sample_points
from rolf.scripts.io import write_table, write_report
from rolf.scripts.spectrum import qr_sweep, adjoint_sweep, mgs_qr, batch_cocycles, generic_basis, \
    BASIS_SEED
from rolf.scripts.utils import SplitDegenerate, InconclusiveSplitting, NotDominated, \
    ValidationError, _create_logger
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

THRESHOLD = 0.5
THRESHOLD_SLACK = 1e-9
MIN_ANGLE = 1e-6
INVARIANCE_TOLERANCE = 1e-4
DRIFT_TOLERANCE = 1e-2

LAMBDA = 'Lambda'
GAMMA = 'Gamma'
INCONCLUSIVE = 'inconclusive'


def start_domination(inputs):
    """
    Takes all arguments and scans sampled orbits for m-dominated splittings
    of every index k in the config.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'domination')
    _create_logger(config.output)
    model = get_model(config.model, **config.model_params)
    maps = []
    for k in config.k:
        table = domination_map(model, k, config.m_grid, config.samples, config.horizon,
                               config.step, config.seed)
        table.insert(0, 'k', k)
        maps.append(table)
    table = pd.concat(maps, ignore_index=True)
    write_table(table, os.path.join(config.output, 'domination.tsv'))
    summary = table.groupby(['k', 'm'])['verdict'].value_counts(normalize=True)
    summary = summary.unstack(fill_value=0.0).reset_index()
    write_report(summary, os.path.join(config.output, 'domination.txt'))
    write_manifest(config, 'domination', time.perf_counter() - started)
    logger.info('Completed domination scan! ')


@dataclass(frozen=True, eq=False)
class Splitting:
    """
    Complementary subspaces U (dimension index) and S of the fiber at the marks
    start..start + len(U) - 1.

    :param index: dim U
    :param start: First mark
    :param U: Array (marks, n, index) of orthonormal bases
    :param S: Array (marks, n, n - index) of orthonormal bases
    """
    index: int
    start: int
    U: np.ndarray
    S: np.ndarray

    @property
    def stop(self):
        return self.start + len(self.U) - 1

    def _offset(self, mark):
        if not self.start <= mark <= self.stop:
            raise ValidationError('Mark ' + str(mark) + ' outside the splitting range [' +
                                  str(self.start) + ', ' + str(self.stop) + ']. ', field='mark')
        return mark - self.start

    def U_at(self, mark):
        return self.U[self._offset(mark)]

    def S_at(self, mark):
        return self.S[self._offset(mark)]

    def angle_at(self, mark):
        return float(np.min(subspace_angles(self.U_at(mark), self.S_at(mark))))

    def invariance_defect(self, coc):
        """
        Largest sine of the principal angle between A_t U_t and U_{t+1} (and likewise for S).
        """
        worst = 0.0
        for mark in range(self.start, self.stop):
            block = coc.blocks[mark]
            for bases in (self.U, self.S):
                current = bases[mark - self.start]
                following = bases[mark - self.start + 1]
                angle = np.max(subspace_angles(block @ current, following))
                worst = max(worst, float(np.sin(angle)))
        return worst


def _check_index(coc, k):
    if not 1 <= k <= coc.fiber_dim - 1:
        raise ValidationError('Splitting index must lie in [1, ' + str(coc.fiber_dim - 1) + ']. ',
                              field='k')


def oseledets_splitting(coc, k, start=0, stop=None):
    """
    Finite-time Oseledets splitting of index k on the marks [start, stop].

    :param coc: PoincareCocycle
    :param k: dim U
    :param start: First mark
    :param stop: Last mark; the end of the cocycle if None
    :return: Splitting
    """
    _check_index(coc, k)
    if stop is None:
        stop = coc.length
    start_basis = generic_basis(coc.fiber_dim)
    _, _, forward = qr_sweep(coc.blocks[:stop], q0=start_basis, record=True)
    _, backward = adjoint_sweep(coc.blocks[start:], q0=start_basis, record=True)
    U = np.array([q[:, :k] for q in forward[start:stop + 1]])
    S = np.array([q[:, k:] for q in backward[:stop - start + 1]])
    return Splitting(index=k, start=start, U=U, S=S)


def splitting_from_bases(coc, U0, S0, start, length):
    """
    Carries given bases of U and S at mark start forward through the cocycle.

    :param coc: PoincareCocycle
    :param U0: Array (n, k)
    :param S0: Array (n, n - k)
    :param start: Mark of the bases
    :param length: Number of blocks to carry them through
    :return: Splitting
    """
    U0 = np.asarray(U0, dtype=float).reshape(coc.fiber_dim, -1)
    S0 = np.asarray(S0, dtype=float).reshape(coc.fiber_dim, -1)
    blocks = coc.blocks[start:start + length]
    _, _, us = qr_sweep(blocks, q0=mgs_qr(U0)[0], record=True)
    _, _, ss = qr_sweep(blocks, q0=mgs_qr(S0)[0], record=True)
    return Splitting(index=U0.shape[1], start=start, U=np.array(us), S=np.array(ss))


def restricted_norms(matrix, basis):
    """
    Largest and smallest singular values of a matrix restricted to a subspace.
    """
    singular = np.linalg.svd(matrix @ basis, compute_uv=False)
    return float(singular[0]), float(singular[-1])


def domination_ratio(coc, split, m, t_mark):
    """
    rho = ‖P^m|S‖ / 𝔪(P^m|U) at a mark.

    :param coc: PoincareCocycle
    :param split: Splitting
    :param m: Length of the composed block
    :param t_mark: Mark of the base point
    :return: float
    """
    if t_mark + m > coc.length:
        raise ValidationError('Mark ' + str(t_mark) + ' plus m = ' + str(m) +
                              ' exceeds the cocycle length. ', field='m')
    angle = split.angle_at(t_mark)
    if angle < MIN_ANGLE:
        raise SplitDegenerate('Angle between U and S is ' + str(angle) + ' at mark ' +
                              str(t_mark) + '. ')
    composed = coc.compose(t_mark, m)
    top_s, _ = restricted_norms(composed, split.S_at(t_mark))
    _, bottom_u = restricted_norms(composed, split.U_at(t_mark))
    return top_s / bottom_u


@dataclass(frozen=True, eq=False)
class DominationReport:
    """
    Domination ratios of index k along an orbit.

    :param orbit_id: Label of the orbit
    :param k: Splitting index
    :param marks: Scanned marks
    :param ratios: Dict m -> array of ratios over the marks
    :param ratio_max: Dict m -> largest ratio
    :param verdicts: Dict m -> 'Lambda', 'Gamma' or 'inconclusive'
    :param delta_marks: Dict m -> marks where the ratio exceeds 1/2
    :param min_angle: Smallest angle between U and S over the marks
    :param invariance_defect: Invariance defect of the splitting
    """
    orbit_id: str
    k: int
    marks: tuple
    ratios: dict
    ratio_max: dict
    verdicts: dict
    delta_marks: dict
    min_angle: float
    invariance_defect: float

    def table(self):
        rows = [{'orbit': self.orbit_id, 'k': self.k, 'm': m, 'ratio_max': self.ratio_max[m],
                 'verdict': self.verdicts[m], 'delta_marks': len(self.delta_marks[m]),
                 'min_angle': self.min_angle} for m in sorted(self.verdicts)]
        return pd.DataFrame(rows, columns=['orbit', 'k', 'm', 'ratio_max', 'verdict',
                                           'delta_marks', 'min_angle'])


def scan_window(coc, m_max):
    """
    Marks [start, stop) scanned for a maximal m. A quarter of the cocycle
    on each side lets the forward and adjoint sweeps converge.
    """
    margin = coc.length // 4
    start, stop = margin, coc.length - margin - m_max
    if stop <= start:
        raise ValidationError('Cocycle of length ' + str(coc.length) +
                              ' is too short to scan m = ' + str(m_max) + '. ', field='horizon')
    return start, stop


def filtration_drift(coc, k, start, stop):
    """
    Largest principal angle between bases obtained from full and halved sweeps,
    for U at the first scanned mark and S at the last.
    """
    start_basis = generic_basis(coc.fiber_dim)
    _, _, full_u = qr_sweep(coc.blocks[:start], q0=start_basis, record=True)
    _, _, half_u = qr_sweep(coc.blocks[start // 2:start], q0=start_basis, record=True)
    tail = coc.length - stop
    _, full_s = adjoint_sweep(coc.blocks[stop:], q0=start_basis, record=True)
    _, half_s = adjoint_sweep(coc.blocks[stop:stop + max(tail // 2, 1)], q0=start_basis,
                              record=True)
    drift_u = np.max(subspace_angles(full_u[-1][:, :k], half_u[-1][:, :k]))
    drift_s = np.max(subspace_angles(full_s[0][:, k:], half_s[0][:, k:]))
    return float(max(drift_u, drift_s))


def scan_orbit(coc, k, m_grid):
    """
    Computes domination ratios of index k at every scanned mark for each m in the grid.

    :param coc: PoincareCocycle
    :param k: Splitting index
    :param m_grid: List of positive integers
    :return: DominationReport
    """
    m_grid = sorted(set(int(m) for m in m_grid))
    if not m_grid or m_grid[0] < 1:
        raise ValidationError('m_grid must hold positive integers. ', field='m_grid')
    start, stop = scan_window(coc, m_grid[-1])
    drift = filtration_drift(coc, k, start, stop)
    if drift >= DRIFT_TOLERANCE:
        raise InconclusiveSplitting('Filtration bases drift by ' + str(drift) +
                                    ' between horizons. ')
    split = oseledets_splitting(coc, k, start=start, stop=stop)
    defect = split.invariance_defect(coc)
    marks = tuple(range(start, stop))
    min_angle = min(split.angle_at(t) for t in marks)
    ratios, ratio_max, verdicts, delta_marks = dict(), dict(), dict(), dict()
    for m in m_grid:
        values = np.array([domination_ratio(coc, split, m, t) for t in marks])
        ratios[m] = values
        ratio_max[m] = float(np.max(values))
        delta_marks[m] = tuple(t for t, value in zip(marks, values) if value > THRESHOLD)
        if defect > INVARIANCE_TOLERANCE:
            verdicts[m] = INCONCLUSIVE
        elif np.all(values <= THRESHOLD - THRESHOLD_SLACK):
            verdicts[m] = LAMBDA
        else:
            verdicts[m] = GAMMA
    return DominationReport(orbit_id=coc.model_id, k=k, marks=marks, ratios=ratios,
                            ratio_max=ratio_max, verdicts=verdicts, delta_marks=delta_marks,
                            min_angle=float(min_angle), invariance_defect=defect)


def check_property_H(coc, split, m0, ell_list):
    """
    Checks that an m0-dominated splitting is also l-dominated for every l >= m0.

    :param coc: PoincareCocycle
    :param split: Splitting
    :param m0: Base domination length
    :param ell_list: Tested lengths
    :return: Dict l -> bool
    """
    marks = range(split.start, split.stop - m0 + 1)
    if not all(domination_ratio(coc, split, m0, t) <= THRESHOLD - THRESHOLD_SLACK for t in marks):
        raise NotDominated('Splitting is not ' + str(m0) + '-dominated. ')
    result = dict()
    for ell in ell_list:
        if ell < m0:
            raise ValidationError('Property H is stated for l >= m0. ', field='ell')
        tested = range(split.start, split.stop - ell + 1)
        result[ell] = all(domination_ratio(coc, split, ell, t) <= THRESHOLD for t in tested)
    return result


@dataclass(frozen=True)
class PropertyCheck:
    value: float
    floor: float
    holds: bool
    marks: tuple = ()


def check_property_T(report, angle_floor):
    """
    Compares the smallest angle between U and S with a floor.

    :param report: DominationReport
    :param angle_floor: Lower bound expected for the angle
    :return: PropertyCheck with the minimal angle as value
    """
    if LAMBDA not in report.verdicts.values():
        raise NotDominated('Property T needs a Lambda verdict. ')
    return PropertyCheck(value=report.min_angle, floor=angle_floor,
                         holds=report.min_angle >= angle_floor)


def recurrence_marks(coc, radius, reference=None):
    """
    Marks where the orbit returns within radius of a reference mark.

    :param coc: PoincareCocycle with states
    :param radius: Return radius
    :param reference: Reference mark; the first mark if None
    :return: Tuple of marks
    """
    if coc.states is None:
        raise ValidationError('Recurrence needs a cocycle built from an orbit. ', field='cocycle')
    reference = 0 if reference is None else reference
    periods = coc.periods or (np.inf,) * coc.states.shape[1]
    delta = coc.states - coc.states[reference]
    finite = np.isfinite(periods)
    delta[:, finite] -= np.asarray(periods)[finite] * np.round(delta[:, finite] /
                                                              np.asarray(periods)[finite])
    distance = np.linalg.norm(delta, axis=1)
    return tuple(int(t) for t in np.nonzero(distance <= radius)[0] if t != reference)


def check_property_E(coc, split, m, radius, reference=None):
    """
    Domination at the marks where the orbit comes back close to a reference mark,
    as a stand-in for domination on the orbit closure.

    :param coc: PoincareCocycle
    :param split: Splitting
    :param m: Domination length
    :param radius: Return radius
    :param reference: Reference mark
    :return: PropertyCheck with the worst ratio as value
    """
    if reference is None:
        reference = split.start
    marks = tuple(t for t in recurrence_marks(coc, radius, reference)
                  if split.start <= t <= split.stop and t + m <= coc.length)
    ratios = [domination_ratio(coc, split, m, t) for t in marks]
    worst = max(ratios) if ratios else 0.0
    return PropertyCheck(value=worst, floor=THRESHOLD, holds=worst <= THRESHOLD, marks=marks)


def uniqueness_defect(coc, k, mark, horizon):
    """
    Largest principal angle between two splittings at a mark estimated on
    disjoint windows. The near estimate sweeps [mark - horizon, mark) and
    [mark, mark + horizon) from one generic basis. The far estimate sweeps
    [mark - 2 horizon, mark - horizon) and [mark + horizon, mark + 2 horizon)
    from another, and is then carried to the mark by the cocycle.

    :param coc: PoincareCocycle
    :param k: Index
    :param mark: Mark where both splittings are compared
    :param horizon: Window length
    :return: float
    """
    _check_index(coc, k)
    if mark - 2 * horizon < 0 or mark + 2 * horizon > coc.length:
        raise ValidationError('Horizon ' + str(horizon) + ' does not fit around mark ' +
                              str(mark) + '. ', field='horizon')
    n = coc.fiber_dim
    near_u, _, _ = qr_sweep(coc.blocks[mark - horizon:mark], q0=generic_basis(n))
    near_s, _ = adjoint_sweep(coc.blocks[mark:mark + horizon], q0=generic_basis(n))
    far_u, _, _ = qr_sweep(coc.blocks[mark - 2 * horizon:mark - horizon],
                           q0=generic_basis(n, BASIS_SEED))
    far_s, _ = adjoint_sweep(coc.blocks[mark + horizon:mark + 2 * horizon],
                             q0=generic_basis(n, BASIS_SEED))
    carried_u = _carry(coc.blocks[mark - horizon:mark], far_u[:, :k])
    carried_s = _carry(coc.blocks[mark:mark + horizon][::-1].transpose(0, 2, 1), far_s[:, :k])
    return float(max(np.max(subspace_angles(near_u[:, :k], carried_u)),
                     np.max(subspace_angles(near_s[:, k:], null_space(carried_s.T)))))


def _carry(blocks, basis):
    for block in blocks:
        basis, _ = mgs_qr(block @ basis)
    return basis


def domination_map(model, k, m_grid, n_points, T, h=0.01, seed=0):
    """
    Verdicts of index k over sampled points, one row per (point, m).

    :param model: FlowModel
    :param k: Index
    :param m_grid: Tested m values
    :param n_points: Number of sampled points
    :param T: Cocycle length per point
    :param h: Step size
    :param seed: Sampling seed
    :return: pandas DataFrame
    """
    rng = np.random.default_rng(seed)
    points = sample_points(model, n_points, rng)
    rows = []
    axes = ['x' + str(i) for i in range(model.dim)]
    for i, coc in enumerate(batch_cocycles(model, points, h, T)):
        try:
            report = scan_orbit(coc, k, m_grid)
            for m in sorted(report.verdicts):
                rows.append(dict(zip(axes, points[i]), point=i, m=m,
                                 verdict=report.verdicts[m], ratio_max=report.ratio_max[m]))
        except InconclusiveSplitting:
            for m in sorted(set(m_grid)):
                rows.append(dict(zip(axes, points[i]), point=i, m=m,
                                 verdict=INCONCLUSIVE, ratio_max=np.nan))
    return pd.DataFrame(rows, columns=['point'] + axes + ['m', 'verdict', 'ratio_max'])
