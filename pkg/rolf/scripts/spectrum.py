"""
The spectrum module computes finite-time Lyapunov exponents of a Poincaré cocycle
by QR re-orthonormalization, Oseledets filtrations from the adjoint sweep,
exterior powers (compound matrices) and Monte Carlo estimates of LE_k
and of the gap integral J_k.
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
from functools import lru_cache
from itertools import combinations
import numpy as np
import pandas as pd
from scipy.stats import ortho_group
from rolf.scripts.base import build_config, write_manifest, run_pool
from rolf.scripts.flow_models import get_model, sample_points, speed
from rolf.scripts.integrator import integrate_batch
from rolf.scripts.io import write_table, write_report, write_cocycle, orbit_table
from rolf.scripts.poincare import cocycle_from_unit_maps, det_factor_check
from rolf.scripts.utils import IllConditioned, ValidationError, InconclusiveSplitting, \
    _create_logger
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

UNDERFLOW = 1e-300
GENERIC_DRIFT = 1e-2
CHUNK = 16
BASIS_SEED = 7


def start_exponents(inputs):
    """
    Takes all arguments and computes the finite-time spectrum at sampled points of a model.
    The cocycle and unit-time orbit of the first point are written as well.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'exponents')
    _create_logger(config.output)
    model = get_model(config.model, **config.model_params)
    points = sample_points(model, config.samples, np.random.default_rng(config.seed))
    jobs = [(model, points[i:i + CHUNK], config.step, config.horizon, i == 0)
            for i in range(0, len(points), CHUNK)]
    results = run_pool(_exponent_rows, jobs, config.workers)
    rows = [row for chunk, _ in results for row in chunk]
    first = results[0][1]
    table = pd.DataFrame(rows)
    write_table(table, os.path.join(config.output, 'exponents.tsv'))
    exponents = table[[name for name in table.columns if name.startswith('lambda_')]]
    summary = pd.DataFrame({'exponent': exponents.columns,
                            'mean': exponents.mean().to_numpy(),
                            'stderr': exponents.std(ddof=1).fillna(0).to_numpy() /
                            np.sqrt(len(table))})
    write_report(summary, os.path.join(config.output, 'exponents.txt'))
    write_cocycle(os.path.join(config.output, 'cocycle.tsv'), first.blocks, first.x_factors)
    write_table(orbit_table(first.states, speed(model, first.states)),
                os.path.join(config.output, 'orbit.tsv'))
    write_manifest(config, 'exponents', time.perf_counter() - started)
    logger.info('Completed exponent computation! ')


def _exponent_rows(job):
    model, points, h, T, keep = job
    rows = []
    cocycles = batch_cocycles(model, points, h, T)
    for point, coc in zip(points, cocycles):
        report = lyapunov_exponents(coc)
        row = {'x' + str(i): value for i, value in enumerate(point)}
        row.update({'lambda_' + str(i + 1): value for i, value in enumerate(report.exponents)})
        row.update({'sum': report.total, 'volume_defect': report.volume_defect,
                    'det_defect': det_factor_check(coc),
                    'reversal_defect': time_reversal_defect(coc),
                    'generic': report.generic})
        rows.append(row)
    return rows, cocycles[0] if keep else None


def start_lek(inputs):
    """
    Takes all arguments and estimates LE_k for every k in the config,
    together with the gap integral J_k over points without m-domination.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'le-k')
    _create_logger(config.output)
    model = get_model(config.model, **config.model_params)
    tables, summary = [], []
    for k in config.k:
        result = le_k(model, k, config.samples, config.j_max, config.step, config.seed)
        gap = gap_integral(model, k, config.samples, config.horizon, config.m_grid, config.step,
                           config.seed)
        tables.append(pd.DataFrame({'k': k, 'j': np.arange(1, config.j_max + 1),
                                    'a_j': result.means, 'stderr': result.stderr,
                                    'rate': result.rates}))
        summary.append({'k': k, 'estimate': result.estimate, 'argmin': result.argmin,
                        'violations': len(result.violations), 'samples': result.n_points,
                        'gap': gap.value, 'gap_stderr': gap.stderr,
                        'undominated': gap.n_undominated})
    write_table(pd.concat(tables, ignore_index=True), os.path.join(config.output, 'le_k.tsv'))
    write_report(pd.DataFrame(summary), os.path.join(config.output, 'le_k.txt'))
    write_manifest(config, 'le-k', time.perf_counter() - started)
    logger.info('Completed LE_k estimates! ')


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """
    Finite-time Lyapunov spectrum at the base point of a cocycle.

    :param exponents: Nonincreasing exponents per unit time
    :param filtration: One orthonormal basis (n x dim) per group of equal exponents,
        most expanded group first
    :param groups: Index ranges (start, stop) of the exponent groups
    :param horizon: Number of blocks T used
    :param convergence: Per-exponent drift between horizons T/2 and T
    :param log_speed_rate: (1/T) log x(T)
    """
    exponents: np.ndarray
    filtration: tuple
    groups: tuple
    horizon: int
    convergence: np.ndarray
    log_speed_rate: float

    @property
    def total(self):
        return float(np.sum(self.exponents))

    @property
    def volume_defect(self):
        """
        Deviation from the determinant identity: sum of exponents + (1/T) log x(T).
        """
        return self.total + self.log_speed_rate

    @property
    def generic(self):
        return bool(np.all(self.convergence < GENERIC_DRIFT))


@dataclass(frozen=True, eq=False)
class ExteriorCocycle:
    """
    k-th exterior power of a cocycle in the basis of increasing k-subsets.

    :param k: Degree
    :param blocks: Array (T, C(n,k), C(n,k)) of compound matrices
    :param x_factors: Inverse absolute determinants of the compound blocks
    :param subsets: Tuple of k-subsets indexing the basis e_I
    """
    k: int
    blocks: np.ndarray
    x_factors: np.ndarray
    subsets: tuple

    @property
    def length(self):
        return len(self.blocks)

    @property
    def fiber_dim(self):
        return self.blocks.shape[-1]

    def log_speed_ratio(self, length=None):
        if length is None:
            length = self.length
        return float(np.sum(np.log(self.x_factors[:length])))


def mgs_qr(matrix):
    """
    Modified Gram-Schmidt QR with a positive diagonal.

    :param matrix: Array (n, k)
    :return: Q (n, k), R (k, k)
    """
    q = np.array(matrix, dtype=float)
    k = q.shape[1]
    r = np.zeros((k, k))
    for i in range(k):
        r[i, i] = np.linalg.norm(q[:, i])
        if r[i, i] < UNDERFLOW:
            raise IllConditioned('R diagonal entry ' + str(i) + ' underflowed. ')
        q[:, i] /= r[i, i]
        for j in range(i + 1, k):
            r[i, j] = q[:, i] @ q[:, j]
            q[:, j] -= r[i, j] * q[:, i]
    return q, r


@lru_cache(maxsize=None)
def _generic_basis(n, seed):
    if seed is None:
        # discrete sine modes; every j x j minor of the first j columns is nonzero
        grid = np.arange(1, n + 1)
        return np.sqrt(2 / (n + 1)) * np.sin(np.pi * np.outer(grid, grid) / (n + 1))
    if n == 1:
        return np.ones((1, 1))
    return ortho_group.rvs(n, random_state=seed)


def generic_basis(n, seed=None):
    """
    Fixed orthonormal basis in general position. Sweeps that recover invariant
    subspaces start from it, so no leading span of columns meets a coordinate
    subspace of complementary dimension. With a seed, a Haar-distributed basis
    is drawn instead, for estimates that must start independently.

    :param n: Dimension
    :param seed: Seed of a random basis; the sine basis if None
    :return: Array (n, n)
    """
    return _generic_basis(n, seed).copy()


def qr_sweep(blocks, q0=None, record=False):
    """
    Pushes an orthonormal basis through the blocks, re-orthonormalizing every step.

    :param blocks: Array (T, n, n)
    :param q0: Starting basis (n, k); identity if None
    :param record: If true, the basis at every mark is returned as well
    :return: Final basis, accumulated log R diagonal per step (T, k), recorded bases or None
    """
    n = blocks.shape[-1]
    q = np.eye(n) if q0 is None else np.array(q0, dtype=float)
    logs = np.empty((len(blocks), q.shape[1]))
    history = [q] if record else None
    for j, block in enumerate(blocks):
        q, r = mgs_qr(block @ q)
        logs[j] = np.log(np.diag(r))
        if record:
            history.append(q)
    return q, logs, history


def adjoint_sweep(blocks, q0=None, record=False):
    """
    Pulls an orthonormal basis backwards through the transposed blocks.
    After a long sweep, the first columns span the directions most expanded
    by the forward cocycle and the last columns its least expanded directions.

    :param blocks: Array (T, n, n)
    :param q0: Basis at the final mark; identity if None
    :param record: If true, the basis at every mark 0..T is returned in mark order
    :return: Basis at mark 0, recorded bases or None
    """
    n = blocks.shape[-1]
    q = np.eye(n) if q0 is None else np.array(q0, dtype=float)
    history = [q] if record else None
    for block in blocks[::-1]:
        q, _ = mgs_qr(block.T @ q)
        if record:
            history.append(q)
    if record:
        history.reverse()
    return q, history


def _group_exponents(exponents, resolution):
    groups = []
    start = 0
    for i in range(1, len(exponents) + 1):
        if i == len(exponents) or exponents[i - 1] - exponents[i] >= resolution:
            groups.append((start, i))
            start = i
    return tuple(groups)


def lyapunov_exponents(coc, T=None):
    """
    Finite-time exponents by QR accumulation, with the forward filtration
    and the convergence drift between horizons T/2 and T.

    :param coc: PoincareCocycle or ExteriorCocycle
    :param T: Horizon in blocks; the full cocycle if None
    :return: SpectrumReport
    """
    if T is None:
        T = coc.length
    if not 1 <= T <= coc.length:
        raise ValidationError('Horizon must lie in [1, ' + str(coc.length) + ']. ', field='horizon')
    blocks = coc.blocks[:T]
    # the sorted rates do not depend on the starting flag
    _, logs, _ = qr_sweep(blocks)
    exponents = np.sort(logs.sum(axis=0) / T)[::-1]
    half = max(T // 2, 1)
    halfway = np.sort(logs[:half].sum(axis=0) / half)[::-1]
    groups = _group_exponents(exponents, 10.0 / T)
    basis, _ = adjoint_sweep(blocks, q0=generic_basis(blocks.shape[-1]))
    filtration = tuple(basis[:, a:b] for a, b in groups)
    return SpectrumReport(exponents=exponents, filtration=filtration, groups=groups, horizon=T,
                          convergence=np.abs(exponents - halfway),
                          log_speed_rate=coc.log_speed_ratio(T) / T)


def compound_matrix(matrix, k, subsets=None):
    """
    k-th compound matrix: entry (I, J) is the minor det A[I, J].
    Works on a single matrix or a stack of matrices.

    :param matrix: Array (..., n, n)
    :param k: Degree
    :param subsets: Precomputed k-subsets of range(n)
    :return: Array (..., C(n,k), C(n,k))
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[-1]
    if subsets is None:
        subsets = tuple(combinations(range(n), k))
    size = len(subsets)
    result = np.empty(matrix.shape[:-2] + (size, size))
    for a, rows in enumerate(subsets):
        picked = matrix[..., rows, :]
        for b, cols in enumerate(subsets):
            result[..., a, b] = np.linalg.det(picked[..., :, cols])
    return result


def exterior_power(coc, k):
    """
    k-th exterior power of a cocycle.

    :param coc: PoincareCocycle
    :param k: Degree, 1 <= k <= n - 1
    :return: ExteriorCocycle
    """
    n = coc.fiber_dim
    if not 1 <= k <= max(n - 1, 1):
        raise ValidationError('Exterior degree must lie in [1, ' + str(n - 1) + ']. ', field='k')
    subsets = tuple(combinations(range(n), k))
    blocks = compound_matrix(coc.blocks, k, subsets)
    return ExteriorCocycle(k=k, blocks=blocks,
                           x_factors=1.0 / np.abs(np.linalg.det(blocks)), subsets=subsets)


def sigma_k(report, k):
    """
    Sum of the k largest exponents; Sigma_0 = 0.

    :param report: SpectrumReport
    :param k: Number of exponents, 0 <= k <= n
    :return: float
    """
    if not 0 <= k <= len(report.exponents):
        raise ValidationError('k must lie in [0, ' + str(len(report.exponents)) + ']. ', field='k')
    return float(np.sum(report.exponents[:k]))


def time_reversal_defect(coc, T=None):
    """
    Largest difference between the exponents of the reversed cocycle
    and the negated, reversed forward exponents.

    :param coc: PoincareCocycle
    :param T: Horizon
    :return: float
    """
    if T is None:
        T = coc.length
    forward = lyapunov_exponents(coc, T).exponents
    backward = lyapunov_exponents(coc.segment(0, T).reversed(), T).exponents
    return float(np.max(np.abs(backward + forward[::-1])))


def log_wedge_norms(blocks, k):
    """
    log ‖∧^k (A_{j-1} ... A_0)‖ for j = 1..T, from the k largest singular values
    of running products that are rescaled to avoid overflow.

    :param blocks: Array (T, n, n)
    :param k: Degree
    :return: Array (T,)
    """
    n = blocks.shape[-1]
    product = np.eye(n)
    scale = 0.0
    values = np.empty(len(blocks))
    for j, block in enumerate(blocks):
        product = block @ product
        size = np.max(np.abs(product))
        product /= size
        scale += np.log(size)
        singular = np.linalg.svd(product, compute_uv=False)[:k]
        values[j] = k * scale + np.sum(np.log(singular))
    return values


def batch_cocycles(model, points, h, n_units):
    """
    Integrates many points at once and returns one cocycle per point.

    :param model: FlowModel
    :param points: Array (n_points, d)
    :param h: Step size
    :param n_units: Cocycle length
    :return: List of PoincareCocycle
    """
    batch = integrate_batch(model, points, h, n_units)
    return [cocycle_from_unit_maps(model, batch.states[i], batch.unit_maps[i])
            for i in range(len(points))]


@dataclass(frozen=True, eq=False)
class LeKResult:
    """
    Monte Carlo estimate of LE_k as the infimum of a_j / j.

    :param k: Degree
    :param means: a_j for j = 1..j_max
    :param stderr: Standard errors of a_j
    :param rates: a_j / j
    :param estimate: min_j a_j / j
    :param argmin: j attaining the minimum
    :param violations: Pairs (i, j) where subadditivity fails beyond 3 SE
    :param n_points: Number of sampled points
    """
    k: int
    means: np.ndarray
    stderr: np.ndarray
    rates: np.ndarray
    estimate: float
    argmin: int
    violations: tuple
    n_points: int

    @property
    def subadditive(self):
        return len(self.violations) == 0


def subadditivity_violations(means, stderr, tolerance=3.0):
    """
    Lists pairs (i, j), i <= j, with a_{i+j} > a_i + a_j + tolerance * SE.
    Indices are 1-based lengths.

    :param means: a_j for j = 1..J
    :param stderr: Standard errors
    :param tolerance: Number of standard errors allowed
    :return: Tuple of pairs
    """
    violations = []
    size = len(means)
    for i in range(1, size + 1):
        for j in range(i, size + 1 - i):
            se = np.sqrt(stderr[i - 1] ** 2 + stderr[j - 1] ** 2 + stderr[i + j - 1] ** 2)
            if means[i + j - 1] > means[i - 1] + means[j - 1] + tolerance * se + 1e-9:
                violations.append((i, j))
    return tuple(violations)


def le_k(model, k, n_points, j_max, h=0.01, seed=0):
    """
    Estimates LE_k = inf_j (1/j) ∫ log‖∧^k P^j‖ dμ by sampling uniform points.

    :param model: FlowModel
    :param k: Degree
    :param n_points: Number of sampled points
    :param j_max: Largest j
    :param h: Step size
    :param seed: Sampling seed
    :return: LeKResult
    """
    if n_points < 1:
        raise ValidationError('At least one point is needed. ', field='samples')
    if j_max < 2:
        raise ValidationError('j_max must be at least 2. ', field='j_max')
    rng = np.random.default_rng(seed)
    points = sample_points(model, n_points, rng)
    logger.info('Integrating ' + str(n_points) + ' points of ' + model.id +
                ' for ' + str(j_max) + ' time units. ')
    cocycles = batch_cocycles(model, points, h, j_max)
    logs = np.array([log_wedge_norms(coc.blocks, k) for coc in cocycles])
    means = logs.mean(axis=0)
    if n_points > 1:
        stderr = logs.std(axis=0, ddof=1) / np.sqrt(n_points)
    else:
        stderr = np.zeros(j_max)
    rates = means / np.arange(1, j_max + 1)
    argmin = int(np.argmin(rates))
    violations = subadditivity_violations(means, stderr)
    if violations:
        logger.warning('Subadditivity fails at ' + str(len(violations)) + ' pairs. ')
    return LeKResult(k=k, means=means, stderr=stderr, rates=rates, estimate=float(rates[argmin]),
                     argmin=argmin + 1, violations=violations, n_points=n_points)


@dataclass(frozen=True)
class GapEstimate:
    value: float
    stderr: float
    n_points: int
    n_undominated: int


def point_gap(coc, k, m_grid):
    """
    Exponent gap lambda_k - lambda_{k+1} at the base point if no m in the grid
    gives an m-dominated splitting of index k, else 0.

    :param coc: PoincareCocycle
    :param k: Index
    :param m_grid: Tested m values
    :return: Gap, True if the point counted as undominated
    """
    from rolf.scripts.domination import scan_orbit
    report = lyapunov_exponents(coc)
    try:
        scan = scan_orbit(coc, k, m_grid)
        dominated = any(verdict == 'Lambda' for verdict in scan.verdicts.values())
    except InconclusiveSplitting:
        dominated = False
    if dominated:
        return 0.0, False
    return max(float(report.exponents[k - 1] - report.exponents[k]), 0.0), True


def gap_integral(model, k, n_points, T, m_grid, h=0.01, seed=0):
    """
    Monte Carlo estimate of J_k, the integral of lambda_k - lambda_{k+1}
    over sampled points without m-domination for all tested m.

    :param model: FlowModel
    :param k: Index
    :param n_points: Number of sampled points
    :param T: Cocycle length per point
    :param m_grid: Tested m values
    :param h: Step size
    :param seed: Sampling seed
    :return: GapEstimate
    """
    rng = np.random.default_rng(seed)
    points = sample_points(model, n_points, rng)
    gaps = []
    undominated = 0
    for coc in batch_cocycles(model, points, h, T):
        gap, counted = point_gap(coc, k, m_grid)
        gaps.append(gap)
        undominated += int(counted)
    gaps = np.array(gaps)
    stderr = float(gaps.std(ddof=1) / np.sqrt(n_points)) if n_points > 1 else 0.0
    return GapEstimate(value=float(gaps.mean()), stderr=stderr, n_points=n_points,
                       n_undominated=undominated)
