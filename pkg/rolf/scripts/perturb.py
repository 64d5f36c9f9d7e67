"""
The perturb module builds realizable linear flows at the cocycle level.

A plan is a sequence of maps L_j close to the blocks A_j: passthrough steps
copy the block, rotation steps compose it with a rotation on a 2-plane, and
conjugated steps compose it with a rotation conjugated by the quotient cocycle.
Exchanges send a vector of the unstable candidate U at the base mark into the
stable candidate S at the end of the plan; a certificate records that vector pair
together with the residual of the chain and the constants used.
The measure budget kappa is kept as a ledger through a cylinder-measure cost model.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import os
import sys
import time
from dataclasses import dataclass, field
import numpy as np
import pandas as pd
from scipy.linalg import null_space
from scipy.stats import ortho_group
from rolf.scripts.base import build_config, write_manifest, run_pool
from rolf.scripts.domination import Splitting, splitting_from_bases, oseledets_splitting, \
    domination_ratio, THRESHOLD
from rolf.scripts.flow_models import get_model, sample_points
from rolf.scripts.io import read_record, write_record, write_table, write_report, require, \
    read_cocycle
from rolf.scripts.poincare import PoincareCocycle
from rolf.scripts.spectrum import mgs_qr, lyapunov_exponents, sigma_k, log_wedge_norms, \
    qr_sweep, batch_cocycles
from rolf.scripts.utils import _create_logger, ValidationError, ParseError, VerificationError, \
    AngleBudgetExceeded, KappaOverflow, NoMixingNeeded, QuotientIllConditioned, HorizonTooShort, \
    SplitDegenerate, NumericalError
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

MAX_ANGLE = np.pi / 3
C_MARGIN = 1e-6
THETA_MARGIN = 1e-9
GAMMA = 1e-8
RESIDUAL_TOLERANCE = 1e-8
DET_TOLERANCE = 1e-10
CAMPAIGN_LAMBDA = 0.999

SMALL_ANGLE = 'SmallAngle'
NORM_RATIO = 'NormRatio'
ROTATION_CHAIN = 'RotationChain'
CASES = (SMALL_ANGLE, NORM_RATIO, ROTATION_CHAIN)

PASSTHROUGH = 'passthrough'
ROTATION = 'rotation'
BACK_ROTATION = 'back-rotation'
CONJUGATED = 'conjugated'
STEP_KINDS = (PASSTHROUGH, ROTATION, BACK_ROTATION, CONJUGATED)


def start_perturb(inputs):
    """
    Takes all arguments and runs a single exchange, the exponent-lowering experiment
    or a certificate campaign, depending on the mode.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'perturb')
    _create_logger(config.output)
    cost_model = cost_model_for(config)
    if config.mode == 'campaign':
        tables = [certificate_campaign(case, config.trials, config.seed, config.workers,
                                       epsilon=config.epsilon, kappa=config.kappa,
                                       cost_model=cost_model) for case in config.cases]
        table = pd.concat(tables, ignore_index=True)
        write_table(table, os.path.join(config.output, 'campaign.tsv'))
        summary = table.groupby('requested').agg(trials=('trial', 'size'),
                                                 residual_max=('residual', 'max'),
                                                 deviation_max=('max_deviation', 'max'),
                                                 schedule_ok=('schedule_ok', 'all'),
                                                 guard_ok=('guard_ok', 'all')).reset_index()
        write_report(summary, os.path.join(config.output, 'campaign.txt'))
    else:
        coc = source_cocycle(config)
        k = config.k[0]
        if config.mode == 'local':
            result = lower_exponent_experiment(coc, k, config.delta, config.epsilon, config.kappa,
                                               min(config.horizon, coc.length),
                                               max_angle=config.max_angle, cost_model=cost_model)
            plan, certificate = result.plan, result.certificate
            table = pd.DataFrame([result.summary()])
            write_table(table, os.path.join(config.output, 'local.tsv'))
            write_report(table, os.path.join(config.output, 'local.txt'))
        else:
            split = oseledets_splitting(coc, k)
            _, m = fit_schedule(coc, 0, config.epsilon, config.max_angle, coc.length)
            plan, certificate = exchange(coc, split, m, config.epsilon, config.kappa, base=0,
                                         max_angle=config.max_angle, cost_model=cost_model)
            table = pd.DataFrame([certificate.summary()])
            write_table(table, os.path.join(config.output, 'exchange.tsv'))
            write_report(table, os.path.join(config.output, 'exchange.txt'))
        validate_plan(plan, coc)
        write_record(plan.to_record(), os.path.join(config.output, 'plan.yaml'))
        if certificate is not None:
            write_record(certificate.to_record(), os.path.join(config.output, 'certificate.yaml'))
    write_manifest(config, 'perturb', time.perf_counter() - started)
    logger.info('Completed perturbation run! ')


def start_replay(inputs):
    """
    Re-verifies a saved plan and certificate without recomputing the cocycle.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'replay')
    _create_logger(config.output)
    if not inputs.get('plan') or not inputs.get('certificate'):
        raise ValidationError('Replay needs a plan and a certificate file. ', field='plan')
    plan = plan_from_record(*read_record(inputs['plan']))
    certificate = certificate_from_record(*read_record(inputs['certificate']))
    check = validate_plan(plan)
    residual = verify_certificate(plan, certificate)
    table = pd.DataFrame([{'case': certificate.case, 'length': plan.length,
                           'residual': residual, 'max_deviation': check.max_deviation,
                           'det_defect': check.det_defect, 'verdict': 'pass'}])
    write_table(table, os.path.join(config.output, 'replay.tsv'))
    write_report(table, os.path.join(config.output, 'replay.txt'))
    write_manifest(config, 'replay', time.perf_counter() - started)
    logger.info('Certificate verified with residual ' + str(residual) + '. ')


@dataclass(frozen=True)
class KappaCostModel:
    """
    Relative measure of a flowbox spent on a chain of rotations:
    1 - lam^(n (2d - 3)) sigma^d for n rotations in dimension d.
    """
    lam: float = 0.99
    sigma: float = 0.95

    def __post_init__(self):
        for name in ('lam', 'sigma'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValidationError('Cost parameter must lie in (0, 1). ', field='cost_' + name)

    def cost(self, n_rotations, d):
        if n_rotations == 0:
            return 0.0
        return float(1.0 - self.lam ** (n_rotations * (2 * d - 3)) * self.sigma ** d)


def cost_model_for(config):
    """
    Cost model of a run. Without a configured lambda, campaigns use CAMPAIGN_LAMBDA,
    since their rotation chains run up to dimension 5.

    :param config: ExperimentConfig
    :return: KappaCostModel
    """
    lam = config.cost_lambda
    if lam is None:
        lam = CAMPAIGN_LAMBDA if config.mode == 'campaign' else KappaCostModel.lam
    return KappaCostModel(lam=lam, sigma=config.cost_sigma)


@dataclass(frozen=True)
class ConstantSchedule:
    """
    Constants of an exchange over a window of blocks.

    :param epsilon: Perturbation budget
    :param xi0: Largest rotation angle with sup ‖A‖ sqrt(2) sin(xi0) <= epsilon
    :param c: Bound on 1 / sin^2(xi0) and on the condition numbers of one and two blocks
    :param theta: Largest angle of a single chain rotation
    :param m_min: Smallest admissible chain length, ceil(2 pi / theta)
    :param sup_norm: Largest block norm in the window
    """
    epsilon: float
    xi0: float
    c: float
    theta: float
    m_min: int
    sup_norm: float

    @property
    def quotient_bound(self):
        return 8 * self.c / np.sin(self.xi0) ** 6

    @property
    def conjugation_bound(self):
        return self.quotient_bound * np.sqrt(2) * np.sin(self.theta)

    def violations(self, m=None):
        failures = []
        sin_xi0 = np.sin(self.xi0)
        if self.c < 1 / sin_xi0 ** 2:
            failures.append('c < 1 / sin^2(xi0)')
        if not 8 * np.sqrt(2) * self.c * np.sin(self.theta) < self.epsilon * sin_xi0 ** 6:
            failures.append('8 sqrt(2) c sin(theta) >= epsilon sin^6(xi0)')
        if m is not None and m < 2 * np.pi / self.theta:
            failures.append('m < 2 pi / theta')
        return failures

    def to_record(self):
        return {'epsilon': float(self.epsilon), 'xi0': float(self.xi0), 'c': float(self.c),
                'theta': float(self.theta), 'm_min': int(self.m_min),
                'sup_norm': float(self.sup_norm)}


def constant_schedule(blocks, epsilon, max_angle=MAX_ANGLE):
    """
    Derives xi0, c and theta for a window of blocks.

    :param blocks: Array (m, n, n)
    :param epsilon: Perturbation budget
    :param max_angle: Upper limit for xi0
    :return: ConstantSchedule
    """
    if epsilon <= 0:
        raise ValidationError('Epsilon must be positive. ', field='epsilon')
    if not 0 < max_angle <= np.pi / 2:
        raise ValidationError('Maximal angle must lie in (0, pi/2]. ', field='max_angle')
    blocks = np.asarray(blocks, dtype=float)
    sup_norm = float(np.max(np.linalg.norm(blocks, ord=2, axis=(1, 2))))
    sin_xi0 = min(epsilon / (np.sqrt(2) * sup_norm), np.sin(max_angle))
    xi0 = float(np.arcsin(sin_xi0))
    c = max(1 / sin_xi0 ** 2, float(np.max(np.linalg.cond(blocks))))
    if len(blocks) > 1:
        c = max(c, float(np.max(np.linalg.cond(blocks[1:] @ blocks[:-1]))))
    c *= 1 + C_MARGIN
    sin_theta = epsilon * sin_xi0 ** 6 / (8 * np.sqrt(2) * c * max(1.0, sup_norm))
    theta = float(np.arcsin(sin_theta * (1 - THETA_MARGIN)))
    return ConstantSchedule(epsilon=float(epsilon), xi0=xi0, c=c, theta=theta,
                            m_min=int(np.ceil(2 * np.pi / theta)), sup_norm=sup_norm)


def fit_schedule(coc, base, epsilon, max_angle=MAX_ANGLE, limit=None):
    """
    Finds the shortest window starting at base whose own schedule admits its length.

    :param coc: PoincareCocycle
    :param base: First mark
    :param epsilon: Perturbation budget
    :param max_angle: Upper limit for xi0
    :param limit: Last mark the window may reach
    :return: ConstantSchedule, window length
    """
    limit = coc.length if limit is None else limit
    m = 2
    while True:
        if base + m > limit:
            raise AngleBudgetExceeded('No admissible window starting at mark ' + str(base) +
                                      ' fits before mark ' + str(limit) + '.', min_length=m)
        schedule = constant_schedule(coc.blocks[base:base + m], epsilon, max_angle)
        if schedule.m_min <= m:
            return schedule, m
        m = schedule.m_min


def rotation_matrix(plane, angle):
    """
    Rotation by angle in the plane spanned by the orthonormal columns of plane,
    from the first column towards the second; identity on the complement.
    """
    e1, e2 = plane[:, 0], plane[:, 1]
    return np.eye(len(e1)) + (np.cos(angle) - 1) * (np.outer(e1, e1) + np.outer(e2, e2)) + \
        np.sin(angle) * (np.outer(e2, e1) - np.outer(e1, e2))


def plane_between(x, y):
    """
    Plane and angle of the rotation taking the direction of x to the direction of y.

    :param x: Nonzero vector
    :param y: Nonzero vector
    :return: Array (n, 2), angle in [0, pi]
    """
    x = x / np.linalg.norm(x)
    y = y / np.linalg.norm(y)
    normal = y - (x @ y) * x
    size = np.linalg.norm(normal)
    if size < 1e-15:
        normal = null_space(x[None, :])[:, 0]
    else:
        normal = normal / size
    return np.column_stack([x, normal]), float(np.arctan2(size, x @ y))


@dataclass(frozen=True, eq=False)
class PlanStep:
    """
    One map of a realizable linear flow.

    :param mark: Mark of the block
    :param L: Perturbed map
    :param A: Block of the cocycle
    :param kind: passthrough, rotation, back-rotation or conjugated
    :param plane: Basis of the rotation plane (rotations) or of the quotient (conjugated)
    :param angle: Rotation angle
    """
    mark: int
    L: np.ndarray
    A: np.ndarray
    kind: str = PASSTHROUGH
    plane: np.ndarray = None
    angle: float = 0.0

    @property
    def deviation(self):
        return float(np.linalg.norm(self.L - self.A, ord=2))


def _check_plane(coc, plane):
    plane = np.asarray(plane, dtype=float)
    if plane.shape != (coc.fiber_dim, 2) or \
            np.max(np.abs(plane.T @ plane - np.eye(2))) > 1e-10:
        raise ValidationError('Rotation plane must be an orthonormal pair in the fiber. ',
                              field='plane')
    return plane


def rotation_step(coc, mark, plane, angle, xi0):
    """
    Step L = A_mark R, rotating before the block.

    :param coc: PoincareCocycle
    :param mark: Mark of the block
    :param plane: Array (n, 2) with orthonormal columns
    :param angle: Rotation angle
    :param xi0: Largest admissible angle
    :return: PlanStep
    """
    plane = _check_plane(coc, plane)
    if abs(angle) > xi0 + 1e-12:
        raise AngleBudgetExceeded('Rotation of ' + str(angle) + ' exceeds xi0 = ' + str(xi0) + '.')
    block = coc.blocks[mark]
    return PlanStep(mark=mark, L=block @ rotation_matrix(plane, angle), A=block, kind=ROTATION,
                    plane=plane, angle=float(angle))


def back_rotation_step(coc, mark, plane, angle, xi0):
    """
    Step L = R A_mark, rotating after the block.
    """
    plane = _check_plane(coc, plane)
    if abs(angle) > xi0 + 1e-12:
        raise AngleBudgetExceeded('Rotation of ' + str(angle) + ' exceeds xi0 = ' + str(xi0) + '.')
    block = coc.blocks[mark]
    return PlanStep(mark=mark, L=rotation_matrix(plane, angle) @ block, A=block,
                    kind=BACK_ROTATION, plane=plane, angle=float(angle))


@dataclass(frozen=True, eq=False)
class RealizablePlan:
    """
    (epsilon, kappa)-realizable linear flow starting at a base mark.

    :param base: First mark
    :param steps: Tuple of PlanStep, one per mark
    :param epsilon: Perturbation budget
    :param kappa: Measure budget in (0, 1)
    :param kappa_spent: Measure claimed by the rotations
    :param gamma: Relative matching tolerance of passthrough steps
    :param schedule: ConstantSchedule of the exchange, if any
    """
    base: int
    steps: tuple
    epsilon: float
    kappa: float
    kappa_spent: float
    gamma: float = GAMMA
    schedule: ConstantSchedule = None

    @property
    def length(self):
        return len(self.steps)

    @property
    def blocks(self):
        return np.array([step.L for step in self.steps])

    @property
    def cocycle_blocks(self):
        return np.array([step.A for step in self.steps])

    @property
    def rotations(self):
        return sum(1 for step in self.steps if step.kind != PASSTHROUGH and step.angle != 0)

    @property
    def max_deviation(self):
        return max((step.deviation for step in self.steps), default=0.0)

    def to_record(self):
        steps = [{'mark': int(step.mark), 'kind': step.kind, 'angle': float(step.angle),
                  'plane': None if step.plane is None else step.plane.tolist(),
                  'L': step.L.tolist(), 'A': step.A.tolist()} for step in self.steps]
        return {'base': int(self.base), 'length': self.length, 'epsilon': float(self.epsilon),
                'kappa': float(self.kappa), 'kappa_spent': float(self.kappa_spent),
                'gamma': float(self.gamma),
                'schedule': None if self.schedule is None else self.schedule.to_record(),
                'steps': steps}


def _matrix(value, size, shape=None):
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError('Matrix entries are not numbers.', offset=size)
    if matrix.ndim != 2 or (shape is not None and matrix.shape != shape):
        raise ParseError('Matrix has the wrong shape.', offset=size)
    return matrix


def plan_from_record(record, size=None):
    """
    Rebuilds a plan from its YAML record.

    :param record: Dict as written by RealizablePlan.to_record
    :param size: Byte size of the source file, used as offset for missing fields
    :return: RealizablePlan
    """
    steps = []
    raw_steps = require(record, 'steps', size)
    length = require(record, 'length', size)
    if not isinstance(raw_steps, list) or len(raw_steps) != length:
        raise ParseError('Plan lists ' + str(length) + ' steps but holds fewer.', offset=size)
    for raw in raw_steps:
        L = _matrix(require(raw, 'L', size), size)
        A = _matrix(require(raw, 'A', size), size, L.shape)
        plane = raw.get('plane')
        kind = require(raw, 'kind', size)
        if kind not in STEP_KINDS:
            raise ParseError('Unknown step kind ' + str(kind) + '.', offset=size)
        steps.append(PlanStep(mark=int(require(raw, 'mark', size)), L=L, A=A, kind=kind,
                              plane=None if plane is None else _matrix(plane, size),
                              angle=float(require(raw, 'angle', size))))
    schedule = record.get('schedule')
    if schedule is not None:
        schedule = ConstantSchedule(**{key: require(schedule, key, size) for key in
                                       ('epsilon', 'xi0', 'c', 'theta', 'm_min', 'sup_norm')})
    return RealizablePlan(base=int(require(record, 'base', size)), steps=tuple(steps),
                          epsilon=float(require(record, 'epsilon', size)),
                          kappa=float(require(record, 'kappa', size)),
                          kappa_spent=float(require(record, 'kappa_spent', size)),
                          gamma=float(require(record, 'gamma', size)), schedule=schedule)


def passthrough_plan(coc, start, length, epsilon=0.0, kappa=0.0):
    """
    The cocycle itself as a plan; it is realizable for every epsilon and kappa.

    :param coc: PoincareCocycle
    :param start: First mark
    :param length: Number of blocks
    :param epsilon: Budget recorded on the plan
    :param kappa: Measure budget claimed by the plan
    :return: RealizablePlan
    """
    if start < 0 or length < 0 or start + length > coc.length:
        raise ValidationError('Passthrough window leaves the cocycle. ', field='length')
    steps = tuple(PlanStep(mark=j, L=coc.blocks[j], A=coc.blocks[j])
                  for j in range(start, start + length))
    return RealizablePlan(base=start, steps=steps, epsilon=epsilon, kappa=kappa,
                          kappa_spent=kappa)


def concatenate(plans):
    """
    Joins time-contiguous plans; lengths and kappa budgets add up.

    :param plans: List of RealizablePlan
    :return: RealizablePlan
    """
    plans = [plan for plan in plans if plan.length > 0] or list(plans)[:1]
    if not plans:
        raise ValidationError('Nothing to concatenate. ', field='plans')
    if len(plans) == 1:
        return plans[0]
    for first, second in zip(plans, plans[1:]):
        if second.base != first.base + first.length:
            raise ValidationError('Plans are not contiguous: mark ' + str(first.base + first.length) +
                                  ' is followed by ' + str(second.base) + '. ', field='plans')
    kappa = sum(plan.kappa for plan in plans)
    if kappa >= 1:
        raise KappaOverflow('Concatenated measure budget ' + str(kappa) + ' is not below 1. ')
    schedule = next((plan.schedule for plan in plans if plan.schedule is not None), None)
    return RealizablePlan(base=plans[0].base,
                          steps=tuple(step for plan in plans for step in plan.steps),
                          epsilon=max(plan.epsilon for plan in plans), kappa=kappa,
                          kappa_spent=sum(plan.kappa_spent for plan in plans),
                          gamma=min(plan.gamma for plan in plans), schedule=schedule)


@dataclass(frozen=True)
class PlanCheck:
    max_deviation: float
    det_defect: float
    kappa_spent: float


def validate_plan(plan, coc=None):
    """
    Asserts every plan invariant: ‖L_j - A_j‖ <= epsilon, determinant neutrality,
    exact passthrough steps, the kappa ledger and the constant schedule.
    If a cocycle is given, the stored blocks must match it.

    :param plan: RealizablePlan
    :param coc: PoincareCocycle or None
    :return: PlanCheck
    """
    failures = []
    deviation = plan.max_deviation
    if deviation > plan.epsilon:
        failures.append('max ‖L - A‖ = ' + str(deviation) + ' exceeds epsilon')
    det_defect = 0.0
    if plan.length:
        _, log_l = np.linalg.slogdet(plan.blocks)
        _, log_a = np.linalg.slogdet(plan.cocycle_blocks)
        det_defect = float(abs(np.sum(log_l) - np.sum(log_a)))
    if det_defect > DET_TOLERANCE:
        failures.append('determinant defect ' + str(det_defect))
    for step in plan.steps:
        if step.kind == PASSTHROUGH and \
                np.linalg.norm(step.L - step.A) > plan.gamma * np.linalg.norm(step.A):
            failures.append('passthrough step at mark ' + str(step.mark) + ' differs from its block')
        if coc is not None and \
                np.linalg.norm(step.A - coc.blocks[step.mark]) > plan.gamma * np.linalg.norm(step.A):
            failures.append('block at mark ' + str(step.mark) + ' does not match the cocycle')
    marks = [step.mark for step in plan.steps]
    if marks != list(range(plan.base, plan.base + plan.length)):
        failures.append('marks are not contiguous')
    if plan.kappa_spent > plan.kappa or plan.kappa >= 1:
        failures.append('kappa ledger ' + str(plan.kappa_spent) + ' / ' + str(plan.kappa))
    if plan.schedule is not None:
        failures.extend(plan.schedule.violations(plan.length))
    if failures:
        raise VerificationError('Plan is not realizable: ' + '; '.join(failures) + '.')
    return PlanCheck(max_deviation=deviation, det_defect=det_defect, kappa_spent=plan.kappa_spent)


@dataclass(frozen=True, eq=False)
class ExchangeCertificate:
    """
    Evidence that a plan sends u at its base mark into the direction s at its end.

    :param case: SmallAngle, NormRatio or RotationChain
    :param base: Base mark
    :param length: Plan length m
    :param u: Vector in U at the base mark
    :param s: Unit vector in S at mark base + m
    :param residual: ‖chain(u) - alpha s‖ / ‖alpha s‖ for the best alpha
    :param constants: Dict with xi0, c, theta, m, m_min and case-specific values
    """
    case: str
    base: int
    length: int
    u: np.ndarray
    s: np.ndarray
    residual: float
    constants: dict = field(default_factory=dict)

    def summary(self):
        row = {'case': self.case, 'base': self.base, 'length': self.length,
               'residual': self.residual}
        row.update(self.constants)
        return row

    def to_record(self):
        return {'case': self.case, 'base': int(self.base), 'length': int(self.length),
                'u': self.u.tolist(), 's': self.s.tolist(), 'residual': float(self.residual),
                'constants': {key: float(value) for key, value in self.constants.items()}}


def certificate_from_record(record, size=None):
    case = require(record, 'case', size)
    if case not in CASES:
        raise ParseError('Unknown exchange case ' + str(case) + '.', offset=size)
    try:
        u = np.array(require(record, 'u', size), dtype=float)
        s = np.array(require(record, 's', size), dtype=float)
    except (TypeError, ValueError):
        raise ParseError('Certificate vectors are not numeric.', offset=size)
    return ExchangeCertificate(case=case, base=int(require(record, 'base', size)),
                               length=int(require(record, 'length', size)), u=u, s=s,
                               residual=float(require(record, 'residual', size)),
                               constants=dict(record.get('constants') or {}))


def apply_chain(plan, vector):
    """
    Image of a vector under the plan, normalized after each step.
    """
    image = np.array(vector, dtype=float)
    for step in plan.steps:
        image = step.L @ image
        image /= np.linalg.norm(image)
    return image


def chain_residual(plan, u, s):
    image = apply_chain(plan, u)
    alpha = (image @ s) / (s @ s)
    if alpha == 0:
        return np.inf
    return float(np.linalg.norm(image - alpha * s) / np.linalg.norm(alpha * s))


def verify_certificate(plan, certificate, tolerance=RESIDUAL_TOLERANCE):
    """
    Recomputes the residual of a certificate from the stored plan.

    :param plan: RealizablePlan
    :param certificate: ExchangeCertificate
    :param tolerance: Largest accepted residual
    :return: Residual
    """
    if certificate.base != plan.base or certificate.length != plan.length:
        raise VerificationError('Certificate window does not match the plan. ')
    if certificate.u.shape != certificate.s.shape or \
            (plan.length and certificate.u.shape[0] != plan.steps[0].L.shape[0]):
        raise VerificationError('Certificate vectors do not match the fiber dimension. ')
    residual = chain_residual(plan, certificate.u, certificate.s)
    if not residual <= tolerance:
        raise VerificationError('Certificate residual ' + str(residual) +
                                ' exceeds ' + str(tolerance) + '. ')
    return residual


def _push(coc, vectors, start, stop, normalize=True):
    image = np.array(vectors, dtype=float)
    for j in range(start, stop):
        image = coc.blocks[j] @ image
        if normalize:
            image /= np.linalg.norm(image)
    return image


def _pull(coc, vector, start, stop):
    image = np.array(vector, dtype=float)
    for j in range(start - 1, stop - 1, -1):
        image = np.linalg.solve(coc.blocks[j], image)
        image /= np.linalg.norm(image)
    return image


def _check_window(coc, split, base, m):
    if m < 1 or base < 0 or base + m > coc.length:
        raise ValidationError('Exchange window [' + str(base) + ', ' + str(base + m) +
                              ') leaves the cocycle. ', field='m')
    if base < split.start or base + m > split.stop:
        raise ValidationError('Splitting does not cover the exchange window. ', field='m')


def _passthrough_steps(coc, base, m):
    return [PlanStep(mark=j, L=coc.blocks[j], A=coc.blocks[j]) for j in range(base, base + m)]


def _small_angle_mark(split, base, m, xi0):
    for t in range(m + 1):
        if split.angle_at(base + t) <= xi0:
            return t
    return None


def _norm_ratio_window(coc, split, base, m, c):
    """
    First window (t, r), r >= 2, with ‖P^r|S_t‖ / 𝔪(P^r|U_t) >= c,
    with the unit vectors attaining both norms.
    """
    for t in range(m - 1):
        U, S = split.U_at(base + t), split.S_at(base + t)
        image_u, image_s = U, S
        for r in range(1, m - t + 1):
            block = coc.blocks[base + t + r - 1]
            image_u, image_s = block @ image_u, block @ image_s
            scale = max(np.max(np.abs(image_u)), np.max(np.abs(image_s)))
            image_u, image_s = image_u / scale, image_s / scale
            if r < 2:
                continue
            _, sing_u, right_u = np.linalg.svd(image_u, full_matrices=False)
            _, sing_s, right_s = np.linalg.svd(image_s, full_matrices=False)
            if sing_s[0] / sing_u[-1] >= c:
                return t, r, U @ right_u[-1], S @ right_s[0]
    return None


def _small_angle(coc, split, base, m, schedule, t):
    U, S = split.U_at(base + t), split.S_at(base + t)
    left, _, right = np.linalg.svd(U.T @ S)
    u_t, s_t = U @ left[:, 0], S @ right[0]
    if u_t @ s_t < 0:
        s_t = -s_t
    plane, angle = plane_between(u_t, s_t)
    if t < m:
        step = rotation_step(coc, base + t, plane, angle, schedule.xi0)
        target = _push(coc, s_t, base + t, base + m)
    else:
        step = back_rotation_step(coc, base + m - 1, plane, angle, schedule.xi0)
        target = s_t
    steps = _passthrough_steps(coc, base, m)
    steps[step.mark - base] = step
    u = _pull(coc, u_t, base + t, base)
    return steps, u, target, {'t': t, 'angle': angle}


def _norm_ratio(coc, split, base, m, schedule, window):
    t, r, u_t, s_t = window
    if u_t @ s_t < 0:
        s_t = -s_t
    sin_xi0 = np.sin(schedule.xi0)
    lifted = u_t + sin_xi0 * s_t
    plane, angle = plane_between(u_t, lifted)
    first = rotation_step(coc, base + t, plane, angle, schedule.xi0)
    image_u = _push(coc, u_t, base + t, base + t + r, normalize=False)
    image_s = _push(coc, s_t, base + t, base + t + r, normalize=False)
    varrho = np.linalg.norm(image_u) / (sin_xi0 * np.linalg.norm(image_s))
    if not varrho < sin_xi0:
        raise AngleBudgetExceeded('Norm ratio window gives varrho = ' + str(varrho) +
                                  ' >= sin(xi0).')
    plane, angle = plane_between(image_u + sin_xi0 * image_s, image_s)
    second = back_rotation_step(coc, base + t + r - 1, plane, angle, schedule.xi0)
    steps = _passthrough_steps(coc, base, m)
    steps[first.mark - base] = first
    steps[second.mark - base] = second
    target = _push(coc, image_s / np.linalg.norm(image_s), base + t + r, base + m)
    u = _pull(coc, u_t, base + t, base)
    return steps, u, target, {'t': t, 'r': r, 'varrho': varrho}


def _finish(coc, split, base, m, steps, u, target, case, schedule, constants, kappa, cost_model):
    plan = RealizablePlan(base=base, steps=tuple(steps), epsilon=schedule.epsilon, kappa=kappa,
                          kappa_spent=0.0, schedule=schedule)
    spent = cost_model.cost(plan.rotations, coc.fiber_dim + 1)
    if spent > kappa:
        raise KappaOverflow('Rotations claim kappa = ' + str(spent) + ' above the budget ' +
                            str(kappa) + '. ')
    plan = RealizablePlan(base=base, steps=plan.steps, epsilon=schedule.epsilon, kappa=kappa,
                          kappa_spent=spent, schedule=schedule)
    S = split.S_at(base + m)
    s = S @ (S.T @ target)
    s /= np.linalg.norm(s)
    u = u / np.linalg.norm(u)
    residual = chain_residual(plan, u, s)
    values = {'xi0': schedule.xi0, 'c': schedule.c, 'theta': schedule.theta, 'm': m,
              'm_min': schedule.m_min}
    values.update(constants)
    certificate = ExchangeCertificate(case=case, base=base, length=m, u=u, s=s,
                                      residual=residual, constants=values)
    logger.info(case + ' exchange at mark ' + str(base) + ' over ' + str(m) +
                ' blocks, residual ' + str(residual) + '. ')
    if not residual <= RESIDUAL_TOLERANCE:
        raise VerificationError('Exchange residual ' + str(residual) + ' exceeds ' +
                                str(RESIDUAL_TOLERANCE) + '. ')
    return plan, certificate


def _window_schedule(coc, base, m, epsilon, max_angle):
    schedule = constant_schedule(coc.blocks[base:base + m], epsilon, max_angle)
    if m < schedule.m_min:
        raise AngleBudgetExceeded('Chain of length ' + str(m) + ' is shorter than 2 pi / theta.',
                                  min_length=schedule.m_min)
    return schedule


def exchange(coc, split, m, epsilon, kappa, base=None, max_angle=MAX_ANGLE, cost_model=None):
    """
    Builds a plan of length m that sends a vector of U at the base mark into S at base + m.
    The case is chosen in order: a small angle between U and S somewhere in the window,
    a window with norm ratio at least c, or else a chain of small rotations.

    :param coc: PoincareCocycle
    :param split: Splitting covering [base, base + m]
    :param m: Plan length
    :param epsilon: Perturbation budget
    :param kappa: Measure budget
    :param base: Base mark; the first mark of the splitting if None
    :param max_angle: Upper limit for xi0
    :param cost_model: KappaCostModel
    :return: RealizablePlan, ExchangeCertificate
    """
    base = split.start if base is None else base
    _check_window(coc, split, base, m)
    schedule = _window_schedule(coc, base, m, epsilon, max_angle)
    rho = domination_ratio(coc, split, m, base)
    if rho < THRESHOLD:
        raise NoMixingNeeded('Splitting is already ' + str(m) + '-dominated at mark ' +
                             str(base) + ' (ratio ' + str(rho) + '). ')
    cost_model = cost_model or KappaCostModel()
    t = _small_angle_mark(split, base, m, schedule.xi0)
    if t is not None:
        steps, u, target, constants = _small_angle(coc, split, base, m, schedule, t)
        return _finish(coc, split, base, m, steps, u, target, SMALL_ANGLE, schedule,
                       constants, kappa, cost_model)
    window = _norm_ratio_window(coc, split, base, m, schedule.c)
    if window is not None:
        steps, u, target, constants = _norm_ratio(coc, split, base, m, schedule, window)
        return _finish(coc, split, base, m, steps, u, target, NORM_RATIO, schedule,
                       constants, kappa, cost_model)
    return rotation_chain(coc, split, m, epsilon, kappa, base=base, max_angle=max_angle,
                          cost_model=cost_model)


def _quotient_basis(H, n):
    if H.shape[1] == 0:
        return np.eye(n)
    return null_space(H.T)


def _rotation2(angle):
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


def rotation_chain(coc, split, m, epsilon, kappa, base=None, max_angle=MAX_ANGLE, cost_model=None):
    """
    Spreads the rotation from v0 + H_0 to w0 + H_0 over m small rotations of the
    two-dimensional quotient by H_t = G_t + F_t, each conjugated by the quotient cocycle
    and lifted back to the fiber. A final correction inside G_0 puts the image in S.

    :param coc: PoincareCocycle
    :param split: Splitting covering [base, base + m]
    :param m: Plan length
    :param epsilon: Perturbation budget
    :param kappa: Measure budget
    :param base: Base mark
    :param max_angle: Upper limit for xi0
    :param cost_model: KappaCostModel
    :return: RealizablePlan, ExchangeCertificate
    """
    base = split.start if base is None else base
    _check_window(coc, split, base, m)
    schedule = _window_schedule(coc, base, m, epsilon, max_angle)
    cost_model = cost_model or KappaCostModel()
    n, k = coc.fiber_dim, split.index
    U0, S0 = split.U_at(base), split.S_at(base)
    _, _, right_u = np.linalg.svd(_push(coc, U0, base, base + m, normalize=False),
                                  full_matrices=False)
    _, _, right_s = np.linalg.svd(_push(coc, S0, base, base + m, normalize=False),
                                  full_matrices=False)
    v0, w0 = U0 @ right_u[-1], S0 @ right_s[0]
    G0, F0 = U0 @ right_u[:-1].T, S0 @ right_s[1:].T
    H = np.column_stack([G0, F0])
    Q = [_quotient_basis(H, n)]
    image = Q[0]
    quotients = [np.eye(2)]
    for j in range(base, base + m):
        image = coc.blocks[j] @ image
        if H.shape[1]:
            H, _ = mgs_qr(coc.blocks[j] @ H)
        Q.append(_quotient_basis(H, n))
        quotients.append(Q[-1].T @ image)
    condition = float(max(np.linalg.cond(np.array(quotients))))
    if condition > schedule.quotient_bound:
        raise QuotientIllConditioned('Quotient cocycle condition ' + str(condition) +
                                     ' exceeds 8c / sin^6(xi0) = ' +
                                     str(schedule.quotient_bound) + '. ')
    v_bar, w_bar = Q[0].T @ v0, Q[0].T @ w0
    phi = np.arctan2(v_bar[0] * w_bar[1] - v_bar[1] * w_bar[0], v_bar @ w_bar)
    if abs(phi) > np.pi / 2:
        w0, w_bar = -w0, -w_bar
        phi = np.arctan2(v_bar[0] * w_bar[1] - v_bar[1] * w_bar[0], v_bar @ w_bar)
    theta = phi / m
    if abs(theta) > schedule.theta:
        raise AngleBudgetExceeded('Chain step ' + str(abs(theta)) + ' exceeds theta.',
                                  min_length=int(np.ceil(abs(phi) / schedule.theta)))
    steps = []
    conjugation = 0.0
    small = _rotation2(theta)
    for j in range(m):
        quotient = quotients[j]
        conjugated = quotient @ small @ np.linalg.inv(quotient)
        conjugation = max(conjugation, float(np.linalg.norm(conjugated - np.eye(2), ord=2)))
        lifted = np.eye(n) + Q[j] @ (conjugated - np.eye(2)) @ Q[j].T
        block = coc.blocks[base + j]
        steps.append(PlanStep(mark=base + j, L=block @ lifted, A=block, kind=CONJUGATED,
                              plane=Q[j], angle=float(theta)))
    image_v = np.array(v0)
    for step in steps:
        image_v = step.L @ image_v
    columns = np.column_stack([_push(coc, G0, base, base + m, normalize=False),
                               _push(coc, F0, base, base + m, normalize=False),
                               _push(coc, w0, base, base + m, normalize=False)])
    coefficients = np.linalg.lstsq(columns, image_v, rcond=None)[0]
    g, f, alpha = coefficients[:k - 1], coefficients[k - 1:n - 2], coefficients[-1]
    u = v0 - G0 @ g
    target = alpha * columns[:, -1] + columns[:, k - 1:n - 2] @ f
    constants = {'phi': float(phi), 'quotient_condition': condition,
                 'quotient_bound': schedule.quotient_bound, 'conjugation_max': conjugation,
                 'conjugation_bound': schedule.conjugation_bound}
    return _finish(coc, split, base, m, steps, u, target, ROTATION_CHAIN, schedule, constants,
                   kappa, cost_model)


@dataclass(frozen=True, eq=False)
class LocalResult:
    """
    Outcome of the exponent-lowering experiment.

    :param plan: Chain of passthrough and exchange segments over the horizon
    :param certificate: Certificate of the exchange, None for a pure passthrough chain
    :param rate: (1/t) log ‖∧^k chain‖
    :param unperturbed_rate: The same rate for the cocycle itself
    :param bound: delta + (Sigma_{k-1} + Sigma_{k+1}) / 2
    :param horizon: t
    :param min_horizon: Smallest prefix of the chain, past the exchange, meeting its bound
    :param mixing_mark: Base mark of the exchange, or None
    """
    plan: RealizablePlan
    certificate: ExchangeCertificate
    rate: float
    unperturbed_rate: float
    bound: float
    sigma_lower: float
    sigma_upper: float
    horizon: int
    min_horizon: int
    mixing_mark: int = None

    @property
    def satisfied(self):
        return self.rate < self.bound

    def summary(self):
        return {'horizon': self.horizon, 'rate': self.rate, 'unperturbed_rate': self.unperturbed_rate,
                'bound': self.bound, 'sigma_lower': self.sigma_lower,
                'sigma_upper': self.sigma_upper, 'min_horizon': self.min_horizon,
                'mixing_mark': -1 if self.mixing_mark is None else self.mixing_mark,
                'case': 'passthrough' if self.certificate is None else self.certificate.case,
                'satisfied': self.satisfied}


def _prefix_bounds(coc, k, delta):
    _, logs, _ = qr_sweep(coc.blocks)
    totals = np.cumsum(logs, axis=0) / np.arange(1, coc.length + 1)[:, None]
    ordered = -np.sort(-totals, axis=1)
    sums = np.concatenate([np.zeros((coc.length, 1)), np.cumsum(ordered, axis=1)], axis=1)
    return delta + 0.5 * (sums[:, k - 1] + sums[:, k + 1])


def _chain_rates(blocks, k):
    return log_wedge_norms(blocks, k) / np.arange(1, len(blocks) + 1)


def _local_attempt(coc, k, delta, epsilon, kappa, t, max_angle, cost_model):
    seg = coc.segment(0, t)
    report = lyapunov_exponents(seg)
    lower, upper = sigma_k(report, k - 1), sigma_k(report, k + 1)
    bound = delta + 0.5 * (lower + upper)
    prefix = _prefix_bounds(seg, k, delta)
    unperturbed = float(_chain_rates(seg.blocks, k)[-1])
    if unperturbed < bound:
        rates = _chain_rates(seg.blocks, k)
        hits = np.nonzero(rates < prefix)[0]
        return LocalResult(plan=passthrough_plan(seg, 0, t, epsilon), certificate=None,
                           rate=unperturbed, unperturbed_rate=unperturbed, bound=bound,
                           sigma_lower=lower, sigma_upper=upper, horizon=t,
                           min_horizon=int(hits[0]) + 1 if len(hits) else t)
    split = oseledets_splitting(seg, k)
    for b in range(t - 1):
        try:
            _, m = fit_schedule(seg, b, epsilon, max_angle, t)
            if domination_ratio(seg, split, m, b) < THRESHOLD:
                continue
            plan, certificate = exchange(seg, split, m, epsilon, kappa, base=b,
                                         max_angle=max_angle, cost_model=cost_model)
        except (AngleBudgetExceeded, KappaOverflow, QuotientIllConditioned, SplitDegenerate,
                NoMixingNeeded, VerificationError):
            continue
        chain = concatenate([passthrough_plan(seg, 0, b, epsilon), plan,
                             passthrough_plan(seg, b + m, t - b - m, epsilon)])
        rates = _chain_rates(chain.blocks, k)
        if rates[-1] < bound:
            hits = [j for j in range(b + m, t + 1) if rates[j - 1] < prefix[j - 1]]
            logger.info('Exchange at mark ' + str(b) + ' lowers the rate from ' +
                        str(unperturbed) + ' to ' + str(rates[-1]) + '. ')
            return LocalResult(plan=chain, certificate=certificate, rate=float(rates[-1]),
                               unperturbed_rate=unperturbed, bound=bound, sigma_lower=lower,
                               sigma_upper=upper, horizon=t,
                               min_horizon=hits[0] if hits else t, mixing_mark=b)
    return None


def lower_exponent_experiment(coc, k, delta, epsilon, kappa, t, start=0, max_angle=MAX_ANGLE,
                              cost_model=None):
    """
    Searches for a chain of length t whose k-th exterior rate drops below
    delta + (Sigma_{k-1} + Sigma_{k+1}) / 2, with Sigma's the finite-time exponent sums.
    A single exchange is placed at the first mark where the splitting of index k
    is not dominated over the schedule's window.

    :param coc: PoincareCocycle
    :param k: Index, 1 <= k <= n - 1
    :param delta: Slack above the averaged sums
    :param epsilon: Perturbation budget
    :param kappa: Measure budget
    :param t: Horizon
    :param start: First mark of the experiment
    :param max_angle: Upper limit for xi0
    :param cost_model: KappaCostModel
    :return: LocalResult
    """
    if delta <= 0:
        raise ValidationError('Delta must be positive. ', field='delta')
    if not 1 <= k <= coc.fiber_dim - 1:
        raise ValidationError('k must lie in [1, ' + str(coc.fiber_dim - 1) + ']. ', field='k')
    if t < 2 or start < 0 or start + t > coc.length:
        raise ValidationError('Horizon ' + str(t) + ' does not fit the cocycle. ', field='horizon')
    cost_model = cost_model or KappaCostModel()
    shifted = coc.segment(start, coc.length)
    result = _local_attempt(shifted, k, delta, epsilon, kappa, t, max_angle, cost_model)
    if result is not None:
        return result
    step = max(t // 10, 1)
    for horizon in range(t + step, shifted.length + 1, step):
        if _local_attempt(shifted, k, delta, epsilon, kappa, horizon, max_angle,
                          cost_model) is not None:
            raise HorizonTooShort('No chain of length ' + str(t) + ' meets the bound.',
                                  min_horizon=horizon)
    raise HorizonTooShort('No chain up to length ' + str(shifted.length) + ' meets the bound.')


def neutral_gap_cocycle(rate=0.25, lead=50, neutral=100, tail=50):
    """
    Hyperbolic stretch, neutral stretch, hyperbolic stretch: the splitting is not
    dominated across the neutral part, so an exchange there can lower the top exponent.
    """
    hyperbolic = np.diag([np.exp(rate), np.exp(-rate)])
    blocks = [hyperbolic] * lead + [np.eye(2)] * neutral + [hyperbolic] * tail
    return PoincareCocycle.from_blocks(blocks, 'neutral_gap')


def _gauge(blocks, rng):
    """
    Conjugates blocks by random orthogonal frames, A'_j = O_{j+1}^T A_j O_j.
    """
    n = blocks.shape[-1]
    frames = ortho_group.rvs(n, size=len(blocks) + 1, random_state=rng)
    gauged = np.einsum('tai,tab,tbl->til', frames[1:], blocks, frames[:-1])
    return gauged, frames


def small_angle_case(rng, epsilon=3.0, max_angle=MAX_ANGLE):
    """
    Identity blocks with one diag(a, 1/a) that closes the angle between U = (1, 1)
    and S = (1, -1) down to xi0 / 2.
    """
    a = np.tan(max_angle / 4) ** -0.5
    position = int(rng.integers(1, 6))
    blocks = np.tile(np.eye(2), (position, 1, 1))
    blocks[-1] = np.diag([a, 1 / a])
    schedule = constant_schedule(blocks, epsilon, max_angle)
    if schedule.xi0 < max_angle - 1e-12:
        raise ValidationError('Epsilon is too small for the small-angle generator. ',
                              field='epsilon')
    m = max(schedule.m_min, position)
    full = np.tile(np.eye(2), (m, 1, 1))
    full[position - 1] = blocks[-1]
    gauged, frames = _gauge(full, rng)
    coc = PoincareCocycle.from_blocks(gauged, SMALL_ANGLE)
    U0 = frames[0].T @ np.array([1.0, 1.0]) / np.sqrt(2)
    S0 = frames[0].T @ np.array([1.0, -1.0]) / np.sqrt(2)
    return coc, splitting_from_bases(coc, U0, S0, 0, m), m


def norm_ratio_case(rng, epsilon=3.0, max_angle=MAX_ANGLE, growth=2 ** 0.125, width=12):
    """
    Identity blocks with a window of diag(g^-1/2, g^1/2) that expands S = e2
    against U = e1 by g per block.
    """
    position = int(rng.integers(0, 6))
    full = np.tile(np.eye(2), (position + width, 1, 1))
    full[position:] = np.diag([growth ** -0.5, growth ** 0.5])
    schedule = constant_schedule(full, epsilon, max_angle)
    m = max(schedule.m_min, position + width)
    blocks = np.tile(np.eye(2), (m, 1, 1))
    blocks[:position + width] = full
    gauged, frames = _gauge(blocks, rng)
    coc = PoincareCocycle.from_blocks(gauged, NORM_RATIO)
    return coc, splitting_from_bases(coc, frames[0].T[:, :1], frames[0].T[:, 1:], 0, m), m


def rotation_chain_case(rng, epsilon=3.0, max_angle=MAX_ANGLE, spread=5e-4):
    """
    Nearly isometric diagonal blocks in a random frame: U holds the slightly
    contracted coordinates and S the slightly expanded ones.
    """
    n = int(rng.integers(2, 5))
    k = int(rng.integers(1, n))
    rates = np.concatenate([rng.uniform(-spread, 0, k), rng.uniform(0, spread, n - k)])
    block = np.diag(np.exp(rates))
    schedule = constant_schedule(block[None], epsilon, max_angle)
    m = schedule.m_min
    gauged, frames = _gauge(np.tile(block, (m, 1, 1)), rng)
    coc = PoincareCocycle.from_blocks(gauged, ROTATION_CHAIN)
    return coc, splitting_from_bases(coc, frames[0].T[:, :k], frames[0].T[:, k:], 0, m), m


def quotient_guard_case(epsilon=3.0, max_angle=MAX_ANGLE, width=28):
    """
    Blocks diag(g, 1/g) for width marks, then identity, with S = e1 and U = e2;
    the condition number of the quotient cocycle reaches twice 8c / sin^6(xi0).
    """
    sin_xi0 = np.sin(max_angle)
    c = (1 + C_MARGIN) / sin_xi0 ** 2
    growth = (2 * 8 * c / sin_xi0 ** 6) ** (1 / (2 * width))
    blocks = np.tile(np.diag([growth, 1 / growth]), (width, 1, 1))
    schedule = constant_schedule(blocks, epsilon, max_angle)
    m = max(schedule.m_min, width)
    full = np.tile(np.eye(2), (m, 1, 1))
    full[:width] = blocks
    coc = PoincareCocycle.from_blocks(full, 'quotient_guard')
    return coc, splitting_from_bases(coc, [0.0, 1.0], [1.0, 0.0], 0, m), m


CASE_GENERATORS = {SMALL_ANGLE: small_angle_case,
                   NORM_RATIO: norm_ratio_case,
                   ROTATION_CHAIN: rotation_chain_case}


def _campaign_trial(args):
    case, trial, seed, epsilon, kappa, cost_model = args
    rng = np.random.default_rng(seed)
    coc, split, m = CASE_GENERATORS[case](rng, epsilon)
    plan, certificate = exchange(coc, split, m, epsilon, kappa, cost_model=cost_model)
    residual = verify_certificate(plan, certificate)
    check = validate_plan(plan, coc)
    constants = certificate.constants
    guard = constants.get('quotient_condition', 0.0) <= plan.schedule.quotient_bound
    return {'requested': case, 'trial': trial, 'case': certificate.case,
            'fiber_dim': coc.fiber_dim, 'length': m, 'm_min': plan.schedule.m_min,
            'residual': residual, 'max_deviation': check.max_deviation,
            'det_defect': check.det_defect, 'kappa_spent': check.kappa_spent,
            'schedule_ok': not plan.schedule.violations(m), 'guard_ok': bool(guard)}


def certificate_campaign(case, n_trials, seed=0, workers=1, epsilon=3.0, kappa=0.99,
                         cost_model=None):
    """
    Runs exchanges on randomized synthetic cocycles of one case and verifies every certificate.
    Each trial draws from its own spawned seed, so results do not depend on the worker count.

    :param case: SmallAngle, NormRatio or RotationChain
    :param n_trials: Number of cocycles
    :param seed: Campaign seed
    :param workers: Number of worker processes
    :param epsilon: Perturbation budget
    :param kappa: Measure budget
    :param cost_model: KappaCostModel; lam = CAMPAIGN_LAMBDA if None
    :return: pandas DataFrame with one row per trial
    """
    if case not in CASE_GENERATORS:
        raise ValidationError('Unknown exchange case ' + str(case) + '. ', field='cases')
    cost_model = cost_model or KappaCostModel(lam=CAMPAIGN_LAMBDA)
    children = np.random.SeedSequence(seed).spawn(n_trials)
    jobs = [(case, i, child, epsilon, kappa, cost_model) for i, child in enumerate(children)]
    logger.info('Running ' + str(n_trials) + ' ' + case + ' trials on ' + str(workers) +
                ' workers. ')
    rows = run_pool(_campaign_trial, jobs, workers)
    return pd.DataFrame(rows)


def source_cocycle(config):
    """
    Cocycle for a perturbation run: a named synthetic cocycle, a saved cocycle file,
    or the orbit of a sampled point of the configured model.

    :param config: ExperimentConfig
    :return: PoincareCocycle
    """
    if config.cocycle == 'neutral_gap':
        return neutral_gap_cocycle()
    if config.cocycle:
        blocks, x_factors = read_cocycle(config.cocycle)
        return PoincareCocycle(blocks=blocks, x_factors=x_factors, model_id=config.cocycle)
    model = get_model(config.model, **config.model_params)
    point = sample_points(model, 1, np.random.default_rng(config.seed))
    return batch_cocycles(model, point, config.step, config.horizon)[0]
