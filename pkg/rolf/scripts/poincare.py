"""
The poincare module builds the linear Poincaré cocycle along an orbit.

Normal frames are orthonormal bases of the complement of the flow direction.
The frame at mark j+1 is the pushed-forward frame at mark j with the flow
direction projected out, orthonormalized by QR; the block A_j is the R factor,
i.e. the time-1 linear Poincaré map written between consecutive frames.
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
from scipy.stats import qmc
from scipy.special import gamma
from rolf.scripts.base import build_config, write_manifest
from rolf.scripts.flow_models import eval_field, get_model, sample_points
from rolf.scripts.integrator import integrate_orbit, steps_per_unit, transport_to_section
from rolf.scripts.io import write_table, write_report
from rolf.scripts.utils import SpeedUnderflow, ValidationError, _create_logger
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

SPEED_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class NormalFrame:
    """
    Orthonormal basis of the normal fiber at a regular state.

    :param base: State x_j
    :param vectors: Array (d, d-1); columns are orthonormal and orthogonal to X(x_j)
    """
    base: np.ndarray
    vectors: np.ndarray

    def gram_defect(self):
        n = self.vectors.shape[1]
        return float(np.max(np.abs(self.vectors.T @ self.vectors - np.eye(n))))


@dataclass(frozen=True, eq=False)
class PoincareCocycle:
    """
    Time-1 blocks of the linear Poincaré flow along an orbit.

    :param blocks: Array (T, n, n) with n = d - 1
    :param x_factors: Array (T,) of speed ratios between consecutive marks
    :param frames: Array (T + 1, d, n) of normal frames, or None for synthetic cocycles
    :param states: Array (T + 1, d) of states at the marks, or None
    :param model_id: Identifier of the source model
    :param periods: Axis periods of the source model, used for recurrence checks
    """
    blocks: np.ndarray
    x_factors: np.ndarray
    frames: np.ndarray = None
    states: np.ndarray = None
    model_id: str = 'synthetic'
    periods: tuple = None

    @property
    def length(self):
        return len(self.blocks)

    @property
    def fiber_dim(self):
        return self.blocks.shape[-1]

    @classmethod
    def from_blocks(cls, blocks, model_id='synthetic'):
        """
        Wraps a sequence of blocks as a cocycle; the x-factors follow from
        the determinant identity |det A_j| x_j = 1.

        :param blocks: Array-like (T, n, n)
        :param model_id: Label of the cocycle
        :return: PoincareCocycle
        """
        blocks = np.array(blocks, dtype=float)
        x_factors = 1.0 / np.abs(np.linalg.det(blocks))
        return cls(blocks=blocks, x_factors=x_factors, model_id=model_id)

    def compose(self, start=0, length=None):
        """
        Returns A_{start+length-1} ... A_start.

        :param start: First mark
        :param length: Number of blocks
        :return: n x n array
        """
        if length is None:
            length = self.length - start
        if start < 0 or start + length > self.length:
            raise ValidationError('Composition window [' + str(start) + ', ' +
                                  str(start + length) + ') leaves the cocycle. ', field='length')
        result = np.eye(self.fiber_dim)
        for block in self.blocks[start:start + length]:
            result = block @ result
        return result

    def segment(self, start, stop):
        """
        Sub-cocycle over the marks [start, stop].
        """
        return PoincareCocycle(blocks=self.blocks[start:stop],
                               x_factors=self.x_factors[start:stop],
                               frames=None if self.frames is None else self.frames[start:stop + 1],
                               states=None if self.states is None else self.states[start:stop + 1],
                               model_id=self.model_id, periods=self.periods)

    def reversed(self):
        """
        Cocycle of the time-reversed flow: inverse blocks in reversed order.
        """
        return PoincareCocycle(blocks=np.linalg.inv(self.blocks[::-1]),
                               x_factors=1.0 / self.x_factors[::-1],
                               frames=None if self.frames is None else self.frames[::-1],
                               states=None if self.states is None else self.states[::-1],
                               model_id=self.model_id + '_reversed', periods=self.periods)

    def log_speed_ratio(self, length=None):
        if length is None:
            length = self.length
        return float(np.sum(np.log(self.x_factors[:length])))


def normal_frame(model, x):
    """
    Builds an orthonormal basis of the complement of X(x) by QR of [X/|X|, I].

    :param model: FlowModel
    :param x: State
    :return: NormalFrame
    """
    x = np.asarray(x, dtype=float)
    velocity = eval_field(model, x)
    norm = np.linalg.norm(velocity)
    if norm < SPEED_FLOOR:
        raise SpeedUnderflow('No normal frame at ' + str(x) + ': speed ' + str(norm) + '. ')
    seed = np.column_stack([velocity / norm, np.eye(model.dim)])
    q, _ = np.linalg.qr(seed)
    return NormalFrame(base=x, vectors=q[:, 1:model.dim])


def _continue_frame(frame, pushed_map, direction):
    """
    Pushes a frame forward, removes the flow direction and orthonormalizes.
    Returns the new frame and the block, with a positive block diagonal.
    """
    pushed = pushed_map @ frame
    pushed = pushed - np.outer(direction, direction @ pushed)
    q, r = np.linalg.qr(pushed)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def cocycle_from_unit_maps(model, states, unit_maps):
    """
    Builds the cocycle from states at unit marks and the time-1 tangent maps between them.

    :param model: FlowModel
    :param states: Array (T + 1, d)
    :param unit_maps: Array (T, d, d)
    :return: PoincareCocycle
    """
    velocities = eval_field(model, states)
    speeds = np.linalg.norm(velocities, axis=-1)
    if np.any(speeds < SPEED_FLOOR):
        raise SpeedUnderflow('Speed dropped below ' + str(SPEED_FLOOR) + ' at a cocycle mark. ')
    directions = velocities / speeds[:, None]
    n_units = len(unit_maps)
    frame = normal_frame(model, states[0]).vectors
    frames = np.empty((n_units + 1, model.dim, model.dim - 1))
    blocks = np.empty((n_units, model.dim - 1, model.dim - 1))
    frames[0] = frame
    for j in range(n_units):
        frame, blocks[j] = _continue_frame(frame, unit_maps[j], directions[j + 1])
        frames[j + 1] = frame
    return PoincareCocycle(blocks=blocks, x_factors=speeds[1:] / speeds[:-1], frames=frames,
                           states=np.array(states), model_id=model.id,
                           periods=tuple(model.periods))


def build_cocycle(model, tangent):
    """
    Extracts the unit-time cocycle from a tangent segment.

    :param model: FlowModel
    :param tangent: TangentSegment covering whole units of time
    :return: PoincareCocycle
    """
    per_unit = steps_per_unit(tangent.orbit.step)
    n_units = tangent.orbit.n_steps // per_unit
    states = tangent.orbit.states[::per_unit][:n_units + 1]
    return cocycle_from_unit_maps(model, states, tangent.unit_maps(per_unit))


def det_factor_check(coc):
    """
    Largest deviation of |det A_j| x_j from 1.

    :param coc: PoincareCocycle
    :return: Nonnegative float
    """
    if coc.length == 0:
        return 0.0
    products = np.abs(np.linalg.det(coc.blocks)) * coc.x_factors
    return float(np.max(np.abs(products - 1.0)))


@dataclass(frozen=True)
class FlowboxEstimate:
    """
    Monte Carlo estimate of the section-measure distortion of the flowbox map.

    :param value: Largest relative distortion ‖X(p)‖ |μ̄(K) - x(t) μ̄(image of K)| / μ̄(K) over the disks
    :param stderr: Standard error of that value
    :param absolute: |μ̄(K) - x(t) μ̄(image of K)| for that disk, without the ‖X(p)‖ factor
    :param radius: Radius r of the transversal ball holding the disks
    :param x_factor: Speed ratio x(t)
    :param n_samples: Number of sample points inside the ball
    """
    value: float
    stderr: float
    absolute: float
    radius: float
    x_factor: float
    n_samples: int


def _disk_centers(n_fiber, radius, n_disks):
    centers = [np.zeros(n_fiber)]
    for i in range(n_disks - 1):
        angle = 2 * np.pi * i / (n_disks - 1)
        c = np.zeros(n_fiber)
        c[0], c[1] = np.cos(angle), np.sin(angle)
        centers.append(0.5 * radius * c)
    return centers


def flowbox_distortion(model, p, t, r, n_samples, h=0.01, n_disks=9, seed=0):
    """
    Estimates how far the flowbox map between the sections at p and X^t(p)
    is from scaling the section measure μ̄ (the (d-1)-area on the flat section)
    by x(t)^{-1}.
    Points are drawn by Latin hypercube sampling in the ball of radius r on the
    section through p and flowed onto the section through X^t(p); the Jacobian
    of the section-to-section map gives the image measure.
    The sup is taken over disks of radius r/2 inside the ball.

    :param model: FlowModel
    :param p: Regular state
    :param t: Flow time in (0, 10]
    :param r: Ball radius
    :param n_samples: Number of sampled points
    :param h: Step size
    :param n_disks: Number of disks; one centred, the rest offset by r/2
    :param seed: Seed of the sampler
    :return: FlowboxEstimate
    """
    if not 0 < t <= 10:
        raise ValidationError('Flowbox time must lie in (0, 10]. ', field='flowbox_time')
    p = np.asarray(p, dtype=float)
    n_fiber = model.dim - 1
    source = normal_frame(model, p)
    orbit = integrate_orbit(model, p, h, int(round(t / h)))
    end = orbit.states[-1]
    target = normal_frame(model, end)
    speed_p, speed_t = orbit.speeds[0], orbit.speeds[-1]
    normal_t = eval_field(model, end) / speed_t
    x_factor = speed_t / speed_p
    sampler = qmc.LatinHypercube(d=n_fiber, seed=seed)
    cube = 2 * sampler.random(n_samples) - 1
    coords = r * cube[np.linalg.norm(cube, axis=1) <= 1]
    points = p + coords @ source.vectors.T
    ends, maps = transport_to_section(model, points, t, h, end, normal_t)
    velocities = eval_field(model, ends)
    pushed = maps @ source.vectors
    along = (normal_t @ pushed) / (velocities @ normal_t)[:, None]
    projected = pushed - velocities[:, :, None] * along[:, None, :]
    jacobians = np.abs(np.linalg.det(np.swapaxes(target.vectors, 0, 1) @ projected))
    defects = 1.0 - x_factor * jacobians
    ball_volume = np.pi ** (n_fiber / 2) / gamma(n_fiber / 2 + 1) * (0.5 * r) ** n_fiber
    best = None
    for center in _disk_centers(n_fiber, r, n_disks):
        inside = np.linalg.norm(coords - center, axis=1) <= 0.5 * r
        count = int(np.sum(inside))
        if count < 2:
            continue
        mean = abs(float(np.mean(defects[inside])))
        stderr = speed_p * float(np.std(defects[inside], ddof=1)) / np.sqrt(count)
        if best is None or speed_p * mean > best[0]:
            best = (speed_p * mean, stderr, mean)
    if best is None:
        raise ValidationError('Too few samples inside the flowbox disks. ', field='samples')
    logger.info('Flowbox distortion at r = ' + str(r) + ': ' + str(best[0]) +
                ' (SE ' + str(best[1]) + '). ')
    return FlowboxEstimate(value=best[0], stderr=best[1], absolute=best[2] * ball_volume,
                           radius=r, x_factor=float(x_factor), n_samples=len(coords))


def start_flowbox(inputs):
    """
    Takes all arguments and estimates the flowbox distortion for every radius
    in the config, at one sampled point.

    :param inputs: Dictionary of arguments.
    :return:
    """
    started = time.perf_counter()
    config = build_config(inputs, 'flowbox')
    _create_logger(config.output)
    model = get_model(config.model, **config.model_params)
    p = sample_points(model, 1, np.random.default_rng(config.seed))[0]
    rows = []
    for r in sorted(config.radius, reverse=True):
        estimate = flowbox_distortion(model, p, config.flowbox_time, r, config.flowbox_samples,
                                      h=config.step, seed=config.seed)
        rows.append({'r': r, 'value': estimate.value, 'stderr': estimate.stderr,
                     'absolute': estimate.absolute, 'x_factor': estimate.x_factor,
                     'n_samples': estimate.n_samples})
    table = pd.DataFrame(rows)
    table['order'] = observed_order(table['r'].to_numpy(), table['value'].to_numpy())
    write_table(table, os.path.join(config.output, 'flowbox.tsv'))
    write_report(table, os.path.join(config.output, 'flowbox.txt'))
    write_manifest(config, 'flowbox', time.perf_counter() - started)
    logger.info('Completed flowbox estimate! ')


def observed_order(radii, values):
    """
    Slopes log(v1 / v2) / log(r1 / r2) between consecutive radii; the first entry is NaN.
    """
    order = np.full(len(radii), np.nan)
    for i in range(1, len(radii)):
        if values[i] > 0 and values[i - 1] > 0:
            order[i] = np.log(values[i - 1] / values[i]) / np.log(radii[i - 1] / radii[i])
    return order
