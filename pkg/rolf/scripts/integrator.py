"""
The integrator module advances states and tangent maps with classical RK4.
The flow and the variational equation share stage points,
so every step returns both the new state and the step tangent map D_j.

Steps are evaluated on batches of states; a single orbit is a batch of size one.
When an orbit of a suspension model crosses the roof, the crossing time
is found by bisection, the gluing matrix is applied and the step is completed.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import sys
from dataclasses import dataclass
import numpy as np
from rolf.scripts.flow_models import eval_field, eval_jacobian
from rolf.scripts.utils import SpeedUnderflow, DeterminantDrift, ValidationError
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

MAX_STEP = 0.1
SPEED_FLOOR = 1e-8
DET_TOLERANCE = 1e-8
CROSSING_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class OrbitSegment:
    """
    Time-discretized orbit.

    :param model_id: Identifier of the model that generated the orbit
    :param p0: Initial state
    :param step: Step size h
    :param n_steps: Number of steps
    :param states: Array (n_steps + 1, d) of states
    :param speeds: Array (n_steps + 1,) of field norms at the states
    :param crossings: Tuple of (step index, gluing matrix) for roof crossings
    """
    model_id: str
    p0: np.ndarray
    step: float
    n_steps: int
    states: np.ndarray
    speeds: np.ndarray
    crossings: tuple = ()

    @property
    def times(self):
        return self.step * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class TangentSegment:
    """
    Step tangent maps D_j along an orbit, D_j taking T_{x_j} to T_{x_{j+1}}.
    """
    orbit: OrbitSegment
    maps: np.ndarray

    def composed(self, start=0, stop=None):
        """
        Returns D_{stop-1} ... D_start.

        :param start: First step index
        :param stop: One past the last step index
        :return: d x d array
        """
        if stop is None:
            stop = self.orbit.n_steps
        result = np.eye(self.maps.shape[-1])
        for j in range(start, stop):
            result = self.maps[j] @ result
        return result

    def unit_maps(self, steps_per_unit):
        """
        Composes the step maps over consecutive blocks of steps_per_unit steps.

        :param steps_per_unit: Number of steps per unit of time
        :return: Array (n_units, d, d)
        """
        n_units = self.orbit.n_steps // steps_per_unit
        blocks = self.maps[:n_units * steps_per_unit].reshape(
            (n_units, steps_per_unit) + self.maps.shape[1:])
        result = blocks[:, 0]
        for i in range(1, steps_per_unit):
            result = blocks[:, i] @ result
        return result


def _check_step(h):
    if not 0 < h <= MAX_STEP:
        raise ValidationError('Step size must lie in (0, ' + str(MAX_STEP) + ']. ', field='step')


def _rk4(model, x, h, tangent):
    """
    One RK4 step for a batch of states. h is a scalar or an array with one entry per state.
    Returns the new states and, if requested, the step tangent maps.
    """
    hs = np.asarray(h, dtype=float).reshape(-1, 1) if np.ndim(h) else h
    k1 = eval_field(model, x)
    k2 = eval_field(model, x + 0.5 * hs * k1)
    k3 = eval_field(model, x + 0.5 * hs * k2)
    k4 = eval_field(model, x + hs * k3)
    x_new = x + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not tangent:
        return x_new, None
    hm = hs[..., None] if np.ndim(h) else h
    eye = np.eye(model.dim)
    c1 = eval_jacobian(model, x)
    c2 = eval_jacobian(model, x + 0.5 * hs * k1) @ (eye + 0.5 * hm * c1)
    c3 = eval_jacobian(model, x + 0.5 * hs * k2) @ (eye + 0.5 * hm * c2)
    c4 = eval_jacobian(model, x + hs * k3) @ (eye + hm * c3)
    return x_new, eye + hm / 6 * (c1 + 2 * c2 + 2 * c3 + c4)


def _wrap(model, x):
    """
    Reduces the periodic axes; the roof axis of a suspension is left alone.
    """
    periods = np.asarray(model.periods)
    if model.gluing is None:
        return np.mod(x, periods)
    x = x.copy()
    x[..., :-1] = np.mod(x[..., :-1], periods[:-1])
    return x


def _glue(model, x):
    x = x.copy()
    gluing = model.gluing
    x[..., -1] = np.maximum(x[..., -1] - model.roof, 0.0)
    x[..., :-1] = x[..., :-1] @ gluing[:-1, :-1].T
    return _wrap(model, x)


def _crossing_time(model, x, h):
    """
    Bisects the time in [0, h] at which the roof coordinate reaches the roof.
    """
    lo = np.zeros(len(x))
    hi = np.full(len(x), h)
    x_hi, _ = _rk4(model, x, hi, tangent=False)
    done = x_hi[:, -1] < model.roof
    while np.any(hi - lo > CROSSING_TOLERANCE):
        mid = 0.5 * (lo + hi)
        x_mid, _ = _rk4(model, x, mid, tangent=False)
        above = x_mid[:, -1] >= model.roof
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    hi[done] = h
    return hi


def advance(model, x, h, tangent=True):
    """
    Advances a batch of states by one step of size h, applying the gluing
    at roof crossings.

    :param model: FlowModel
    :param x: Array (n, d) of states
    :param h: Step size
    :param tangent: If true, also returns the step tangent maps
    :return: New states (n, d), step maps (n, d, d) or None, boolean crossing mask (n,)
    """
    x_new, maps = _rk4(model, x, h, tangent)
    crossed = np.zeros(len(x), dtype=bool)
    if model.gluing is not None:
        crossed = x_new[:, -1] >= model.roof - CROSSING_TOLERANCE
    if np.any(crossed):
        xc = x[crossed]
        tau = _crossing_time(model, xc, h)
        x_mid, d_first = _rk4(model, xc, tau, tangent)
        x_mid = _glue(model, x_mid)
        rest = h - tau
        x_end, d_rest = _rk4(model, x_mid, rest, tangent)
        x_new[crossed] = x_end
        if tangent:
            maps[crossed] = d_rest @ model.gluing @ d_first
    return _wrap(model, x_new), maps, crossed


def _check_speeds(model, x, where):
    speeds = np.linalg.norm(eval_field(model, x), axis=-1)
    if np.any(speeds < SPEED_FLOOR):
        raise SpeedUnderflow('Speed dropped below ' + str(SPEED_FLOOR) + ' ' + where +
                             '; the orbit left the regular region. ')
    return speeds


def _check_determinants(maps, where):
    drift = np.abs(np.linalg.det(maps) - 1.0)
    if np.any(drift > DET_TOLERANCE):
        worst = int(np.argmax(drift))
        raise DeterminantDrift('Step map determinant drifted by ' + str(float(drift[worst])) +
                               ' at step ' + str(worst) + ' ' + where +
                               '; reduce the step size. ')


def integrate_orbit(model, p0, h, n):
    """
    Integrates the flow from p0 for n steps of size h.

    :param model: FlowModel
    :param p0: Initial state
    :param h: Step size in (0, 0.1]
    :param n: Number of steps
    :return: OrbitSegment
    """
    _check_step(h)
    p0 = np.asarray(p0, dtype=float)
    states = np.empty((n + 1, model.dim))
    states[0] = p0
    crossings = []
    x = p0[None, :]
    for j in range(n):
        x, _, crossed = advance(model, x, h, tangent=False)
        states[j + 1] = x[0]
        if crossed[0]:
            crossings.append((j, model.gluing))
    speeds = _check_speeds(model, states, 'along the orbit')
    return OrbitSegment(model_id=model.id, p0=p0, step=h, n_steps=n, states=states,
                        speeds=speeds, crossings=tuple(crossings))


def integrate_tangent(model, orbit):
    """
    Recomputes every step of an orbit with the variational equation.
    Steps are independent, so the whole orbit is processed as one batch.

    :param model: FlowModel
    :param orbit: OrbitSegment
    :return: TangentSegment
    """
    if orbit.n_steps == 0:
        return TangentSegment(orbit=orbit, maps=np.empty((0, model.dim, model.dim)))
    _, maps, _ = advance(model, orbit.states[:-1], orbit.step, tangent=True)
    _check_determinants(maps, 'along orbit from ' + str(orbit.p0))
    return TangentSegment(orbit=orbit, maps=maps)


def integrate(model, p0, h, n):
    """
    Convenience wrapper returning both the orbit and its tangent maps.

    :param model: FlowModel
    :param p0: Initial state
    :param h: Step size
    :param n: Number of steps
    :return: OrbitSegment, TangentSegment
    """
    orbit = integrate_orbit(model, p0, h, n)
    return orbit, integrate_tangent(model, orbit)


@dataclass(frozen=True, eq=False)
class BatchSegment:
    """
    Many orbits sampled at unit-time marks.

    :param states: Array (n_points, n_units + 1, d) of states at the marks
    :param unit_maps: Array (n_points, n_units, d, d) of time-1 tangent maps
    """
    states: np.ndarray
    unit_maps: np.ndarray


def steps_per_unit(h):
    """
    Number of steps in one unit of time; 1/h must be an integer.

    :param h: Step size
    :return: Integer
    """
    count = int(round(1.0 / h))
    if abs(count * h - 1.0) > 1e-9:
        raise ValidationError('1/h must be an integer so steps align with unit marks. ',
                              field='step')
    return count


def _compose(maps):
    """
    Product maps[-1] @ ... @ maps[0] of a stack (steps, n, d, d), by pairwise halving.
    """
    while len(maps) > 1:
        if len(maps) % 2:
            eye = np.broadcast_to(np.eye(maps.shape[-1]), (1,) + maps.shape[1:])
            maps = np.concatenate([maps, eye])
        maps = maps[1::2] @ maps[0::2]
    return maps[0]


def integrate_batch(model, points, h, n_units):
    """
    Integrates many initial states at once and returns the time-1 tangent maps
    between consecutive unit marks. Within a unit only the states are stepped;
    the step maps of the whole unit are then evaluated in one batch from the
    recorded states, and steps across the roof are redone with the gluing.

    :param model: FlowModel
    :param points: Array (n_points, d) of initial states
    :param h: Step size
    :param n_units: Number of unit-time marks to advance
    :return: BatchSegment
    """
    _check_step(h)
    per_unit = steps_per_unit(h)
    x = np.array(points, dtype=float)
    n_points, d = x.shape
    states = np.empty((n_points, n_units + 1, d))
    unit_maps = np.empty((n_points, n_units, d, d))
    states[:, 0] = x
    _check_speeds(model, x, 'at the initial states')
    before = np.empty((per_unit, n_points, d))
    crossings = np.zeros((per_unit, n_points), dtype=bool)
    for unit in range(n_units):
        for step in range(per_unit):
            before[step] = x
            x, _, crossings[step] = advance(model, x, h, tangent=False)
        _, maps = _rk4(model, before.reshape(-1, d), h, tangent=True)
        maps = maps.reshape(per_unit, n_points, d, d)
        if np.any(crossings):
            _, glued, _ = advance(model, before[crossings], h, tangent=True)
            maps[crossings] = glued
        _check_determinants(maps.reshape(-1, d, d), 'in batch unit ' + str(unit))
        _check_speeds(model, x, 'in batch unit ' + str(unit))
        states[:, unit + 1] = x
        unit_maps[:, unit] = _compose(maps)
    return BatchSegment(states=states, unit_maps=unit_maps)


def displacement(model, x, y):
    """
    Minimal-image displacement y - x on the periodic axes.

    :param model: FlowModel
    :param x: States (..., d)
    :param y: States (..., d)
    :return: Displacements (..., d)
    """
    periods = np.asarray(model.periods)
    delta = np.asarray(y) - np.asarray(x)
    return delta - periods * np.round(delta / periods)


def transport_to_section(model, points, t, h, target, normal, newton_steps=4):
    """
    Flows section points for time close to t until they hit the affine hyperplane
    through target with the given unit normal.
    The nominal time is corrected by Newton steps on the signed distance
    to the target section.

    :param model: FlowModel
    :param points: Array (n, d) of states on the source section
    :param t: Nominal flow time
    :param h: Step size
    :param target: State the target section passes through
    :param normal: Unit normal of the target section
    :param newton_steps: Number of Newton corrections
    :return: End states (n, d), tangent maps (n, d, d) of the full flow time
    """
    _check_step(h)
    x = np.array(points, dtype=float)
    n_steps = int(round(t / h))
    acc = np.broadcast_to(np.eye(model.dim), (len(x),) + (model.dim, model.dim)).copy()
    for _ in range(n_steps):
        x, maps, _ = advance(model, x, h, tangent=True)
        acc = maps @ acc
    for _ in range(newton_steps):
        gap = displacement(model, target, x) @ normal
        rate = eval_field(model, x) @ normal
        correction = -gap / rate
        if np.all(np.abs(correction) < 1e-15):
            break
        x, maps = _rk4(model, x, correction, tangent=True)
        x = _wrap(model, x)
        acc = maps @ acc
    return x, acc
