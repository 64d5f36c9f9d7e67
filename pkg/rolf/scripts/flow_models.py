"""
The flow_models module defines the divergence-free vector fields that rolf analyses.

Each model is an immutable FlowModel holding a field and its Jacobian,
both evaluated on arrays of states with shape (..., d).
Suspension flows are stored as a constant field on a fundamental-domain chart;
the integrator applies the gluing matrix when an orbit crosses the roof
(the last coordinate reaching its period).

Custom models can be read from a YAML file with a table of terms per field component:

    id: shear_flow
    dim: 3
    periods: [1.0, 1.0, 1.0]
    field:
      - [{kind: sin, coef: 1.0, axis: 1, freq: 6.283185307179586}]
      - [{kind: const, coef: 0.5}]
      - [{kind: cos, coef: 1.0, axis: 0, freq: 6.283185307179586}]

Term kinds are const (coef), sin and cos (coef * sin(freq * x[axis] + phase))
and poly (coef * prod(x[i] ** powers[i])).
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import os
import sys
from dataclasses import dataclass, field as dataclass_field
from functools import partial
import numpy as np
import yaml
from rolf.scripts.utils import ValidationError, _resource_path
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_EXPONENT = float(np.log((3 + np.sqrt(5)) / 2))
TRACE_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class FlowModel:
    """
    Divergence-free vector field on a flat torus or mapping torus.

    :param id: Model identifier used by the registry
    :param dim: Dimension d of the phase space
    :param field: Callable mapping states (..., d) to velocities (..., d)
    :param jacobian: Callable mapping states (..., d) to Jacobians (..., d, d)
    :param periods: Period of each axis
    :param gluing: d x d matrix applied at roof crossings of the last axis, or None
    :param params: Constructor parameters, used to rebuild the model in workers
    :param metadata: Ground-truth record (known exponents, angle floor)
    :param singular: Declared singular set (empty for all shipped models)
    """
    id: str
    dim: int
    field: object
    jacobian: object
    periods: tuple
    gluing: np.ndarray = None
    params: dict = dataclass_field(default_factory=dict)
    metadata: dict = dataclass_field(default_factory=dict)
    singular: tuple = ()

    @property
    def fiber_dim(self):
        return self.dim - 1

    @property
    def roof(self):
        if self.gluing is None:
            return None
        return self.periods[-1]


def eval_field(model, x):
    """
    Evaluates the vector field at one or more states.

    :param model: FlowModel
    :param x: State array of shape (d,) or (n, d)
    :return: Velocity array of the same shape
    """
    return model.field(np.asarray(x, dtype=float))


def eval_jacobian(model, x):
    """
    Evaluates the Jacobian DX at one or more states.

    :param model: FlowModel
    :param x: State array of shape (d,) or (n, d)
    :return: Array of shape (d, d) or (n, d, d)
    """
    return model.jacobian(np.asarray(x, dtype=float))


def speed(model, x):
    return np.linalg.norm(eval_field(model, x), axis=-1)


def _constant_field(x, velocity):
    return np.broadcast_to(velocity, x.shape).copy()


def _zero_jacobian(x):
    return np.zeros(x.shape + (x.shape[-1],))


def _abc_field(x, a, b, c):
    return np.stack([a * np.sin(x[..., 2]) + c * np.cos(x[..., 1]),
                     b * np.sin(x[..., 0]) + a * np.cos(x[..., 2]),
                     c * np.sin(x[..., 1]) + b * np.cos(x[..., 0])], axis=-1)


def _abc_jacobian(x, a, b, c):
    jac = np.zeros(x.shape + (3,))
    jac[..., 0, 1] = -c * np.sin(x[..., 1])
    jac[..., 0, 2] = a * np.cos(x[..., 2])
    jac[..., 1, 0] = b * np.cos(x[..., 0])
    jac[..., 1, 2] = -a * np.sin(x[..., 2])
    jac[..., 2, 0] = -b * np.sin(x[..., 0])
    jac[..., 2, 1] = c * np.cos(x[..., 1])
    return jac


def cat_suspension():
    """
    Suspension of the torus automorphism [[2,1],[1,1]] with unit roof.
    The field is (0, 0, 1) on the chart; all hyperbolicity sits in the gluing matrix.

    :return: FlowModel
    """
    gluing = np.eye(3)
    gluing[:2, :2] = CAT_MATRIX
    return FlowModel(id='cat_suspension', dim=3,
                     field=partial(_constant_field, velocity=np.array([0.0, 0.0, 1.0])),
                     jacobian=_zero_jacobian,
                     periods=(1.0, 1.0, 1.0), gluing=gluing, params={},
                     metadata={'exponents': (CAT_EXPONENT, -CAT_EXPONENT),
                               'angle_floor': 0.1,
                               'dominated_indices': (1,)})


def irrational_winding(alpha=np.sqrt(2), beta=np.sqrt(3)):
    """
    Constant field (1, alpha, beta) on the unit 3-torus.

    :param alpha: Second velocity component
    :param beta: Third velocity component
    :return: FlowModel
    """
    return FlowModel(id='irrational_winding', dim=3,
                     field=partial(_constant_field, velocity=np.array([1.0, alpha, beta])),
                     jacobian=_zero_jacobian,
                     periods=(1.0, 1.0, 1.0), params={'alpha': alpha, 'beta': beta},
                     metadata={'exponents': (0.0, 0.0),
                               'angle_floor': None,
                               'dominated_indices': ()})


def abc_flow(A=1.0, B=1.0, C=1.0):
    """
    Arnold-Beltrami-Childress flow on the 2pi-periodic 3-torus.
    No exponents are known; the model is used for property checks.

    :param A: Coefficient A
    :param B: Coefficient B
    :param C: Coefficient C
    :return: FlowModel
    """
    return FlowModel(id='abc_flow', dim=3,
                     field=partial(_abc_field, a=A, b=B, c=C),
                     jacobian=partial(_abc_jacobian, a=A, b=B, c=C),
                     periods=(2 * np.pi,) * 3, params={'A': A, 'B': B, 'C': C},
                     metadata={'exponents': None, 'angle_floor': None,
                               'dominated_indices': None})


def product_hyperbolic(extra=1):
    """
    Cat suspension times a flat torus of extra neutral directions.
    States are ordered (x, y, w_1, ..., w_extra, z) with z the roof axis.

    :param extra: Number of neutral directions, at least 1
    :return: FlowModel
    """
    extra = int(extra)
    if extra < 1:
        raise ValidationError('product_hyperbolic needs at least one neutral direction. ',
                              field='extra')
    dim = 3 + extra
    velocity = np.zeros(dim)
    velocity[-1] = 1.0
    gluing = np.eye(dim)
    gluing[:2, :2] = CAT_MATRIX
    exponents = (CAT_EXPONENT,) + (0.0,) * extra + (-CAT_EXPONENT,)
    return FlowModel(id='product_hyperbolic', dim=dim,
                     field=partial(_constant_field, velocity=velocity),
                     jacobian=_zero_jacobian,
                     periods=(1.0,) * dim, gluing=gluing, params={'extra': extra},
                     metadata={'exponents': exponents, 'angle_floor': 0.1,
                               'dominated_indices': (1, dim - 2)})


MODELS = {'cat_suspension': cat_suspension,
          'irrational_winding': irrational_winding,
          'abc_flow': abc_flow,
          'product_hyperbolic': product_hyperbolic}


def get_model(model_id, **params):
    """
    Returns a model from the registry, or reads a custom model
    if the identifier points to a YAML file or names a model file shipped in rolf/models.

    :param model_id: Registered model name or path to a model file
    :param params: Constructor parameters
    :return: FlowModel
    """
    if model_id in MODELS:
        try:
            return MODELS[model_id](**params)
        except TypeError:
            raise ValidationError('Unknown parameters ' + str(sorted(params)) +
                                  ' for model ' + model_id + '. ', field='model_params')
    if isinstance(model_id, str) and os.path.isfile(model_id):
        return load_model(model_id)
    bundled = _resource_path(os.path.join('models', str(model_id) + '.yaml'))
    if os.path.isfile(bundled):
        return load_model(bundled)
    raise ValidationError('Unknown model ' + str(model_id) + '. Choose from ' +
                          ', '.join(sorted(MODELS)) + ' or give a model file. ', field='model')


def _term_value(x, term):
    kind = term['kind']
    coef = term.get('coef', 1.0)
    if kind == 'const':
        return np.full(x.shape[:-1], coef)
    if kind == 'sin':
        return coef * np.sin(term['freq'] * x[..., term['axis']] + term.get('phase', 0.0))
    if kind == 'cos':
        return coef * np.cos(term['freq'] * x[..., term['axis']] + term.get('phase', 0.0))
    value = np.full(x.shape[:-1], coef)
    for axis, power in enumerate(term['powers']):
        if power:
            value = value * x[..., axis] ** power
    return value


def _term_gradient(x, term):
    grad = np.zeros(x.shape)
    kind = term['kind']
    coef = term.get('coef', 1.0)
    if kind == 'const':
        return grad
    if kind in ('sin', 'cos'):
        axis, freq = term['axis'], term['freq']
        arg = freq * x[..., axis] + term.get('phase', 0.0)
        if kind == 'sin':
            grad[..., axis] = coef * freq * np.cos(arg)
        else:
            grad[..., axis] = -coef * freq * np.sin(arg)
        return grad
    powers = term['powers']
    for axis, power in enumerate(powers):
        if not power:
            continue
        partial_value = np.full(x.shape[:-1], coef * power)
        for other, other_power in enumerate(powers):
            exponent = other_power - 1 if other == axis else other_power
            if exponent:
                partial_value = partial_value * x[..., other] ** exponent
        grad[..., axis] = partial_value
    return grad


def _table_field(x, table):
    return np.stack([sum(_term_value(x, term) for term in row) if row
                     else np.zeros(x.shape[:-1]) for row in table], axis=-1)


def _table_jacobian(x, table):
    jac = np.zeros(x.shape + (x.shape[-1],))
    for i, row in enumerate(table):
        for term in row:
            jac[..., i, :] += _term_gradient(x, term)
    return jac


def _check_term(term, dim, row):
    kinds = ('const', 'sin', 'cos', 'poly')
    if not isinstance(term, dict) or term.get('kind') not in kinds:
        raise ValidationError('Each term needs a kind out of ' + ', '.join(kinds) + '. ',
                              field='field[' + str(row) + ']')
    if term['kind'] in ('sin', 'cos'):
        if not 0 <= int(term.get('axis', -1)) < dim or 'freq' not in term:
            raise ValidationError('Trigonometric terms need an axis in [0, d) and a freq. ',
                                  field='field[' + str(row) + ']')
    if term['kind'] == 'poly':
        powers = term.get('powers')
        if not isinstance(powers, list) or len(powers) != dim or \
                any(int(p) != p or p < 0 for p in powers):
            raise ValidationError('Polynomial terms need d nonnegative integer powers. ',
                                  field='field[' + str(row) + ']')


def load_model(path):
    """
    Reads a custom model from a YAML term table and checks that it is divergence-free.

    :param path: Filepath to the model file
    :return: FlowModel
    """
    with open(path, 'r') as file:
        description = yaml.safe_load(file)
    if not isinstance(description, dict) or 'field' not in description:
        raise ValidationError('Model file needs a field table. ', field='field')
    table = description['field']
    dim = int(description.get('dim', len(table)))
    if dim < 3 or len(table) != dim:
        raise ValidationError('Field table must have one row per dimension, d >= 3. ',
                              field='dim')
    for i, row in enumerate(table):
        for term in row or []:
            _check_term(term, dim, i)
    table = tuple(tuple(row or ()) for row in table)
    periods = tuple(float(p) for p in description.get('periods', [2 * np.pi] * dim))
    if len(periods) != dim or any(p <= 0 for p in periods):
        raise ValidationError('One positive period per axis is required. ', field='periods')
    model = FlowModel(id=str(description.get('id', os.path.splitext(os.path.basename(path))[0])),
                      dim=dim,
                      field=partial(_table_field, table=table),
                      jacobian=partial(_table_jacobian, table=table),
                      periods=periods, params={'path': path},
                      metadata={'exponents': None, 'angle_floor': description.get('angle_floor'),
                                'dominated_indices': None})
    worst = check_divergence(model, n_samples=2000, seed=0)
    if worst > TRACE_TOLERANCE:
        raise ValidationError('Field is not divergence-free: max |trace DX| = ' +
                              str(worst) + '. ', field='field')
    logger.info('Loaded custom model ' + model.id + ' from ' + path + '. ')
    return model


def sample_points(model, n, rng):
    """
    Draws states uniformly from the domain box.
    Uniform sampling is the invariant volume on all shipped domains.

    :param model: FlowModel
    :param n: Number of states
    :param rng: numpy Generator
    :return: Array of shape (n, d)
    """
    return rng.random((n, model.dim)) * np.asarray(model.periods)


def check_divergence(model, n_samples=10000, seed=0):
    """
    Returns the largest |trace DX| over uniformly sampled states.

    :param model: FlowModel
    :param n_samples: Number of states
    :param seed: Seed for the sampler
    :return: Maximum absolute trace
    """
    points = sample_points(model, n_samples, np.random.default_rng(seed))
    traces = np.trace(eval_jacobian(model, points), axis1=-2, axis2=-1)
    return float(np.max(np.abs(traces)))


def jacobian_fd_order(model, x, hs=(1e-3, 1e-4)):
    """
    Compares central differences of the field with the analytic Jacobian
    at two step sizes and returns the observed convergence order.

    :param model: FlowModel
    :param x: State
    :param hs: Two step sizes, largest first
    :return: Observed order, errors per step size
    """
    x = np.asarray(x, dtype=float)
    jac = eval_jacobian(model, x)
    errors = []
    for h in hs:
        fd = np.empty_like(jac)
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = h
            fd[:, i] = (eval_field(model, x + e) - eval_field(model, x - e)) / (2 * h)
        errors.append(float(np.max(np.abs(fd - jac))))
    if errors[0] == 0 or errors[1] == 0:
        return np.inf, errors
    order = np.log(errors[0] / errors[1]) / np.log(hs[0] / hs[1])
    return float(order), errors
