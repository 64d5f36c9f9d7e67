"""
This file contains different utility functions necessary across other modules,
as well as the exceptions raised by the numerical modules.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import sys
import os
import rolf
import yaml
import logging
import logging.handlers
logger = logging.getLogger(__name__)


class RolfError(Exception):
    """
    Base class for all errors raised by rolf.
    """


class ValidationError(RolfError):
    """
    Raised when a configuration field or input file does not satisfy its documented range.

    :param message: Description of the problem
    :param field: Name of the offending field
    :param line: Line number in the config file, if the field came from a file
    """
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        self.detail = message
        prefix = ''
        if field is not None:
            prefix = "Field '" + str(field) + "'"
            if line is not None:
                prefix += ' (line ' + str(line) + ')'
            prefix += ': '
        super().__init__(prefix + message)


class ParseError(ValidationError):
    """
    Raised when a saved plan, certificate or cocycle cannot be read back.

    :param message: Description of the problem
    :param offset: Byte offset into the file where reading failed
    """
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = message + ' (byte offset ' + str(offset) + ')'
        super().__init__(message)


class NumericalError(RolfError):
    """
    Base class for numerical failures.
    """


class SpeedUnderflow(NumericalError):
    pass


class DeterminantDrift(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class SplitDegenerate(NumericalError):
    pass


class InconclusiveSplitting(NumericalError):
    pass


class NotDominated(NumericalError):
    pass


class AngleBudgetExceeded(NumericalError):
    """
    Raised when a rotation or plan step does not fit the perturbation budget.

    :param message: Description of the problem
    :param min_length: Smallest chain length that satisfies the constant schedule, if known
    """
    def __init__(self, message, min_length=None):
        self.min_length = min_length
        if min_length is not None:
            message = message + ' Minimal feasible length: ' + str(min_length) + '.'
        super().__init__(message)


class KappaOverflow(NumericalError):
    pass


class NoMixingNeeded(NumericalError):
    pass


class QuotientIllConditioned(NumericalError):
    pass


class HorizonTooShort(NumericalError):
    """
    Raised when no chain up to the given horizon lowers the exterior-power rate enough.

    :param message: Description of the problem
    :param min_horizon: Smallest horizon where the bound was met, or None
    """
    def __init__(self, message, min_horizon=None):
        self.min_horizon = min_horizon
        if min_horizon is not None:
            message = message + ' Minimal feasible horizon: ' + str(min_horizon) + '.'
        super().__init__(message)


class VerificationError(RolfError):
    pass


def _create_logger(filepath):
    """
    After a filepath has become available, loggers can be created
    when required to report on errors.
    :param filepath: Filepath where logs will be written.
    :return:
    """
    logpath = os.path.join(filepath, 'rolf.log')
    package_logger = logging.getLogger('rolf')
    for handler in package_logger.handlers:
        if isinstance(handler, logging.handlers.RotatingFileHandler) and \
                handler.baseFilename == os.path.abspath(logpath):
            return
    fh = logging.handlers.RotatingFileHandler(maxBytes=500000, backupCount=2,
                                              filename=logpath, mode='a')
    fh.setLevel(logging.INFO)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    fh.setFormatter(formatter)
    package_logger.addHandler(fh)


def _resource_path(relative_path):
    """
    Get absolute path to a resource shipped with the package.
    :param relative_path: Path relative to the package folder.
    :return:
    """
    try:
        base_path = list(rolf.__path__)[0]
    except Exception:
        base_path = sys._MEIPASS
    return os.path.join(base_path, relative_path)


def _read_config(args):
    """
    Reads the rolf YAML config file, if one was supplied.
    If the arguments are specified, these overwrite the config file.
    Only arguments that were actually given (not None) take precedence.

    :param args: User-supplied arguments as dict
    :return: Merged settings as dict, line numbers of the config keys as dict
    """
    config = dict()
    lines = dict()
    path = args.get('config')
    if path:
        path = _get_path(path, args.get('fp') or os.getcwd())
        with open(path, 'r') as file:
            text = file.read()
        try:
            loaded = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            line = None
            mark = getattr(e, 'problem_mark', None)
            if mark is not None:
                line = mark.line + 1
            raise ValidationError('Config file is not valid YAML. ', field='config', line=line)
        if loaded is None:
            logger.warning('Config file is empty. \n')
            loaded = dict()
        if not isinstance(loaded, dict):
            raise ValidationError('Config file must contain a mapping. ', field='config')
        config.update(loaded)
        if isinstance(node, yaml.MappingNode):
            for key_node, _ in node.value:
                lines[key_node.value] = key_node.start_mark.line + 1
    for key, val in args.items():
        if val is not None:
            config[key] = val
            lines.pop(key, None)
    return config, lines


def _get_path(path, default):
    """
    If given a path that is not a directory,
    this function checks if the file exists,
    if it is in the current working directory
    or if it is in the default path.

    If it cannot find the file, it raises an error.

    :param path: Partial or complete file path
    :param default: default file path
    :return:
    """
    if os.path.isfile(path):
        checked_path = path
    elif os.path.isfile(os.path.join(os.getcwd(), path)):
        checked_path = os.path.join(os.getcwd(), path)
    elif os.path.isfile(os.path.join(default, path)):
        checked_path = os.path.join(default, path)
    else:
        logger.error('Unable to import ' + path + '!\n')
        raise ValidationError('File not found: ' + path, field='path')
    return checked_path
