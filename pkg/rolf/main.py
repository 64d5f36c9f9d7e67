"""
This file contains parsers and functions that call on other functionality defined
in the rest of rolf's scripts directory.
Each subcommand reads a YAML config file (-cf) merged with its flags,
writes its reports, tables and a manifest to the output directory (-fp)
and exits with a code that tells validation, numerical and verification failures apart.
"""

__author__ = 'Lisa Rottjers'
__maintainer__ = 'Lisa Rottjers'
__email__ = 'lisa.rottjers@kuleuven.be'
__status__ = 'Development'
__license__ = 'Apache 2.0'

import sys
import argparse
import multiprocessing as mp
from pbr.version import VersionInfo
from rolf.scripts.spectrum import start_exponents, start_lek
from rolf.scripts.domination import start_domination
from rolf.scripts.classify import start_classify
from rolf.scripts.perturb import start_perturb, start_replay
from rolf.scripts.poincare import start_flowbox
from rolf.scripts.utils import ValidationError, NumericalError, VerificationError
import logging.handlers

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# handler to sys.stdout
sh = logging.StreamHandler(sys.stdout)
sh.setLevel(logging.INFO)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
sh.setFormatter(formatter)
logger.addHandler(sh)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3

COMMANDS = {'exponents': start_exponents,
            'domination': start_domination,
            'classify': start_classify,
            'le-k': start_lek,
            'perturb': start_perturb,
            'replay': start_replay,
            'flowbox': start_flowbox}


def rolf(rolf_args):
    """
    Main function for running rolf.
    Accepts a dictionary of arguments from the argument parser
    and calls the appropriate module function.

    :param rolf_args: Arguments.
    :return: Exit code
    """
    if rolf_args.get('version'):
        try:
            version = VersionInfo('rolf').version_string()
        except Exception:
            version = 'unknown'
        logger.info('Version ' + version)
        return EXIT_OK
    command = rolf_args.get('command')
    if command is None:
        logger.error('No subcommand given; see rolf -h. ')
        return EXIT_VALIDATION
    try:
        logger.info('Running ' + command + ' module. ')
        COMMANDS[command](rolf_args)
    except ValidationError as e:
        logger.error(str(e), exc_info=True)
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error(type(e).__name__ + ': ' + str(e), exc_info=True)
        return EXIT_NUMERICAL
    except VerificationError as e:
        logger.error('Verification failed: ' + str(e), exc_info=True)
        return EXIT_VERIFICATION
    logger.info('Completed tasks! ')
    return EXIT_OK


rolf_parser = argparse.ArgumentParser(description='rolf: experiments on linear Poincare flows '
                                                  'of divergence-free vector fields')
rolf_parser.add_argument('-version', '--version',
                         dest='version',
                         required=False,
                         help='Version number.',
                         action='store_true',
                         default=False)
subparsers = rolf_parser.add_subparsers(title="rolf modules",
                                        dest='command',
                                        description="Each module runs one experiment. "
                                                    "Settings come from the config file "
                                                    "and are overridden by flags. ")


def _add_standard_parser(parser):
    """
    Adds some standard arguments to the parsers.
    :param parser: Argparse parser
    :return:
    """
    parser.add_argument('-fp', '--output_filepath',
                        dest='fp',
                        help='Output directory. By default, $ROLF_OUTPUT or the working directory. ',
                        default=None)
    parser.add_argument('-cf', '--config',
                        dest='config',
                        help='YAML config file with experiment settings. ',
                        required=False,
                        type=str,
                        default=None)
    parser.add_argument('-model', '--model',
                        dest='model',
                        required=False,
                        help='Built-in model id or path to a YAML model file. ',
                        type=str,
                        default=None)
    parser.add_argument('-seed', '--seed',
                        dest='seed',
                        required=False,
                        help='Seed for all sampling. ',
                        type=int,
                        default=None)
    parser.add_argument('-T', '--horizon',
                        dest='horizon',
                        required=False,
                        help='Number of unit-time blocks per orbit. ',
                        type=int,
                        default=None)
    parser.add_argument('-step', '--step',
                        dest='step',
                        required=False,
                        help='Integration step size. ',
                        type=float,
                        default=None)
    parser.add_argument('-n', '--samples',
                        dest='samples',
                        required=False,
                        help='Number of sampled points. ',
                        type=int,
                        default=None)
    parser.add_argument('-cores', '--workers',
                        dest='workers',
                        required=False,
                        help='Number of worker processes. ',
                        type=int,
                        default=None)
    return parser


def _add_domination_parser(parser):
    parser.add_argument('-k', '--index',
                        dest='k',
                        required=False,
                        help='One or more splitting indices. ',
                        type=int,
                        default=None,
                        nargs='+')
    parser.add_argument('-m', '--m_grid',
                        dest='m_grid',
                        required=False,
                        help='One or more domination constants m. ',
                        type=int,
                        default=None,
                        nargs='+')
    return parser


parse_exponents = subparsers.add_parser('exponents', description='Finite-time Lyapunov spectra.',
                                        help='Computes the exponents of the linear Poincare flow '
                                             'at sampled points and writes the cocycle of the first point. ')
parse_exponents = _add_standard_parser(parse_exponents)

parse_domination = subparsers.add_parser('domination', description='m-domination scans.',
                                         help='Tests the domination inequality of index k along '
                                              'sampled orbits and reports Lambda/Gamma verdicts. ')
parse_domination = _add_standard_parser(parse_domination)
parse_domination = _add_domination_parser(parse_domination)

parse_classify = subparsers.add_parser('classify', description='Z-like / D-like classification.',
                                       help='Sorts sampled points into points with vanishing exponents '
                                            'and points with a dominated splitting. ')
parse_classify = _add_standard_parser(parse_classify)
parse_classify = _add_domination_parser(parse_classify)

parse_lek = subparsers.add_parser('le-k', description='Integrated k-exponent.',
                                  help='Estimates LE_k as the infimum of the mean log wedge norms. ')
parse_lek = _add_standard_parser(parse_lek)
parse_lek = _add_domination_parser(parse_lek)
parse_lek.add_argument('-j', '--j_max',
                       dest='j_max',
                       required=False,
                       help='Largest time j of the wedge norms. ',
                       type=int,
                       default=None)

parse_perturb = subparsers.add_parser('perturb', description='Realizable perturbations.',
                                      help='Runs a single exchange, the exponent-lowering experiment '
                                           'or a certificate campaign, and writes plan and certificate. ')
parse_perturb = _add_standard_parser(parse_perturb)
parse_perturb = _add_domination_parser(parse_perturb)
parse_perturb.add_argument('-mode', '--mode',
                           dest='mode',
                           required=False,
                           help='exchange, local or campaign. ',
                           type=str,
                           default=None)
parse_perturb.add_argument('-coc', '--cocycle',
                           dest='cocycle',
                           required=False,
                           help='Cocycle file, or neutral_gap for the built-in test cocycle. ',
                           type=str,
                           default=None)
parse_perturb.add_argument('-eps', '--epsilon',
                           dest='epsilon',
                           required=False,
                           help='Size of the perturbation. ',
                           type=float,
                           default=None)
parse_perturb.add_argument('-kappa', '--kappa',
                           dest='kappa',
                           required=False,
                           help='Measure fraction of the flowbox that may be used. ',
                           type=float,
                           default=None)
parse_perturb.add_argument('-delta', '--delta',
                           dest='delta',
                           required=False,
                           help='Target excess over the integrated exponent. ',
                           type=float,
                           default=None)
parse_perturb.add_argument('-cases', '--cases',
                           dest='cases',
                           required=False,
                           help='Exchange cases for the campaign. ',
                           type=str,
                           default=None,
                           nargs='+')
parse_perturb.add_argument('-trials', '--trials',
                           dest='trials',
                           required=False,
                           help='Number of trials per case. ',
                           type=int,
                           default=None)

parse_replay = subparsers.add_parser('replay', description='Certificate replay.',
                                     help='Checks a saved plan and certificate without the cocycle. ')
parse_replay = _add_standard_parser(parse_replay)
parse_replay.add_argument('-plan', '--plan',
                          dest='plan',
                          required=True,
                          help='Plan file. ',
                          type=str)
parse_replay.add_argument('-cert', '--certificate',
                          dest='certificate',
                          required=True,
                          help='Certificate file. ',
                          type=str)

parse_flowbox = subparsers.add_parser('flowbox', description='Flowbox distortion.',
                                      help='Estimates how far the flowbox map is from scaling '
                                           'the section measure, for each radius. ')
parse_flowbox = _add_standard_parser(parse_flowbox)
parse_flowbox.add_argument('-r', '--radius',
                           dest='radius',
                           required=False,
                           help='One or more ball radii. ',
                           type=float,
                           default=None,
                           nargs='+')
parse_flowbox.add_argument('-t', '--time',
                           dest='flowbox_time',
                           required=False,
                           help='Flow time between the sections. ',
                           type=float,
                           default=None)


def main(argv=None):
    mp.freeze_support()
    options = rolf_parser.parse_args(argv)
    sys.exit(rolf(vars(options)))


if __name__ == '__main__':
    main()
