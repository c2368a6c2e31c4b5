import argparse
import json
import logging
from typing import List, Optional

from src.config import Config
from src.commands.handlers import HANDLERS
from src.data.dataset import DatasetFormatError, RegimeMismatchError, RegimeSpec
from src.estimators.registry import ESTIMATORS
from src.estimators.tmle_mediator import DEFAULT_MAX_ITERS, DEFAULT_TOL
from src.nuisance.spec import NuisanceSpecError
from src.simstudy.config import StudyConfigError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Bad command line."""


class CliParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so run_cli owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _regime(text: str) -> RegimeSpec:
    try:
        return RegimeSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def create_app() -> argparse.ArgumentParser:
    """Build the command-line application and configure logging."""
    logging.basicConfig(level=Config.LOG_LEVEL)

    app = CliParser(prog='frontdoor', description='Longitudinal front-door estimation toolkit')
    commands = app.add_subparsers(dest='command', parser_class=CliParser, required=True)

    simulate = commands.add_parser('simulate', help='draw a dataset from a DGP')
    simulate.add_argument('--dgp', required=True, help="builtin:paper, builtin:toy-v1 or a JSON path")
    simulate.add_argument('--n', type=_positive, required=True)
    simulate.add_argument('--seed', type=int, required=True)
    simulate.add_argument('--regime', type=_regime, default=None, help='intervene on the treatments')
    simulate.add_argument('--out', required=True, help="CSV path or '-' for stdout")

    estimate = commands.add_parser('estimate', help='run one estimator on a dataset')
    estimate.add_argument('--data', required=True)
    estimate.add_argument('--spec', required=True, help="nuisance spec JSON, or 'saturated'")
    estimate.add_argument('--estimator', required=True, choices=sorted(ESTIMATORS))
    estimate.add_argument('--regime', type=_regime, required=True)
    estimate.add_argument('--alpha', type=float, default=Config.DEFAULT_ALPHA)
    estimate.add_argument('--max-iters', type=int, default=DEFAULT_MAX_ITERS)
    estimate.add_argument('--tol', type=float, default=DEFAULT_TOL)
    estimate.add_argument('--out', required=True, help="result JSON path or '-' for stdout")

    study = commands.add_parser('study', help='run a Monte Carlo study')
    study.add_argument('--config', required=True)
    study.add_argument('--out', required=True, help="output directory or '-' for metrics on stdout")
    study.add_argument('--jobs', type=_positive, default=Config.DEFAULT_JOBS)
    study.add_argument('--no-plots', action='store_true')
    study.add_argument('--progress', action='store_true', default=None)

    oracle = commands.add_parser('oracle', help='exact or Monte Carlo value of the functional')
    oracle.add_argument('--dgp', required=True)
    oracle.add_argument('--regime', type=_regime, required=True)
    oracle.add_argument('--mode', choices=('exact', 'mc'), default='exact')
    oracle.add_argument('--n', type=_positive, default=Config.TRUTH_N)
    oracle.add_argument('--seed', type=int, default=Config.TRUTH_SEED)

    plot = commands.add_parser('plot', help='redraw figures from metrics.csv')
    plot.add_argument('--in', dest='input', required=True)
    plot.add_argument('--out', required=True)

    return app


def _exit_code(error: Exception) -> int:
    if isinstance(error.__cause__, json.JSONDecodeError):
        return EXIT_RUNTIME
    if isinstance(error, (UsageError, RegimeMismatchError, StudyConfigError, NuisanceSpecError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse argv, dispatch to the subcommand and map failures to exit codes."""
    app = create_app()
    try:
        args = app.parse_args(argv)
        return HANDLERS[args.command](args)
    except UsageError as e:
        logging.error(str(e))
        return EXIT_USAGE
    except DatasetFormatError as e:
        logging.error(f"Invalid dataset: {e}")
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, OSError, ArithmeticError) as e:
        code = _exit_code(e)
        logging.error(f"{'Invalid input' if code == EXIT_USAGE else 'Command failed'}: {e}")
        return code
