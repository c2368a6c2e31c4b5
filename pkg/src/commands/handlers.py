"""
Subcommand handlers. Each returns the process exit code on success and
lets domain errors propagate to run_cli, which maps them to exit codes.
"""
import logging
import sys

from src.data.dataset import LongitudinalDataset
from src.data.dgp import load_dgp
from src.data.oracle import enumerate_joint, exact_counterfactual_mean, exact_f_functional
from src.data.simulate import simulate_dgp, simulate_ground_truth
from src.estimators.registry import run_estimator
from src.estimators.tmle_mediator import estimate_tmle_mediator
from src.nuisance.spec import NuisanceSpec, saturated_spec
from src.simstudy.config import MonteCarloConfig
from src.simstudy.harness import run_study
from src.simstudy.plots import plot_metrics
from src.simstudy.report import emit_report, read_metrics
from src.simstudy.scenarios import load_scenarios
from src.utils.helpers import format_float


def handle_simulate(args) -> int:
    dgp = load_dgp(args.dgp)
    data = simulate_dgp(dgp, args.n, args.seed, regime=args.regime)
    data.to_csv(args.out)
    logging.info(f"Simulated {args.n} rows from {dgp.name} (seed {args.seed})")
    return 0


def _load_spec(reference: str, data: LongitudinalDataset) -> NuisanceSpec:
    if reference == 'saturated':
        return saturated_spec(data.horizon, data.baseline)
    return NuisanceSpec.from_json(reference)


def handle_estimate(args) -> int:
    data = LongitudinalDataset.read_csv(args.data)
    spec = _load_spec(args.spec, data)
    if args.estimator == 'tmle_med':
        result = estimate_tmle_mediator(data, spec, args.regime, alpha=args.alpha,
                                        max_iters=args.max_iters, tol=args.tol)
    else:
        result = run_estimator(args.estimator, data, spec, args.regime, alpha=args.alpha)
    summary = result.summary_line()
    if args.out == '-':
        result.to_json(sys.stdout)
        print(summary, file=sys.stderr)
    else:
        result.to_json(args.out)
        print(summary)
    return 0


def handle_study(args) -> int:
    config = MonteCarloConfig.from_json(args.config)
    dgp = load_dgp(config.dgp)
    scenarios = load_scenarios(list(config.scenarios))
    report = run_study(config, scenarios, dgp, jobs=args.jobs, progress=args.progress)
    emit_report(report, args.out, plots=not args.no_plots)
    return 0


def handle_oracle(args) -> int:
    dgp = load_dgp(args.dgp)
    if args.mode == 'exact':
        joint = enumerate_joint(dgp)
        functional = exact_f_functional(joint, args.regime)
        counterfactual = exact_counterfactual_mean(dgp, args.regime)
        print(f"f_functional={functional:.12g}")
        print(f"counterfactual_mean={counterfactual:.12g}")
        print(f"difference={functional - counterfactual:.3g}")
    else:
        value = simulate_ground_truth(args.n, args.seed, args.regime, dgp)
        print(f"f_functional={format_float(value)} (monte carlo, n={args.n}, seed={args.seed})")
    return 0


def handle_plot(args) -> int:
    report = read_metrics(args.input)
    for path in plot_metrics(report.rows, args.out):
        print(path)
    return 0


HANDLERS = {
    'simulate': handle_simulate,
    'estimate': handle_estimate,
    'study': handle_study,
    'oracle': handle_oracle,
    'plot': handle_plot,
}