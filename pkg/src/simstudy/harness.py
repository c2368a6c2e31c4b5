"""
Monte Carlo driver: simulate, estimate under every scenario, aggregate.
"""
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import Config
from src.data.dataset import RegimeSpec
from src.data.dgp import DiscreteDgp
from src.data.simulate import simulate_dgp, simulate_ground_truth
from src.estimators.registry import run_estimator
from src.nuisance.models import fit_nuisance_set
from src.simstudy.config import MonteCarloConfig, StudyConfigError
from src.simstudy.report import REPLICATION_COLUMNS, StudyReport, summarize_cell
from src.simstudy.scenarios import ScenarioSpec
from src.utils.helpers import derive_seed

# errors that fail a replication instead of the study
ESTIMATION_ERRORS = (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError)


def replication_seed(base_seed: int, n: int, rep: int) -> int:
    """Seed of replication `rep` at sample size n; independent of run order."""
    return derive_seed(derive_seed(base_seed, n), rep)


def _record(scenario: str, estimator: str, regime: RegimeSpec, n: int, rep: int, seed: int,
            result=None, message: str = '') -> Dict:
    failed = result is None
    lo, hi = result.ci if (result is not None and result.ci is not None) else (None, None)
    return {
        'scenario': scenario, 'estimator': estimator, 'regime': regime.key, 'n': n, 'rep': rep,
        'seed': seed,
        'psi': None if failed else result.psi,
        'se': None if failed else result.se,
        'lo': lo, 'hi': hi, 'failed': failed, 'message': message,
    }


def run_replication(args) -> List[Dict]:
    """
    Simulate one dataset and run every scenario, regime and estimator on it.

    Module-level so ProcessPoolExecutor can pickle it.
    """
    dgp, scenarios, estimators, regimes, alpha, n, rep, seed = args
    data = simulate_dgp(dgp, n, seed)
    records = []
    for scenario in scenarios:
        for regime in regimes:
            try:
                nuisance = fit_nuisance_set(data, scenario.spec, regime)
            except ESTIMATION_ERRORS as e:
                message = f"nuisance fit failed: {e}"
                records.extend(_record(scenario.id, name, regime, n, rep, seed, message=message)
                               for name in estimators)
                continue
            for name in estimators:
                try:
                    result = run_estimator(name, data, scenario.spec, regime, alpha=alpha, nuisance=nuisance)
                    if not np.isfinite(result.psi):
                        raise ArithmeticError("non-finite estimate")
                    records.append(_record(scenario.id, name, regime, n, rep, seed, result))
                except ESTIMATION_ERRORS as e:
                    records.append(_record(scenario.id, name, regime, n, rep, seed, message=str(e)))
    return records


def resolve_truths(config: MonteCarloConfig, dgp: DiscreteDgp) -> Tuple[Dict[str, float], Dict]:
    """Truth per regime key, and metadata describing where it came from."""
    if config.truth != 'auto':
        truths = {r.key: config.truth_for(r) for r in config.regimes}
        return truths, {'source': 'supplied', 'values': truths}
    truths = {}
    for regime in config.regimes:
        truths[regime.key] = simulate_ground_truth(Config.TRUTH_N, Config.TRUTH_SEED, regime, dgp)
        logging.info(f"Ground truth for regime {regime.key}: {truths[regime.key]:.6f}")
    return truths, {'source': 'simulated', 'n': Config.TRUTH_N, 'seed': Config.TRUTH_SEED, 'values': truths}


def run_study(config: MonteCarloConfig, scenarios: Sequence[ScenarioSpec], dgp: DiscreteDgp,
              jobs: int = 1, progress: Optional[bool] = None,
              reps: Optional[Sequence[int]] = None) -> StudyReport:
    """
    Run all (n, replication) units and aggregate per (scenario, estimator, regime, n).

    Args:
        jobs: Worker processes; 1 runs in-process
        progress: Show a progress bar; defaults to whether stdout is a TTY
        reps: Replication indices to run (defaults to 0..replications-1)

    Raises:
        StudyConfigError: scenarios or regimes inconsistent with the DGP
    """
    if not scenarios:
        raise StudyConfigError("at least one scenario is required")
    for regime in config.regimes:
        if regime.horizon != dgp.horizon:
            raise StudyConfigError(f"regime {regime.key} does not match the DGP horizon T={dgp.horizon}")
    for scenario in scenarios:
        if scenario.spec.horizon != dgp.horizon:
            raise StudyConfigError(f"scenario {scenario.id} is for T={scenario.spec.horizon}, DGP has T={dgp.horizon}")
    truths, truth_meta = resolve_truths(config, dgp)
    reps = list(range(config.replications)) if reps is None else list(reps)
    units = [(dgp, tuple(scenarios), config.estimators, config.regimes, config.alpha, n, rep,
              replication_seed(config.seed, n, rep))
             for n in config.sample_sizes for rep in reps]
    if progress is None:
        progress = sys.stdout.isatty()
    logging.info(f"Running {len(units)} replications with {jobs} worker(s)")

    records: List[Dict] = []
    with tqdm(total=len(units), desc="replications", unit="rep", disable=not progress) as bar:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                futures = [executor.submit(run_replication, unit) for unit in units]
                for future in as_completed(futures):
                    records.extend(future.result())
                    bar.update(1)
        else:
            for unit in units:
                records.extend(run_replication(unit))
                bar.update(1)

    frame = pd.DataFrame(records, columns=list(REPLICATION_COLUMNS))
    frame = frame.sort_values(['scenario', 'estimator', 'regime', 'n', 'rep'], kind='mergesort').reset_index(drop=True)
    failed = int(frame['failed'].sum())
    if failed:
        logging.warning(f"{failed} estimator runs failed and are excluded from the metrics")

    rows = []
    for scenario in scenarios:
        for name in config.estimators:
            for regime in config.regimes:
                for n in config.sample_sizes:
                    cell = frame[(frame['scenario'] == scenario.id) & (frame['estimator'] == name)
                                 & (frame['regime'] == regime.key) & (frame['n'] == n)]
                    rows.append(summarize_cell(scenario.id, name, regime.key, n, cell, truths[regime.key]))

    metadata = {
        'config': config.to_dict(),
        'truth': truth_meta,
        'scenarios': {s.id: s.to_dict() for s in scenarios},
        'failures': failed,
    }
    return StudyReport(rows=rows, replications=frame, metadata=metadata)
