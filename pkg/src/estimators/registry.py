"""
Estimator lookup by the ids used in study configs and on the command line.
"""
import logging
from functools import partial
from typing import Callable, Dict, Optional

import numpy as np
from scipy.stats import norm

from src.data.dataset import LongitudinalDataset
from src.estimators.ipw import estimate_ipw1, estimate_ipw2
from src.estimators.onestep import estimate_onestep
from src.estimators.result import EstimateResult
from src.estimators.sequential import estimate_sr1, estimate_sr2
from src.estimators.tmle import estimate_tmle
from src.estimators.tmle_mediator import estimate_tmle_mediator
from src.nuisance.models import FittedNuisanceSet
from src.nuisance.spec import NuisanceSpec
from src.utils.helpers import weighted_variance

Estimator = Callable[..., EstimateResult]

ESTIMATORS: Dict[str, Estimator] = {
    'ipw1': estimate_ipw1,
    'ipw2a': partial(estimate_ipw2, mode='direct'),
    'ipw2b': partial(estimate_ipw2, mode='gamma'),
    'sr1': estimate_sr1,
    'sr2': estimate_sr2,
    'onestep': estimate_onestep,
    'tmle': estimate_tmle,
    'tmle_med': estimate_tmle_mediator,
}

# Estimators that attach influence-function inference
WITH_INFERENCE = ('onestep', 'tmle', 'tmle_med')


def run_estimator(name: str, data: LongitudinalDataset, spec: NuisanceSpec, regime,
                  alpha: float = 0.05, nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """
    Run one estimator by id.

    Raises:
        ValueError: unknown estimator id
    """
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator '{name}'; choose from {', '.join(ESTIMATORS)}")
    return ESTIMATORS[name](data, spec, regime, alpha=alpha, nuisance=nuisance)


def estimate_contrast(result_1: EstimateResult, result_0: EstimateResult, alpha: float = 0.05,
                      weights: Optional[np.ndarray] = None) -> EstimateResult:
    """
    psi_1 - psi_0 with a delta-method SE from the difference of the two
    influence functions. Without both influence functions there is no SE.
    """
    if result_1.n != result_0.n:
        raise ValueError("contrast needs both estimates on the same rows")
    psi = result_1.psi - result_0.psi
    name = f"{result_1.estimator}:{result_1.regime}-{result_0.regime}"
    if result_1.eif_values is None or result_0.eif_values is None:
        logging.info(f"No influence functions for {name}; contrast reported without SE")
        return EstimateResult(estimator=name, psi=psi, regime=f"{result_1.regime}-{result_0.regime}",
                              n=result_1.n, alpha=alpha,
                              diagnostics=["contrast has no standard error: influence function missing"])
    values = result_1.eif_values - result_0.eif_values
    n = values.shape[0]
    weights = np.ones(n) if weights is None else weights
    se = float(np.sqrt(weighted_variance(values, weights) / n))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    return EstimateResult(
        estimator=name,
        psi=psi,
        regime=f"{result_1.regime}-{result_0.regime}",
        n=n,
        alpha=alpha,
        se=se,
        ci=(psi - z * se, psi + z * se),
        eif_values=values,
        diagnostics=list(result_1.diagnostics) + list(result_0.diagnostics),
    )
