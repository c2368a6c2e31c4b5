"""
Inverse probability weighted estimators.
"""
import logging
from typing import Optional

import numpy as np

from src.data.dataset import LongitudinalDataset, validate_regime
from src.estimators.result import EstimateResult
from src.nuisance.models import FittedNuisanceSet, NuisancePredictor, fit_nuisance_set
from src.nuisance.sequential import terminal_q
from src.nuisance.spec import NuisanceSpec
from src.nuisance.weights import compute_H, compute_W
from src.utils.helpers import weighted_mean


def prepare_nuisance(data: LongitudinalDataset, spec: NuisanceSpec, regime,
                     nuisance: Optional[FittedNuisanceSet] = None) -> FittedNuisanceSet:
    """Fit the nuisance set unless a matching one is supplied."""
    regime = validate_regime(data, regime)
    if nuisance is None:
        return fit_nuisance_set(data, spec, regime)
    if nuisance.regime != regime:
        raise ValueError(f"nuisance set is for regime {nuisance.regime.key}, not {regime.key}")
    return nuisance


def estimate_ipw1(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                  nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """Weighted mean of W_T * sum over a' of Q_Y(L0, a', M) prod pi_t(a'_t | ...); no SE."""
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    predictor = NuisancePredictor(nuisance, data)
    diagnostics = list(nuisance.diagnostics)
    T = data.horizon
    w_T = compute_W(nuisance, data, T, predictor, diagnostics)
    if not np.any(w_T > 0):
        message = f"positivity: no rows follow regime {nuisance.regime.key}; estimate set to 0"
        logging.warning(message)
        diagnostics.append(message)
    psi = weighted_mean(w_T * terminal_q(predictor, T), data.weights)
    return EstimateResult(estimator='ipw1', psi=psi, regime=nuisance.regime.key, n=data.n_rows,
                          alpha=alpha, diagnostics=diagnostics)


def estimate_ipw2(data: LongitudinalDataset, spec: NuisanceSpec, regime, mode: str = 'direct',
                  alpha: float = 0.05, nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """
    Weighted mean of H_T * Q_Y(L0, A, M).

    mode 'direct' uses fitted mediator densities, 'gamma' the
    treatment-classifier rewrite of the density ratio.
    """
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    predictor = NuisancePredictor(nuisance, data)
    diagnostics = list(nuisance.diagnostics)
    h_T = compute_H(nuisance, data, data.horizon, mode, predictor, diagnostics)
    psi = weighted_mean(h_T * predictor.qy(), data.weights)
    name = 'ipw2a' if mode == 'direct' else 'ipw2b'
    return EstimateResult(estimator=name, psi=psi, regime=nuisance.regime.key, n=data.n_rows,
                          alpha=alpha, diagnostics=diagnostics)
