"""
Weight processes H_t (mediator density ratio) and W_t (inverse propensity).
"""
import logging
from typing import List, Optional

import numpy as np

from src.data.dataset import LongitudinalDataset
from src.nuisance.models import FittedNuisanceSet, NuisanceFitError, NuisancePredictor, bernoulli_mass


def truncate_h(h: np.ndarray, bound: Optional[float], t: int, diagnostics: Optional[List[str]]) -> np.ndarray:
    """Clip H_t to [1/bound, bound], recording how many rows the bound changed."""
    if bound is None:
        return h
    clipped = np.clip(h, 1.0 / bound, bound)
    binding = int(np.sum(clipped != h))
    if binding:
        message = f"H_{t} truncated to [{1.0 / bound:.4g}, {bound:.4g}] on {binding} rows"
        logging.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
    return clipped


def truncate_w(w: np.ndarray, bound: Optional[float], t: int, diagnostics: Optional[List[str]]) -> np.ndarray:
    if bound is None:
        return w
    capped = np.minimum(w, bound)
    binding = int(np.sum(capped != w))
    if binding:
        message = f"W_{t} truncated at {bound:.4g} on {binding} rows"
        logging.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
    return capped


def _direct_ratio(predictor: NuisancePredictor, data: LongitudinalDataset, k: int) -> np.ndarray:
    regime = predictor.nuisance.regime
    m_k = data.mediator(k)
    numerator = bernoulli_mass(predictor.g_one(k, regime.prefix(k)), m_k)
    denominator = bernoulli_mass(predictor.g_one(k), m_k)
    # rows following the regime through k have ratio exactly 1
    return np.where(data.regime_match(regime, k), 1.0, numerator / denominator)


def _gamma_ratio(predictor: NuisancePredictor, data: LongitudinalDataset, k: int) -> np.ndarray:
    regime = predictor.nuisance.regime
    ratio = np.ones(data.n_rows)
    for j in range(k + 1):
        a_j = regime.values[j]
        observed = data.treatment(j)
        g1_reg = bernoulli_mass(predictor.gamma_one(1, k, j, regime.prefix(j - 1)), a_j)
        g2_reg = bernoulli_mass(predictor.gamma_one(2, k, j, regime.prefix(j - 1)), a_j)
        g2_obs = bernoulli_mass(predictor.gamma_one(2, k, j), observed)
        g1_obs = bernoulli_mass(predictor.gamma_one(1, k, j), observed)
        factor = (g1_reg / g2_reg) * (g2_obs / g1_obs)
        ratio = ratio * np.where(data.regime_match(regime, j), 1.0, factor)
    return ratio


def compute_H(nuisance: FittedNuisanceSet, data: LongitudinalDataset, t: int,
              mode: Optional[str] = None, predictor: Optional[NuisancePredictor] = None,
              diagnostics: Optional[List[str]] = None) -> np.ndarray:
    """
    H_t = prod_{k<=t} g_k(M_k | a_k, ...) / g_k(M_k | A_k, ...), with H_{-1} = 1.

    Args:
        mode: 'direct' (fitted g_t) or 'gamma' (treatment classifiers);
            defaults to the spec's h_mode
    """
    if t > nuisance.horizon:
        raise ValueError(f"t={t} exceeds the horizon T={nuisance.horizon}")
    if t < 0:
        return np.ones(data.n_rows)
    mode = mode or nuisance.spec.h_mode
    predictor = predictor or NuisancePredictor(nuisance, data)
    if mode == 'direct':
        if nuisance.g is None:
            raise NuisanceFitError("H", "direct mode needs fitted mediator densities g_t")
        ratio_fn = _direct_ratio
    elif mode == 'gamma':
        if nuisance.gamma1 is None:
            raise NuisanceFitError("H", "gamma mode needs fitted gamma classifiers")
        ratio_fn = _gamma_ratio
    else:
        raise ValueError(f"unknown H mode '{mode}'")
    h = np.ones(data.n_rows)
    for k in range(t + 1):
        h = h * ratio_fn(predictor, data, k)
    assert np.all(h > 0), "mediator density ratio must be positive"
    return truncate_h(h, nuisance.spec.truncate, t, diagnostics)


def compute_W(nuisance: FittedNuisanceSet, data: LongitudinalDataset, t: int,
              predictor=None, diagnostics: Optional[List[str]] = None) -> np.ndarray:
    """
    W_t = 1(A_0..A_t = a_0..a_t) / prod_{k<=t} pi_k(a_k | L0, M_{k-1}, a_{k-1}).

    `predictor` may be any object exposing pi_one(t, history), such as a
    targeted view carrying updated propensities.
    """
    if t > nuisance.horizon:
        raise ValueError(f"t={t} exceeds the horizon T={nuisance.horizon}")
    if t < 0:
        return np.ones(data.n_rows)
    predictor = predictor or NuisancePredictor(nuisance, data)
    regime = nuisance.regime
    denominator = np.ones(data.n_rows)
    for k in range(t + 1):
        denominator = denominator * bernoulli_mass(predictor.pi_one(k, regime.prefix(k - 1)), regime.values[k])
    match = data.regime_match(regime, t)
    w = np.where(match, 1.0 / denominator, 0.0)
    return truncate_w(w, nuisance.spec.truncate, t, diagnostics)
