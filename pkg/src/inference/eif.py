"""
Efficient influence function of the front-door functional and Wald intervals.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.stats import norm

from src.data.dataset import LongitudinalDataset
from src.nuisance.models import FittedNuisanceSet
from src.nuisance.sequential import NuisanceCache
from src.utils.helpers import weighted_mean, weighted_variance

ANCHORS = ('q', 'r')


class CacheMissingError(ValueError):
    """The nuisance set has not been evaluated on the dataset."""


class EifConsistencyError(RuntimeError):
    """The two algebraic forms of a treatment component disagree."""


@dataclass
class EifBreakdown:
    """
    Per-row components. `total` is accumulated in one fixed order:
    d_y, then d_m[0..T], then d_a[0..T], then plug_in, minus psi_reference.
    """
    d_y: np.ndarray
    d_m: List[np.ndarray]
    d_a: List[np.ndarray]
    d_a_clever: List[np.ndarray]
    plug_in: np.ndarray
    psi_reference: float
    total: np.ndarray
    anchor: str = 'q'

    def uncentered(self) -> np.ndarray:
        """D_Y + sum D_M + sum D_A + plug-in, the one-step summand."""
        return self.total + self.psi_reference


def _resolve_cache(source) -> NuisanceCache:
    if isinstance(source, NuisanceCache):
        return source
    if isinstance(source, FittedNuisanceSet):
        if source.cache is None:
            raise CacheMissingError("nuisance set has no evaluation cache; run evaluate_nuisance first")
        return source.cache
    raise TypeError(f"expected a FittedNuisanceSet or NuisanceCache, got {type(source).__name__}")


def compute_eif(source: Union[FittedNuisanceSet, NuisanceCache], data: LongitudinalDataset,
                psi_reference: float, anchor: str = 'q', tolerance: float = 1e-10) -> EifBreakdown:
    """
    Assemble D* = D_Y + sum_t D_{M_t} + sum_t D_{A_t} + plug-in - psi.

    Args:
        source: Evaluated nuisance set or a cache built from targeted fits
        data: Dataset the cache is aligned with
        psi_reference: Value subtracted to center the function
        anchor: 'q' uses Q_{M_0} as plug-in, 'r' uses R_{A_0}

    Raises:
        CacheMissingError: no evaluation cache
        EifConsistencyError: the clever-covariate form of D_{A_t} disagrees
    """
    if anchor not in ANCHORS:
        raise ValueError(f"anchor must be one of {ANCHORS}")
    cache = _resolve_cache(source)
    if len(cache.qy_observed) != data.n_rows:
        raise CacheMissingError("cache is not aligned with the dataset rows")
    T = cache.horizon
    d_y = cache.h[T] * (data.outcome - cache.qy_observed)
    d_m = [cache.w[t] * (cache.q_m[t + 1] - cache.q_m[t]) for t in range(T + 1)]
    d_a = [cache.h_prev(t) * (cache.r_m[t] - cache.r_a[t]) for t in range(T + 1)]
    d_a_clever = [cache.h_prev(t) * cache.kappa_diff[t] * (data.treatment(t) - cache.pi_observed[t])
                  for t in range(T + 1)]
    for t in range(T + 1):
        scale = max(1.0, float(np.max(np.abs(d_a[t]))))
        gap = float(np.max(np.abs(d_a[t] - d_a_clever[t])))
        if gap > tolerance * scale:
            raise EifConsistencyError(f"D_A{t}: clever-covariate form differs by {gap:.3g}")
    plug_in = cache.q_m[0] if anchor == 'q' else cache.r_a[0]
    total = d_y.copy()
    for part in d_m:
        total = total + part
    for part in d_a:
        total = total + part
    total = total + plug_in - psi_reference
    return EifBreakdown(d_y=d_y, d_m=d_m, d_a=d_a, d_a_clever=d_a_clever, plug_in=plug_in,
                        psi_reference=float(psi_reference), total=total, anchor=anchor)


@dataclass(frozen=True)
class WaldInterval:
    se: float
    lo: float
    hi: float
    diagnostics: Tuple[str, ...] = ()


def wald_interval(eif: Union[EifBreakdown, np.ndarray], psi_hat: float, alpha: float = 0.05,
                  weights: Optional[np.ndarray] = None) -> WaldInterval:
    """
    psi_hat +/- z_{1-alpha/2} * sigma / sqrt(n), sigma^2 the EIF variance (n-1 divisor).

    Raises:
        ValueError: fewer than 2 rows or alpha outside (0, 1)
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    values = eif.total if isinstance(eif, EifBreakdown) else np.asarray(eif, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("a Wald interval needs at least 2 rows")
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    variance = weighted_variance(values, weights)
    se = float(np.sqrt(max(variance, 0.0) / n))
    diagnostics = ()
    if se == 0.0:
        message = "influence function has zero variance; interval collapses to a point"
        logging.warning(message)
        diagnostics = (message,)
    z = float(norm.ppf(1.0 - alpha / 2.0))
    return WaldInterval(se=se, lo=psi_hat - z * se, hi=psi_hat + z * se, diagnostics=diagnostics)


def eif_mean(eif: EifBreakdown, weights: Optional[np.ndarray] = None) -> float:
    """(Weighted) mean of the centered influence function."""
    weights = np.ones(len(eif.total)) if weights is None else weights
    return weighted_mean(eif.total, weights)
