"""
Targeted minimum loss estimation, single pass over the outcome regression,
the propensities and the sequential Q regressions.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.data.dataset import LongitudinalDataset
from src.estimators.ipw import prepare_nuisance
from src.estimators.result import EstimateResult
from src.glm.models import BINOMIAL, fit_fluctuation
from src.inference.eif import compute_eif, eif_mean, wald_interval
from src.nuisance.models import FittedNuisanceSet, NuisancePredictor
from src.nuisance.sequential import (HistoryTable, RegressionOutput, assemble_cache, kappa_difference,
                                     sequential_Q, sequential_R)
from src.nuisance.spec import NuisanceSpec
from src.nuisance.weights import compute_H, compute_W
from src.utils.helpers import log_diagnostics, safe_expit, select_by_history, weighted_mean


class TargetedView:
    """
    Fitted Q_Y and pi_t with their fluctuations applied.

    pi_t is updated as logit pi*_t = logit pi_t + eps_t * diff_t(history),
    where diff_t is the kappa* contrast for that treatment history.
    """

    def __init__(self, predictor: NuisancePredictor):
        self.predictor = predictor
        self.data = predictor.data
        self.eps_y = 0.0
        self._pi_updates: Dict[int, Tuple[float, HistoryTable]] = {}

    def qy_link(self, treatments=None, mediators=None) -> np.ndarray:
        return self.predictor.qy_link(treatments, mediators) + self.eps_y

    def qy(self, treatments=None, mediators=None) -> np.ndarray:
        return safe_expit(self.qy_link(treatments, mediators))

    def update_pi(self, t: int, eps: float, diff: HistoryTable):
        self._pi_updates[t] = (eps, diff)

    def pi_link(self, t: int, history=None, mediators=None) -> np.ndarray:
        link = self.predictor.pi_link(t, history, mediators)
        if t not in self._pi_updates:
            return link
        if mediators is not None:
            raise ValueError("targeted propensities are only defined at the observed mediators")
        eps, diff = self._pi_updates[t]
        if history is None:
            clever = select_by_history(diff, self.data.treatment_history(t - 1))
        else:
            clever = diff[tuple(history)]
        return link + eps * clever

    def pi_one(self, t: int, history=None, mediators=None) -> np.ndarray:
        return safe_expit(self.pi_link(t, history, mediators))


class FluctuationLog:
    """Collects epsilon estimates and the diagnostics they raise."""

    def __init__(self):
        self.epsilons: Dict[str, float] = {}
        self.diagnostics: List[str] = []

    def fit(self, name: str, y: np.ndarray, offset: np.ndarray, weights: np.ndarray,
            clever: Optional[np.ndarray] = None) -> float:
        if not np.any(weights > 0):
            message = f"positivity: {name} fluctuation has no weight; skipped with epsilon=0"
            logging.warning(message)
            self.diagnostics.append(message)
            eps = 0.0
        else:
            eps = fit_fluctuation(y, offset, weights, clever)
        self.epsilons[name] = eps
        self.diagnostics.append(f"epsilon_{name}={eps:.6g}")
        return eps

    def max_abs(self) -> float:
        return max((abs(e) for e in self.epsilons.values()), default=0.0)


def _check_outcome(data: LongitudinalDataset):
    y = data.outcome
    if np.any((y < 0) | (y > 1)):
        raise ValueError("targeting needs an outcome bounded in [0, 1]")


def estimate_tmle(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                  nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """
    Single-pass TMLE.

    Steps:
        1. H_t from the initial fits
        2. Q_Y fluctuated intercept-only with weights H_T
        3. for t = T..0: kappa* regressions, pi_t fluctuated with the kappa*
           contrast and weights H_{t-1}, R*_{A_t} assembled with pi*
        4. Q*_{M_{T+1}} from Q*_Y and pi*
        5. for t = T..0: logistic sequential regression, fluctuated
           intercept-only with weights W*_t
        6. psi = mean Q*_{M_0}
    """
    _check_outcome(data)
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    predictor = NuisancePredictor(nuisance, data)
    view = TargetedView(predictor)
    T = nuisance.horizon
    weights = data.weights
    diagnostics = list(nuisance.diagnostics)
    log = FluctuationLog()

    h = [compute_H(nuisance, data, t, None, predictor, diagnostics) for t in range(T + 1)]

    view.eps_y = log.fit('Q_Y', data.outcome, predictor.qy_link(), weights * h[T])

    def target_pi(t: int, kappa_t: HistoryTable):
        diff = kappa_difference(kappa_t, t)
        clever = select_by_history(diff, data.treatment_history(t - 1))
        h_prev = h[t - 1] if t > 0 else np.ones(data.n_rows)
        eps = log.fit(f'pi_{t}', data.treatment(t), predictor.pi_link(t), weights * h_prev, clever)
        view.update_pi(t, eps, diff)

    seq_r = sequential_R(nuisance, data, view, on_kappa=target_pi)

    w_star = [compute_W(nuisance, data, t, view, diagnostics) for t in range(T + 1)]
    if spec.seq_family != BINOMIAL:
        diagnostics.append("sequential Q regressions refit as logistic for targeting")

    def target_q(t: int, q_next: np.ndarray, out: RegressionOutput) -> np.ndarray:
        eps = log.fit(f'Q_M{t}', q_next, out.link, weights * w_star[t])
        return safe_expit(out.link + eps)

    seq_q = sequential_Q(nuisance, data, view, family=BINOMIAL, update=target_q)
    psi = weighted_mean(seq_q.values[0], weights)

    cache = assemble_cache(h, w_star, seq_q, seq_r, view, data, diagnostics)
    eif = compute_eif(cache, data, psi)
    wald = wald_interval(eif, psi, alpha, weights)
    diagnostics = list(cache.diagnostics) + log.diagnostics + list(wald.diagnostics)
    log_diagnostics('tmle', [m for m in diagnostics if not m.startswith('epsilon_')])
    logging.info(f"TMLE for regime {nuisance.regime.key}: psi={psi:.6g}, max |epsilon|={log.max_abs():.3g}")
    return EstimateResult(
        estimator='tmle',
        psi=psi,
        regime=nuisance.regime.key,
        n=data.n_rows,
        alpha=alpha,
        se=wald.se,
        ci=(wald.lo, wald.hi),
        eif_values=eif.total,
        eif_mean=eif_mean(eif, weights),
        diagnostics=diagnostics,
        details={'epsilon': dict(log.epsilons)},
    )
