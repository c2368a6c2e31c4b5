"""
Iterative TMLE that also fluctuates the mediator densities (binary M_t).

All fitted components are held as logit grids over every combination of
treatment and mediator history, keyed by the concatenated tuple
(a_0..a_j, m_0..m_k). Fluctuations shift whole grids, so the recursions can
be re-evaluated at any history after each update.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.data.dataset import LongitudinalDataset
from src.estimators.ipw import prepare_nuisance
from src.estimators.result import EstimateResult
from src.estimators.tmle import FluctuationLog, _check_outcome
from src.inference.eif import compute_eif, eif_mean, wald_interval
from src.nuisance.models import FittedNuisanceSet, NuisanceFitError, NuisancePredictor, bernoulli_mass
from src.nuisance.sequential import NuisanceCache
from src.nuisance.spec import NuisanceSpec
from src.nuisance.weights import truncate_h, truncate_w
from src.utils.helpers import binary_histories, safe_expit, select_by_history, weighted_mean

Grid = Dict[Tuple[int, ...], np.ndarray]

DEFAULT_MAX_ITERS = 20
DEFAULT_TOL = 1e-6


class MediatorGrids:
    """Logit grids of Q_Y, pi_t and g_t for one regime on one dataset."""

    def __init__(self, predictor: NuisancePredictor):
        self.data = predictor.data
        self.regime = predictor.nuisance.regime
        self.truncate = predictor.nuisance.spec.truncate
        T = self.T = predictor.nuisance.horizon
        self.qy: Grid = {a + m: predictor.qy_link(a, m)
                         for a in binary_histories(T + 1) for m in binary_histories(T + 1)}
        self.pi: List[Grid] = [{a + m: predictor.pi_link(t, a, m)
                                for a in binary_histories(t) for m in binary_histories(t)}
                               for t in range(T + 1)]
        self.g: List[Grid] = [{a + m: predictor.g_link(t, a, m)
                               for a in binary_histories(t + 1) for m in binary_histories(t)}
                              for t in range(T + 1)]

    def observed(self, grid: Grid, t_a: int, t_m: int) -> np.ndarray:
        """Select grid entries at each row's observed A_0..A_{t_a} and M_0..M_{t_m}."""
        keys = np.hstack([self.data.treatment_history(t_a), self.data.mediator_history(t_m)])
        return select_by_history(grid, keys)

    def at_regime(self, grid: Grid, t_a: int, t_m: int) -> np.ndarray:
        """Select entries at the regime's a_0..a_{t_a} and each row's observed M_0..M_{t_m}."""
        prefix = self.regime.prefix(t_a)
        sub = {m: grid[prefix + m] for m in binary_histories(t_m + 1)}
        return select_by_history(sub, self.data.mediator_history(t_m))

    def g_mass(self, t: int, treatments: Tuple[int, ...], mediators: Tuple[int, ...], m_t: int) -> np.ndarray:
        return bernoulli_mass(safe_expit(self.g[t][treatments + mediators]), m_t)

    def pi_mass(self, t: int, history: Tuple[int, ...], mediators: Tuple[int, ...], a_t: int) -> np.ndarray:
        return bernoulli_mass(safe_expit(self.pi[t][history + mediators]), a_t)

    def shift_qy(self, eps: float):
        self.qy = {key: link + eps for key, link in self.qy.items()}

    def shift_pi(self, t: int, eps: float, diff: Grid):
        self.pi[t] = {key: link + eps * diff[key] for key, link in self.pi[t].items()}

    def shift_g(self, t: int, eps: float, diff: Grid):
        # the clever covariate depends on the mediator history only
        self.g[t] = {key: link + eps * diff[key[t + 1:]] for key, link in self.g[t].items()}

    def weights_h(self, diagnostics: List[str]) -> List[np.ndarray]:
        data = self.data
        h = np.ones(data.n_rows)
        out = []
        for k in range(self.T + 1):
            m_k = data.mediator(k)
            numerator = bernoulli_mass(safe_expit(self.at_regime(self.g[k], k, k - 1)), m_k)
            denominator = bernoulli_mass(safe_expit(self.observed(self.g[k], k, k - 1)), m_k)
            h = h * np.where(data.regime_match(self.regime, k), 1.0, numerator / denominator)
            out.append(truncate_h(h, self.truncate, k, diagnostics))
        return out

    def weights_w(self, diagnostics: List[str]) -> List[np.ndarray]:
        data = self.data
        denominator = np.ones(data.n_rows)
        out = []
        for k in range(self.T + 1):
            p_one = safe_expit(self.at_regime(self.pi[k], k - 1, k - 1))
            denominator = denominator * bernoulli_mass(p_one, self.regime.values[k])
            w = np.where(data.regime_match(self.regime, k), 1.0 / denominator, 0.0)
            out.append(truncate_w(w, self.truncate, k, diagnostics))
        return out

    def qy_probabilities(self) -> Grid:
        return {key: safe_expit(link) for key, link in self.qy.items()}

    def r_m_step(self, t: int, r_a_next: Grid) -> Grid:
        """R_{M_t}(a_0..a_t, m_0..m_{t-1}) = sum over m_t of R_{A_{t+1}} * g_t(m_t | regime)."""
        prefix = self.regime.prefix(t)
        return {a + m: sum(r_a_next[a + m + (m_t,)] * self.g_mass(t, prefix, m, m_t) for m_t in (0, 1))
                for a in binary_histories(t + 1) for m in binary_histories(t)}

    @staticmethod
    def r_m_contrast(t: int, r_m: Grid) -> Grid:
        return {a + m: r_m[a + (1,) + m] - r_m[a + (0,) + m]
                for a in binary_histories(t) for m in binary_histories(t)}

    def r_a_step(self, t: int, r_m: Grid) -> Grid:
        out = {}
        for a in binary_histories(t):
            for m in binary_histories(t):
                p_one = safe_expit(self.pi[t][a + m])
                out[a + m] = p_one * r_m[a + (1,) + m] + (1.0 - p_one) * r_m[a + (0,) + m]
        return out

    def terminal_q(self) -> Grid:
        """Q_{M_{T+1}}(m_0..m_T) = sum over a' of Q_Y(a', m) prod_t pi_t(a'_t | a'_{t-1}, m_{t-1})."""
        T = self.T
        qy = self.qy_probabilities()
        out = {}
        for m in binary_histories(T + 1):
            total = 0.0
            for a in binary_histories(T + 1):
                mass = 1.0
                for t in range(T + 1):
                    mass = mass * self.pi_mass(t, a[:t], m[:t], a[t])
                total = total + qy[a + m] * mass
            out[m] = total
        return out

    def q_m_step(self, t: int, q_next: Grid) -> Grid:
        prefix = self.regime.prefix(t)
        return {m: sum(q_next[m + (m_t,)] * self.g_mass(t, prefix, m, m_t) for m_t in (0, 1))
                for m in binary_histories(t)}

    @staticmethod
    def q_m_contrast(t: int, q_next: Grid) -> Grid:
        return {m: q_next[m + (1,)] - q_next[m + (0,)] for m in binary_histories(t)}

    def evaluate(self):
        """Both recursions at the current grids, without fluctuating."""
        T = self.T
        r_a: List[Optional[Grid]] = [None] * (T + 2)
        r_m: List[Optional[Grid]] = [None] * (T + 1)
        r_a[T + 1] = self.qy_probabilities()
        for t in range(T, -1, -1):
            r_m[t] = self.r_m_step(t, r_a[t + 1])
            r_a[t] = self.r_a_step(t, r_m[t])
        q_m: List[Optional[Grid]] = [None] * (T + 2)
        q_m[T + 1] = self.terminal_q()
        for t in range(T, -1, -1):
            q_m[t] = self.q_m_step(t, q_m[t + 1])
        return r_m, r_a, q_m


def _iterate(grids: MediatorGrids, data: LongitudinalDataset, log: FluctuationLog,
             diagnostics: List[str]) -> Grid:
    """One outer iteration; returns the updated Q_{M_0} grid."""
    T = grids.T
    weights = data.weights
    h = grids.weights_h(diagnostics)

    grids.shift_qy(log.fit('Q_Y', data.outcome, grids.observed(grids.qy, T, T), weights * h[T]))

    r_a_next = grids.qy_probabilities()
    for t in range(T, -1, -1):
        r_m = grids.r_m_step(t, r_a_next)
        diff = grids.r_m_contrast(t, r_m)
        h_prev = h[t - 1] if t > 0 else np.ones(data.n_rows)
        eps = log.fit(f'pi_{t}', data.treatment(t), grids.observed(grids.pi[t], t - 1, t - 1),
                      weights * h_prev, grids.observed(diff, t - 1, t - 1))
        grids.shift_pi(t, eps, diff)
        r_a_next = grids.r_a_step(t, r_m)

    w = grids.weights_w(diagnostics)
    q_next = grids.terminal_q()
    for t in range(T, -1, -1):
        diff = grids.q_m_contrast(t, q_next)
        clever = select_by_history(diff, data.mediator_history(t - 1))
        eps = log.fit(f'g_{t}', data.mediator(t), grids.observed(grids.g[t], t, t - 1),
                      weights * w[t], clever)
        grids.shift_g(t, eps, diff)
        q_next = grids.q_m_step(t, q_next)
    return q_next


def _cache(grids: MediatorGrids, data: LongitudinalDataset, diagnostics: List[str]) -> NuisanceCache:
    T = grids.T
    r_m, r_a, q_m = grids.evaluate()
    return NuisanceCache(
        h=grids.weights_h(diagnostics),
        w=grids.weights_w(diagnostics),
        q_m=[select_by_history(q_m[t], data.mediator_history(t - 1)) for t in range(T + 2)],
        r_m=[grids.observed(r_m[t], t, t - 1) for t in range(T + 1)],
        r_a=[grids.observed(r_a[t], t - 1, t - 1) for t in range(T + 1)],
        kappa_diff=[grids.observed(grids.r_m_contrast(t, r_m[t]), t - 1, t - 1) for t in range(T + 1)],
        pi_observed=[safe_expit(grids.observed(grids.pi[t], t - 1, t - 1)) for t in range(T + 1)],
        qy_observed=safe_expit(grids.observed(grids.qy, T, T)),
        diagnostics=list(diagnostics),
    )


def estimate_tmle_mediator(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                           nuisance: Optional[FittedNuisanceSet] = None,
                           max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL) -> EstimateResult:
    """
    Iterate Q_Y, pi_t and g_t fluctuations until every |epsilon| < tol.

    Args:
        max_iters: Outer iterations; 0 returns the un-fluctuated plug-in
        tol: Convergence threshold on the largest epsilon of an iteration

    Raises:
        NuisanceFitError: non-binary mediators or no g formulas
    """
    if max_iters < 0:
        raise ValueError("max_iters must be non-negative")
    _check_outcome(data)
    if not data.has_binary_mediators():
        raise NuisanceFitError("g", "mediator-density targeting needs single binary mediators")
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    if nuisance.g is None:
        raise NuisanceFitError("g", "mediator-density targeting needs g formulas")
    grids = MediatorGrids(NuisancePredictor(nuisance, data))
    weights = data.weights
    diagnostics = list(nuisance.diagnostics)
    history: List[Dict[str, float]] = []
    converged = False
    log = FluctuationLog()
    for _ in range(max_iters):
        log = FluctuationLog()
        _iterate(grids, data, log, diagnostics)
        history.append(dict(log.epsilons))
        if log.max_abs() < tol:
            converged = True
            break
    if max_iters == 0:
        diagnostics.append("no targeting iterations run; un-fluctuated plug-in returned")
    elif not converged:
        message = f"mediator targeting did not converge in {max_iters} iterations (max |epsilon|={log.max_abs():.3g})"
        logging.warning(message)
        diagnostics.append(message)

    cache = _cache(grids, data, diagnostics)
    psi = weighted_mean(cache.q_m[0], weights)
    eif = compute_eif(cache, data, psi)
    wald = wald_interval(eif, psi, alpha, weights)
    diagnostics = diagnostics + log.diagnostics + list(wald.diagnostics)
    logging.info(f"Mediator TMLE for regime {nuisance.regime.key}: psi={psi:.6g} after {len(history)} iterations")
    return EstimateResult(
        estimator='tmle_med',
        psi=psi,
        regime=nuisance.regime.key,
        n=data.n_rows,
        alpha=alpha,
        se=wald.se,
        ci=(wald.lo, wald.hi),
        eif_values=eif.total,
        eif_mean=eif_mean(eif, weights),
        diagnostics=diagnostics,
        details={'iterations': len(history), 'converged': converged, 'epsilon': history},
    )
