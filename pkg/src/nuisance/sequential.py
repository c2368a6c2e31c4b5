"""
Sequential regressions for the two nested-expectation representations,
and the per-row evaluation cache consumed by the efficient estimators.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.config import Config
from src.data.dataset import LongitudinalDataset
from src.formula.design import UnboundVariableError, build_design_matrix, formula_mentions
from src.formula.parser import Formula
from src.glm.models import BINOMIAL, FittedGlm, fit_model, linear_predictor
from src.nuisance.models import FittedNuisanceSet, NuisanceFitError, NuisancePredictor, bernoulli_mass
from src.nuisance.weights import compute_H, compute_W
from src.utils.helpers import binary_histories, clamp_probability, safe_expit, select_by_history, treatment_overrides

HistoryTable = Dict[Tuple[int, ...], np.ndarray]


@dataclass
class RegressionOutput:
    """Predictions of one sequential regression at the regime, on every row."""
    values: np.ndarray
    link: np.ndarray
    fit: FittedGlm
    stratified: bool


def regress_at_regime(name: str, formula: Formula, data: LongitudinalDataset, target: np.ndarray,
                      nuisance: FittedNuisanceSet, t: int, family: str) -> RegressionOutput:
    """
    Regress a pseudo-outcome on (L0, A_0..A_t, M_0..M_{t-1}) and evaluate at A = a.

    A formula that uses any of A_0..A_t is fitted on all rows and evaluated
    with those columns set to the regime. A formula without them describes
    the law inside the regime stratum and is fitted on rows with
    A_0..A_t = a_0..a_t only.

    Raises:
        NuisanceFitError: unbound variable or an empty regime stratum
    """
    regime = nuisance.regime
    pooled = formula_mentions(formula, [f'A{k}' for k in range(t + 1)])
    weights = data.weights
    if not pooled:
        weights = np.where(data.regime_match(regime, t), weights, 0.0)
        if not np.sum(weights) > 0:
            raise NuisanceFitError(name, f"no rows follow regime {regime.key} through t={t}")
    if family == BINOMIAL:
        target = clamp_probability(target, Config.PSEUDO_CLAMP)
    try:
        fit = fit_model(family, build_design_matrix(formula, data), target, weights)
        X_regime = build_design_matrix(formula, data, overrides=treatment_overrides(regime.prefix(t)))
    except (UnboundVariableError, ValueError) as e:
        raise NuisanceFitError(name, str(e)) from e
    link = linear_predictor(fit, X_regime)
    values = safe_expit(link) if family == BINOMIAL else link
    return RegressionOutput(values=values, link=link, fit=fit, stratified=not pooled)


def terminal_q(view, horizon: int) -> np.ndarray:
    """Q_{M_{T+1}} = sum over a' of Q_Y(L0, a', M) * prod_t pi_t(a'_t | L0, M_{t-1}, a'_{t-1})."""
    total = 0.0
    for history in binary_histories(horizon + 1):
        weight = 1.0
        for t in range(horizon + 1):
            weight = weight * bernoulli_mass(view.pi_one(t, history[:t]), history[t])
        total = total + view.qy(history) * weight
    return np.asarray(total, dtype=float)


@dataclass
class SequentialQ:
    """values[t] is Q_{M_t} on every row, t = 0..T+1."""
    values: List[np.ndarray]
    fits: List[Optional[FittedGlm]]
    diagnostics: List[str] = field(default_factory=list)

    @property
    def plug_in(self) -> np.ndarray:
        return self.values[0]


QUpdate = Callable[[int, np.ndarray, RegressionOutput], np.ndarray]


def sequential_Q(nuisance: FittedNuisanceSet, data: LongitudinalDataset, view=None,
                 family: Optional[str] = None, update: Optional[QUpdate] = None) -> SequentialQ:
    """
    Regress Q_{M_{t+1}} onto the history at t = T..0, evaluating at the regime.

    Args:
        view: Provider of qy(history) and pi_one(t, history); defaults to the
            fitted nuisance set
        family: Regression family; defaults to the spec's seq_family
        update: Hook (t, Q_{M_{t+1}}, regression) -> Q_{M_t} applied after
            each regression (targeting uses it to fluctuate)
    """
    spec = nuisance.spec
    if spec.qm is None:
        raise NuisanceFitError("Q_M", "spec has no sequential Q formulas (qm)")
    view = view or NuisancePredictor(nuisance, data)
    family = family or spec.seq_family
    T = nuisance.horizon
    values: List[Optional[np.ndarray]] = [None] * (T + 2)
    fits: List[Optional[FittedGlm]] = [None] * (T + 2)
    diagnostics: List[str] = []
    values[T + 1] = terminal_q(view, T)
    for t in range(T, -1, -1):
        out = regress_at_regime(f"Q_M{t}", spec.qm[t], data, values[t + 1], nuisance, t, family)
        diagnostics.extend(f"Q_M{t}: {m}" for m in out.fit.diagnostics)
        values[t] = update(t, values[t + 1], out) if update else out.values
        fits[t] = out.fit
    return SequentialQ(values=values, fits=fits, diagnostics=diagnostics)


@dataclass
class SequentialR:
    """
    kappa[t][a'_0..a'_t] and r_a[t][a'_0..a'_{t-1}] on every row; r_a[T+1] is Q_Y.

    The *_observed lists select each table at the row's observed treatments.
    """
    kappa: List[HistoryTable]
    r_a: List[HistoryTable]
    r_m_observed: List[np.ndarray]
    r_a_observed: List[np.ndarray]
    kappa_diff: List[np.ndarray]
    regressions: List[int]
    diagnostics: List[str] = field(default_factory=list)

    @property
    def plug_in(self) -> np.ndarray:
        return self.r_a_observed[0]


KappaHook = Callable[[int, HistoryTable], None]


def kappa_difference(kappa_t: HistoryTable, t: int) -> HistoryTable:
    """kappa_t(a'_{t-1}, 1) - kappa_t(a'_{t-1}, 0) keyed by a'_{t-1}."""
    return {h: kappa_t[h + (1,)] - kappa_t[h + (0,)] for h in binary_histories(t)}


def sequential_R(nuisance: FittedNuisanceSet, data: LongitudinalDataset, view=None,
                 family: Optional[str] = None, on_kappa: Optional[KappaHook] = None) -> SequentialR:
    """
    The kappa/R recursion: 2^(t+1) regressions at step t.

    Args:
        view: Provider of qy(history) and pi_one(t, history)
        on_kappa: Hook called with (t, kappa_t) before R_{A_t} is assembled,
            so a targeted view can update pi_t first

    Raises:
        NuisanceFitError: missing formulas or T above the configured cap
    """
    spec = nuisance.spec
    if spec.r is None:
        raise NuisanceFitError("R_M", "spec has no sequential R formulas (r)")
    T = nuisance.horizon
    if T > Config.MAX_SR_HORIZON:
        raise NuisanceFitError("R_M", f"T={T} exceeds the cap of {Config.MAX_SR_HORIZON} "
                                      f"(step t needs 2^(t+1) regressions)")
    view = view or NuisancePredictor(nuisance, data)
    family = family or spec.seq_family
    kappa: List[Optional[HistoryTable]] = [None] * (T + 1)
    r_a: List[Optional[HistoryTable]] = [None] * (T + 2)
    regressions = [0] * (T + 1)
    diagnostics: List[str] = []
    r_a[T + 1] = {h: view.qy(h) for h in binary_histories(T + 1)}
    for t in range(T, -1, -1):
        table: HistoryTable = {}
        for h in binary_histories(t + 1):
            out = regress_at_regime(f"kappa_{t}{''.join(map(str, h))}", spec.r[t], data, r_a[t + 1][h],
                                    nuisance, t, family)
            diagnostics.extend(f"kappa_{t}: {m}" for m in out.fit.diagnostics)
            table[h] = out.values
            regressions[t] += 1
        kappa[t] = table
        if on_kappa is not None:
            on_kappa(t, table)
        r_a[t] = {}
        for h in binary_histories(t):
            p1 = view.pi_one(t, h)
            r_a[t][h] = p1 * table[h + (1,)] + (1.0 - p1) * table[h + (0,)]
    r_m_observed = [select_by_history(kappa[t], data.treatment_history(t)) for t in range(T + 1)]
    r_a_observed = [select_by_history(r_a[t], data.treatment_history(t - 1)) for t in range(T + 2)]
    kappa_diff = [select_by_history(kappa_difference(kappa[t], t), data.treatment_history(t - 1))
                  for t in range(T + 1)]
    return SequentialR(kappa=kappa, r_a=r_a, r_m_observed=r_m_observed, r_a_observed=r_a_observed,
                       kappa_diff=kappa_diff, regressions=regressions, diagnostics=diagnostics)


@dataclass
class NuisanceCache:
    """
    Row-aligned evaluations needed by the influence function.

    h[t] is H_t and w[t] is W_t for t = 0..T; q_m[t] is Q_{M_t} for
    t = 0..T+1; r_m[t] / r_a[t] are R_{M_t} / R_{A_t} at the observed
    treatments; pi_observed[t] is pi_t(1 | observed history).
    """
    h: List[np.ndarray]
    w: List[np.ndarray]
    q_m: List[np.ndarray]
    r_m: List[np.ndarray]
    r_a: List[np.ndarray]
    kappa_diff: List[np.ndarray]
    pi_observed: List[np.ndarray]
    qy_observed: np.ndarray
    diagnostics: List[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.h) - 1

    def h_prev(self, t: int) -> np.ndarray:
        """H_{t-1} with H_{-1} = 1."""
        return self.h[t - 1] if t > 0 else np.ones_like(self.h[0])


def assemble_cache(h: List[np.ndarray], w: List[np.ndarray], seq_q: SequentialQ, seq_r: SequentialR,
                   view, data: LongitudinalDataset, diagnostics: Optional[List[str]] = None) -> NuisanceCache:
    T = data.horizon
    return NuisanceCache(
        h=h,
        w=w,
        q_m=list(seq_q.values),
        r_m=list(seq_r.r_m_observed),
        r_a=list(seq_r.r_a_observed[:T + 1]),
        kappa_diff=list(seq_r.kappa_diff),
        pi_observed=[view.pi_one(t) for t in range(T + 1)],
        qy_observed=view.qy(),
        diagnostics=list(diagnostics or []) + seq_q.diagnostics + seq_r.diagnostics,
    )


def evaluate_nuisance(nuisance: FittedNuisanceSet, data: LongitudinalDataset,
                      mode: Optional[str] = None) -> FittedNuisanceSet:
    """Evaluate H, W and both recursions on `data` and attach them as the cache."""
    predictor = NuisancePredictor(nuisance, data)
    diagnostics: List[str] = []
    T = nuisance.horizon
    h = [compute_H(nuisance, data, t, mode, predictor, diagnostics) for t in range(T + 1)]
    w = [compute_W(nuisance, data, t, predictor, diagnostics) for t in range(T + 1)]
    seq_q = sequential_Q(nuisance, data, predictor)
    seq_r = sequential_R(nuisance, data, predictor)
    cache = assemble_cache(h, w, seq_q, seq_r, predictor, data, diagnostics)
    logging.info(f"Evaluated nuisance cache for regime {nuisance.regime.key}")
    return nuisance.with_cache(cache)
