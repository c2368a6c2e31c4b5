"""
Fitting the nuisance components and evaluating them at arbitrary histories.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.data.dataset import LongitudinalDataset, RegimeSpec, validate_regime
from src.formula.design import UnboundVariableError, build_design_matrix
from src.formula.parser import Formula
from src.glm.models import FittedGlm, fit_logistic, linear_predictor
from src.nuisance.spec import NuisanceSpec
from src.utils.helpers import clamp_probability, log_diagnostics, mediator_overrides, treatment_overrides

History = Optional[Tuple[int, ...]]


class NuisanceFitError(ValueError):
    """A nuisance component could not be fitted; names the component."""

    def __init__(self, component: str, message: str):
        self.component = component
        super().__init__(f"{component}: {message}")


@dataclass(frozen=True)
class FittedNuisanceSet:
    """
    Fitted pi_t, g_t or gamma classifiers and Q_Y for one regime.

    `cache` holds the evaluated weight processes and sequential regressions
    on a dataset once evaluate_nuisance has run.
    """
    spec: NuisanceSpec
    regime: RegimeSpec
    pi: Tuple[FittedGlm, ...]
    qy: FittedGlm
    g: Optional[Tuple[FittedGlm, ...]] = None
    gamma1: Optional[Tuple[Tuple[FittedGlm, ...], ...]] = None
    gamma2: Optional[Tuple[Tuple[FittedGlm, ...], ...]] = None
    diagnostics: Tuple[str, ...] = ()
    cache: Optional[object] = None

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    def with_cache(self, cache) -> 'FittedNuisanceSet':
        return replace(self, cache=cache)

    def component_counts(self) -> Dict[str, int]:
        counts = {'pi': len(self.pi), 'qy': 1}
        if self.g is not None:
            counts['g'] = len(self.g)
        if self.gamma1 is not None:
            counts['gamma1'] = sum(len(row) for row in self.gamma1)
            counts['gamma2'] = sum(len(row) for row in self.gamma2)
        return counts


def _fit_component(name: str, formula: Formula, data: LongitudinalDataset, target: str,
                   diagnostics: List[str]) -> FittedGlm:
    try:
        X = build_design_matrix(formula, data)
        fit = fit_logistic(X, data.column(target), data.weights)
    except (UnboundVariableError, ValueError) as e:
        raise NuisanceFitError(name, str(e)) from e
    for message in fit.diagnostics:
        diagnostics.append(f"{name}: {message}")
    return fit


def fit_nuisance_set(data: LongitudinalDataset, spec: NuisanceSpec, regime) -> FittedNuisanceSet:
    """
    Fit every logistic nuisance component the spec names.

    pi_t: A_t on (L0, A_0..A_{t-1}, M_0..M_{t-1}); g_t: M_t on (L0, A_0..A_t,
    M_0..M_{t-1}); Q_Y: Y on the full history; gamma1[t][j]: A_j on
    (L0, A_0..A_{j-1}, M_0..M_t); gamma2[t][j]: A_j on (L0, A_0..A_{j-1}, M_0..M_{t-1}).

    Raises:
        NuisanceFitError: naming the offending component
    """
    regime = validate_regime(data, regime)
    spec.check_horizon(data.horizon)
    diagnostics: List[str] = []
    pi = tuple(_fit_component(f"pi_{t}", spec.pi[t], data, f'A{t}', diagnostics)
               for t in range(spec.horizon + 1))
    qy = _fit_component("Q_Y", spec.qy, data, 'Y', diagnostics)
    g = None
    if spec.g is not None:
        if not data.has_binary_mediators():
            if spec.h_mode == 'direct':
                raise NuisanceFitError("g", "direct mediator densities need single binary mediators")
        else:
            g = tuple(_fit_component(f"g_{t}", spec.g[t], data, f'M{t}', diagnostics)
                      for t in range(spec.horizon + 1))
    gamma1 = gamma2 = None
    if spec.has_gamma():
        gamma1 = tuple(tuple(_fit_component(f"gamma1_{j},{t}", spec.gamma1[t][j], data, f'A{j}', diagnostics)
                             for j in range(t + 1)) for t in range(spec.horizon + 1))
        gamma2 = tuple(tuple(_fit_component(f"gamma2_{j},{t}", spec.gamma2[t][j], data, f'A{j}', diagnostics)
                             for j in range(t + 1)) for t in range(spec.horizon + 1))
    log_diagnostics("nuisance", diagnostics)
    logging.info(f"Fitted nuisance set for regime {regime.key} on {data.n_rows} rows")
    return FittedNuisanceSet(
        spec=spec, regime=regime, pi=pi, qy=qy, g=g,
        gamma1=gamma1, gamma2=gamma2, diagnostics=tuple(diagnostics),
    )


class NuisancePredictor:
    """
    Memoized evaluation of fitted components on a dataset.

    Histories passed as None mean "the observed values"; tuples override the
    corresponding A or M columns for every row.
    """

    def __init__(self, nuisance: FittedNuisanceSet, data: LongitudinalDataset):
        self.nuisance = nuisance
        self.data = data
        self._links: Dict[tuple, np.ndarray] = {}

    def _link(self, key: tuple, formula: Formula, fit: FittedGlm,
              treatments: History, mediators: History) -> np.ndarray:
        if key not in self._links:
            overrides = {}
            if treatments is not None:
                overrides.update(treatment_overrides(treatments))
            if mediators is not None:
                overrides.update(mediator_overrides(mediators))
            X = build_design_matrix(formula, self.data, overrides=overrides)
            self._links[key] = linear_predictor(fit, X)
        return self._links[key]

    @staticmethod
    def _prob(link: np.ndarray) -> np.ndarray:
        return clamp_probability(expit(link))

    # Q_Y(L0, a', m)
    def qy_link(self, treatments: History = None, mediators: History = None) -> np.ndarray:
        return self._link(('qy', treatments, mediators), self.nuisance.spec.qy, self.nuisance.qy,
                          treatments, mediators)

    def qy(self, treatments: History = None, mediators: History = None) -> np.ndarray:
        return self._prob(self.qy_link(treatments, mediators))

    # pi_t(1 | L0, a'_{t-1}, m_{t-1})
    def pi_link(self, t: int, history: History = None, mediators: History = None) -> np.ndarray:
        return self._link(('pi', t, history, mediators), self.nuisance.spec.pi[t], self.nuisance.pi[t],
                          history, mediators)

    def pi_one(self, t: int, history: History = None, mediators: History = None) -> np.ndarray:
        return self._prob(self.pi_link(t, history, mediators))

    # g_t(1 | L0, a_t, m_{t-1})
    def g_link(self, t: int, treatments: History = None, mediators: History = None) -> np.ndarray:
        if self.nuisance.g is None:
            raise NuisanceFitError(f"g_{t}", "no mediator density fits in this nuisance set")
        return self._link(('g', t, treatments, mediators), self.nuisance.spec.g[t], self.nuisance.g[t],
                          treatments, mediators)

    def g_one(self, t: int, treatments: History = None, mediators: History = None) -> np.ndarray:
        return self._prob(self.g_link(t, treatments, mediators))

    def gamma_one(self, kind: int, t: int, j: int, history: History = None) -> np.ndarray:
        """gamma{kind}_{j,t}(1 | L0, a_0..a_{j-1}, observed mediators)."""
        fits = self.nuisance.gamma1 if kind == 1 else self.nuisance.gamma2
        formulas = self.nuisance.spec.gamma1 if kind == 1 else self.nuisance.spec.gamma2
        if fits is None:
            raise NuisanceFitError(f"gamma{kind}_{j},{t}", "no gamma classifiers in this nuisance set")
        return self._prob(self._link(('gamma', kind, t, j, history), formulas[t][j], fits[t][j], history, None))


def bernoulli_mass(p_one: np.ndarray, value) -> np.ndarray:
    """P(X = value) from P(X = 1); value may be a scalar or per-row array."""
    value = np.asarray(value, dtype=float)
    return value * p_one + (1.0 - value) * (1.0 - p_one)
