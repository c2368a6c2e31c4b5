"""
Exact enumeration oracle for all-binary DGPs.

The joint law is tabulated over every configuration; identification checks
then run on the observed-law view with latent variables summed out.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from src.config import Config
from src.data.dataset import LongitudinalDataset, RegimeSpec, WEIGHT_COLUMN
from src.data.dgp import DiscreteDgp
from src.utils.helpers import binary_histories


class EnumerationError(ValueError):
    """The DGP cannot be enumerated exactly."""


@dataclass(frozen=True)
class ExactJoint:
    """
    Tabulated law: one row of `configs` per configuration with its probability.

    `names` gives the column meaning of `configs`; `latent` lists the names
    that are not observed.
    """
    dgp: DiscreteDgp
    names: Tuple[str, ...]
    configs: np.ndarray
    probabilities: np.ndarray
    latent: Tuple[str, ...] = ()

    def __post_init__(self):
        total = float(np.sum(self.probabilities))
        if np.any(self.probabilities < 0) or abs(total - 1.0) > 1e-12:
            raise EnumerationError(f"probabilities do not form a distribution (sum={total!r})")

    @property
    def size(self) -> int:
        return self.configs.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.configs[:, self.names.index(name)]

    def observed(self) -> 'ExactJoint':
        """Marginal law of the observed variables in canonical column order."""
        order = self.dgp.observed_order()
        idx = [self.names.index(name) for name in order]
        sub = self.configs[:, idx]
        codes = sub @ (1 << np.arange(len(order))[::-1])
        probs = np.bincount(codes, weights=self.probabilities, minlength=1 << len(order))
        configs = np.array(list(itertools.product((0, 1), repeat=len(order))), dtype=np.int64)
        return ExactJoint(self.dgp, order, configs, probs, latent=())

    def marginal(self, assignment: Mapping[str, int]) -> float:
        """P(all named variables take the given values)."""
        mask = np.ones(self.size, dtype=bool)
        for name, value in assignment.items():
            mask &= self.column(name) == value
        return float(np.sum(self.probabilities[mask]))

    def conditional(self, target: Mapping[str, int], given: Mapping[str, int]) -> float:
        """P(target | given); 0 when the conditioning event has probability 0."""
        denom = self.marginal(given)
        if denom <= 0:
            return 0.0
        return self.marginal({**given, **target}) / denom


def enumerate_joint(dgp: DiscreteDgp, cap: Optional[int] = None,
                    intervention: Optional[Mapping[str, int]] = None) -> ExactJoint:
    """
    Tabulate the joint law of an all-binary DGP.

    Args:
        dgp: Structural model whose variables are all Bernoulli
        cap: Largest admissible number of configurations (Config.STATE_SPACE_CAP)
        intervention: Variables clamped to fixed values (their equations ignored)

    Raises:
        EnumerationError: non-binary variable or state space above the cap
    """
    cap = cap or Config.STATE_SPACE_CAP
    continuous = [v.name for v in dgp.variables if v.distribution != 'bernoulli']
    if continuous:
        raise EnumerationError(f"cannot enumerate non-binary variables: {', '.join(continuous)}")
    k = len(dgp.variables)
    if 2 ** k > cap:
        raise EnumerationError(f"state space 2^{k} exceeds the cap of {cap} configurations")
    intervention = intervention or {}
    names = dgp.names
    configs = np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int64)
    values = {name: configs[:, i] for i, name in enumerate(names)}
    probs = np.ones(configs.shape[0])
    for var in dgp.variables:
        x = values[var.name]
        if var.name in intervention:
            probs = probs * (x == int(intervention[var.name]))
            continue
        p = expit(np.broadcast_to(var.linear_predictor(values), x.shape))
        probs = probs * np.where(x == 1, p, 1.0 - p)
    return ExactJoint(dgp, names, configs, probs, latent=dgp.latent_names)


def _block_values(joint: ExactJoint, t: int) -> Tuple[str, ...]:
    return joint.dgp.mediator_names(t)


def _regime_coerce(joint: ExactJoint, regime) -> RegimeSpec:
    if not isinstance(regime, RegimeSpec):
        regime = RegimeSpec(tuple(regime))
    regime.check_horizon(joint.dgp.horizon)
    return regime


def exact_f_functional(joint: ExactJoint, regime: Union[RegimeSpec, Sequence[int]]) -> float:
    """
    Brute-force front-door functional from the observed law only.

    Sums over baseline values, mediator histories and treatment histories
    a' of p(l) * prod g_t(m_t | l, a_t, m_{t-1}) * Q_Y(l, a', m) * prod pi_t(a'_t | l, m_{t-1}, a'_{t-1}).
    """
    regime = _regime_coerce(joint, regime)
    law = joint.observed() if joint.latent else joint
    horizon = law.dgp.horizon
    baseline = law.dgp.baseline_names()
    blocks = [_block_values(law, t) for t in range(horizon + 1)]
    total = 0.0
    for l_values in binary_histories(len(baseline)):
        l_assign = dict(zip(baseline, l_values))
        p_l = law.marginal(l_assign)
        if p_l <= 0:
            continue
        for m_hist in itertools.product(*[list(binary_histories(len(b))) for b in blocks]):
            m_assign = [dict(zip(blocks[t], m_hist[t])) for t in range(horizon + 1)]
            weight = p_l
            history = dict(l_assign)
            for t in range(horizon + 1):
                history_a = {**history, f'A{t}': regime.values[t]}
                weight *= law.conditional(m_assign[t], history_a)
                history = {**history_a, **m_assign[t]}
            if weight == 0:
                continue
            inner = 0.0
            for a_prime in binary_histories(horizon + 1):
                prod_pi = 1.0
                cond = dict(l_assign)
                for t in range(horizon + 1):
                    prod_pi *= law.conditional({f'A{t}': a_prime[t]}, cond)
                    cond = {**cond, f'A{t}': a_prime[t], **m_assign[t]}
                inner += law.conditional({'Y': 1}, cond) * prod_pi
            total += weight * inner
    return total


def exact_g_formula(joint: ExactJoint, regime: Union[RegimeSpec, Sequence[int]]) -> float:
    """
    Plain g-computation treating (L0, M) as the only confounders.

    Agrees with the front-door functional when there is no latent confounding.
    """
    regime = _regime_coerce(joint, regime)
    law = joint.observed() if joint.latent else joint
    horizon = law.dgp.horizon
    baseline = law.dgp.baseline_names()
    blocks = [_block_values(law, t) for t in range(horizon + 1)]
    total = 0.0
    for l_values in binary_histories(len(baseline)):
        l_assign = dict(zip(baseline, l_values))
        p_l = law.marginal(l_assign)
        if p_l <= 0:
            continue
        for m_hist in itertools.product(*[list(binary_histories(len(b))) for b in blocks]):
            weight = p_l
            history = dict(l_assign)
            for t in range(horizon + 1):
                history = {**history, f'A{t}': regime.values[t]}
                m_assign = dict(zip(blocks[t], m_hist[t]))
                weight *= law.conditional(m_assign, history)
                history = {**history, **m_assign}
            if weight > 0:
                total += weight * law.conditional({'Y': 1}, history)
    return total


def exact_counterfactual_mean(dgp: DiscreteDgp, regime: Union[RegimeSpec, Sequence[int]],
                              cap: Optional[int] = None) -> float:
    """E[Y(a)] by enumerating the structural model with the treatments clamped (U kept)."""
    if not isinstance(regime, RegimeSpec):
        regime = RegimeSpec(tuple(regime))
    regime.check_horizon(dgp.horizon)
    intervention = {f'A{t}': a for t, a in enumerate(regime.values)}
    joint = enumerate_joint(dgp, cap, intervention=intervention)
    return float(np.sum(joint.probabilities * joint.column('Y')))


def exact_observed_mean(joint: ExactJoint, column: str = 'Y') -> float:
    """E[column] under the tabulated law."""
    return float(np.sum(joint.probabilities * joint.column(column)))


def exact_conditional(joint: ExactJoint, target: str, given: Mapping[str, int]) -> float:
    """E[target | given] for a binary target."""
    return joint.conditional({target: 1}, given)


def exact_conditional_rows(joint: ExactJoint, target: str, given: Sequence[str],
                           rows: pd.DataFrame, overrides: Optional[Mapping[str, int]] = None) -> np.ndarray:
    """
    Per-row E[target | given columns] for the rows of a frame.

    Columns named in `overrides` take the override value instead of the row's.
    """
    overrides = overrides or {}
    cache: Dict[Tuple[int, ...], float] = {}
    out = np.empty(len(rows))
    for i, (_, row) in enumerate(rows.iterrows()):
        key = tuple(int(overrides.get(name, row[name])) for name in given)
        if key not in cache:
            cache[key] = exact_conditional(joint, target, dict(zip(given, key)))
        out[i] = cache[key]
    return out


def population_dataset(joint: ExactJoint) -> LongitudinalDataset:
    """
    The exact population: one row per observed configuration, weighted by its probability.
    """
    law = joint.observed() if joint.latent else joint
    keep = law.probabilities > 0
    frame = pd.DataFrame(law.configs[keep], columns=list(law.names))
    frame[WEIGHT_COLUMN] = law.probabilities[keep]
    logging.info(f"Population dataset with {int(np.sum(keep))} configurations")
    return LongitudinalDataset.from_frame(frame)
