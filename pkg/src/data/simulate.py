"""
Monte Carlo draws from a DiscreteDgp
"""
import logging
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from src.config import Config
from src.data.dataset import LongitudinalDataset, RegimeSpec
from src.data.dgp import DgpError, DiscreteDgp, paper_dgp
from src.utils.helpers import clamp_probability


def make_generator(seed: int) -> np.random.Generator:
    """The library's single generator family: PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(int(seed) & ((1 << 64) - 1)))


def _coerce_regime(dgp: DiscreteDgp, regime: Union[RegimeSpec, Sequence[int], None]) -> Optional[RegimeSpec]:
    if regime is None:
        return None
    if not isinstance(regime, RegimeSpec):
        regime = RegimeSpec(tuple(regime))
    if regime.horizon != dgp.horizon:
        raise DgpError(f"regime {regime.key} does not match DGP horizon T={dgp.horizon}")
    return regime


def draw_variables(dgp: DiscreteDgp, n: int, rng: np.random.Generator,
                   intervention: Optional[Mapping[str, int]] = None) -> Dict[str, np.ndarray]:
    """
    Draw every variable (latent ones included) along the topological order.

    Args:
        dgp: Structural model
        n: Number of draws
        rng: Generator consumed in variable order
        intervention: Variables clamped to a constant instead of drawn

    Returns:
        name -> array of length n
    """
    intervention = intervention or {}
    values: Dict[str, np.ndarray] = {}
    for var in dgp.variables:
        if var.name in intervention:
            values[var.name] = np.full(n, int(intervention[var.name]), dtype=np.int64)
            continue
        eta = np.broadcast_to(var.linear_predictor(values), (n,))
        if var.distribution == 'normal':
            values[var.name] = eta + rng.standard_normal(n)
        else:
            p = clamp_probability(expit(eta))
            values[var.name] = (rng.random(n) < p).astype(np.int64)
    return values


def simulate_dgp(dgp: DiscreteDgp, n: int, seed: int,
                 regime: Union[RegimeSpec, Sequence[int], None] = None) -> LongitudinalDataset:
    """
    Draw n iid rows of the observed data; latent variables are never emitted.

    Identical (dgp, n, seed, regime) give identical datasets.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    regime = _coerce_regime(dgp, regime)
    intervention = {f'A{t}': a for t, a in enumerate(regime.values)} if regime else None
    values = draw_variables(dgp, n, make_generator(seed), intervention)
    frame = pd.DataFrame({name: values[name] for name in dgp.observed_order()})
    return LongitudinalDataset.from_frame(frame)


def simulate_paper_dgp(n: int, seed: int, override: Optional[DiscreteDgp] = None) -> LongitudinalDataset:
    """Sample the simulation-study DGP (T=1) or an override."""
    return simulate_dgp(override if override is not None else paper_dgp(), n, seed)


def simulate_ground_truth(n: int, seed: int, regime: Union[RegimeSpec, Sequence[int]],
                          dgp: Optional[DiscreteDgp] = None, chunk: Optional[int] = None) -> float:
    """
    Monte Carlo approximation of E[Y(a)] from n draws with the treatments clamped.

    Draws are produced in chunks from one generator, so memory stays bounded
    for n = 10^7.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    dgp = dgp if dgp is not None else paper_dgp()
    regime = _coerce_regime(dgp, regime)
    chunk = chunk or Config.SIMULATION_CHUNK
    intervention = {f'A{t}': a for t, a in enumerate(regime.values)}
    rng = make_generator(seed)
    total = 0.0
    remaining = n
    while remaining > 0:
        size = min(chunk, remaining)
        values = draw_variables(dgp, size, rng, intervention)
        total += float(np.sum(values['Y']))
        remaining -= size
    truth = total / n
    logging.info(f"Ground truth for regime {regime.key} from {n} draws: {truth:.6f}")
    return truth
