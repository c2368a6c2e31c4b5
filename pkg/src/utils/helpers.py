"""
Utility functions shared by the front-door estimation modules
"""
import itertools
import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from src.config import Config

_MASK64 = (1 << 64) - 1


def clamp_probability(p: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
    """
    Clamp probabilities away from 0 and 1.

    Args:
        p: Probabilities
        eps: Distance kept from the boundary (defaults to Config.PROB_CLAMP)

    Returns:
        Clamped copy of p
    """
    if eps is None:
        eps = Config.PROB_CLAMP
    return np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)


def safe_logit(p: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
    """logit of clamped probabilities."""
    return logit(clamp_probability(p, eps))


def safe_expit(eta: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
    """expit followed by the probability clamp."""
    return clamp_probability(expit(eta), eps)


def splitmix64(value: int) -> int:
    """One splitmix64 output step for a 64-bit state."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *keys: int) -> int:
    """
    Derive a 64-bit seed from a base seed and integer keys.

    Derived seeds depend only on (base_seed, keys), so replications can be
    run in any order or split across workers.
    """
    state = splitmix64(int(base_seed) & _MASK64)
    for key in keys:
        state = splitmix64(state ^ (int(key) & _MASK64))
    return state


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    """Weighted mean; weights need not be normalized."""
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * np.asarray(values, dtype=float)) / np.sum(weights))


def weighted_variance(values: np.ndarray, weights: np.ndarray) -> float:
    """
    Weighted variance with the n-1 divisor on the row count.

    Reduces to the ordinary sample variance when all weights are equal.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("variance needs at least 2 rows")
    share = np.asarray(weights, dtype=float) / np.sum(weights)
    center = float(np.sum(share * values))
    return float(np.sum(share * (values - center) ** 2) * n / (n - 1))


def binary_histories(length: int) -> Iterator[Tuple[int, ...]]:
    """All 0/1 tuples of the given length, in lexicographic order."""
    return itertools.product((0, 1), repeat=length)


def treatment_overrides(history: Sequence[int]) -> Dict[str, int]:
    """Column overrides setting A0..A{k-1} to a treatment history."""
    return {f'A{k}': int(a) for k, a in enumerate(history)}


def mediator_overrides(history: Sequence[int]) -> Dict[str, int]:
    """Column overrides setting M0..M{k-1} to a (binary, single-component) mediator history."""
    return {f'M{k}': int(m) for k, m in enumerate(history)}


def select_by_history(table: Dict[Tuple[int, ...], np.ndarray],
                      observed: np.ndarray) -> np.ndarray:
    """
    Pick, row by row, the table entry keyed by that row's observed history.

    Args:
        table: history tuple -> per-row values
        observed: n x k matrix of observed 0/1 histories (k may be 0)

    Returns:
        Per-row values
    """
    n = observed.shape[0]
    if observed.shape[1] == 0:
        return np.asarray(table[()], dtype=float).copy()
    result = np.zeros(n)
    for key, values in table.items():
        mask = np.all(observed == np.asarray(key), axis=1)
        result[mask] = np.asarray(values, dtype=float)[mask]
    return result


def parse_binary_vector(text: str) -> Tuple[int, ...]:
    """
    Parse a comma separated 0/1 vector such as "1,0,1".

    Raises:
        ValueError: for entries other than 0 or 1
    """
    parts = [p.strip() for p in str(text).split(',') if p.strip() != '']
    if not parts:
        raise ValueError("empty regime")
    values = []
    for part in parts:
        if part not in ('0', '1'):
            raise ValueError(f"regime entries must be 0 or 1, got '{part}'")
        values.append(int(part))
    return tuple(values)


def format_float(value: Optional[float]) -> str:
    """Stable short representation used in human-readable summaries."""
    if value is None or not np.isfinite(value):
        return 'nan'
    return f"{value:.6g}"


def log_diagnostics(context: str, diagnostics: List[str]):
    """
    Log collected diagnostics at WARNING level.

    Args:
        context: Component that produced them
        diagnostics: Messages to log
    """
    for message in diagnostics:
        logging.warning(f"{context}: {message}")
