import re
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.data.dataset import LongitudinalDataset
from src.formula.parser import Formula

_ALIAS_RE = re.compile(r'^L(\d+)$')

Override = Union[int, float, np.ndarray]


class UnboundVariableError(ValueError):
    """A formula variable has no matching dataset column."""

    def __init__(self, name: str, formula: Optional[Formula] = None):
        self.name = name
        where = f" in formula '{formula.source or formula}'" if formula is not None else ''
        super().__init__(f"variable '{name}'{where} is not bound to any dataset column")


@dataclass(frozen=True)
class DesignMatrix:
    """n x p numeric design; `labels` align with the formula terms."""
    values: np.ndarray
    labels: Tuple[str, ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __len__(self) -> int:
        return self.values.shape[0]

    def rows(self, mask: np.ndarray) -> 'DesignMatrix':
        return DesignMatrix(self.values[mask], self.labels)


def resolve_column(name: str, columns, column_bindings: Optional[Mapping[str, str]] = None) -> Optional[str]:
    """
    Map a formula variable to a dataset column.

    Explicit bindings win, then exact names, then the L<k> -> L0_<k> alias.
    """
    if column_bindings and name in column_bindings:
        return column_bindings[name]
    if name in columns:
        return name
    match = _ALIAS_RE.match(name)
    if match and f'L0_{match.group(1)}' in columns:
        return f'L0_{match.group(1)}'
    return None


def build_design_matrix(formula: Formula,
                        data: Union[LongitudinalDataset, pd.DataFrame],
                        column_bindings: Optional[Mapping[str, str]] = None,
                        overrides: Optional[Mapping[str, Override]] = None) -> DesignMatrix:
    """
    Expand a formula into a design matrix.

    Args:
        formula: Parsed formula
        data: Dataset (or its frame) supplying the columns
        column_bindings: Explicit variable -> column names
        overrides: Column -> scalar or per-row values replacing the data,
            used to evaluate fits at counterfactual histories

    Returns:
        DesignMatrix with an all-ones first column and exact products
    """
    frame = data.frame if isinstance(data, LongitudinalDataset) else data
    overrides = overrides or {}
    n = len(frame)
    cache = {}

    def values_of(name: str) -> np.ndarray:
        if name not in cache:
            column = resolve_column(name, frame.columns, column_bindings)
            if column is None:
                raise UnboundVariableError(name, formula)
            if column in overrides:
                cache[name] = np.broadcast_to(np.asarray(overrides[column], dtype=float), (n,))
            else:
                cache[name] = frame[column].to_numpy(dtype=float)
        return cache[name]

    matrix = np.empty((n, len(formula.terms)))
    for j, term in enumerate(formula.terms):
        column = np.ones(n)
        for name in term:
            column = column * values_of(name)
        matrix[:, j] = column
    return DesignMatrix(matrix, formula.labels)


def formula_mentions(formula: Formula, names) -> bool:
    """True when the formula uses any of the given column names."""
    targets = set(names)
    return any(variable in targets for variable in formula.variables)
