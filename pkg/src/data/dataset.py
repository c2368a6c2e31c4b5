import io
import logging
import re
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.utils.helpers import parse_binary_vector

_BASELINE_RE = re.compile(r'^L0_(\d+)$')
_TREATMENT_RE = re.compile(r'^A(\d+)$')
_MEDIATOR_RE = re.compile(r'^M(\d+)(?:_(\d+))?$')

OUTCOME_COLUMN = 'Y'
WEIGHT_COLUMN = 'W'


class DatasetFormatError(ValueError):
    """Malformed dataset input; carries the file and line when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class RegimeMismatchError(ValueError):
    """Regime length does not match the dataset horizon."""


@dataclass(frozen=True)
class RegimeSpec:
    """Static treatment regime a = (a_0, ..., a_T)."""
    values: Tuple[int, ...]

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        if not values:
            raise ValueError("regime must have at least one entry")
        if any(v not in (0, 1) for v in values):
            raise ValueError(f"regime entries must be 0 or 1, got {values}")
        object.__setattr__(self, 'values', values)

    @classmethod
    def parse(cls, text: str) -> 'RegimeSpec':
        return cls(parse_binary_vector(text))

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    @property
    def key(self) -> str:
        """Compact label used in reports, e.g. "11"."""
        return ''.join(str(v) for v in self.values)

    def prefix(self, t: int) -> Tuple[int, ...]:
        """Regime history up to and including time t (empty for t < 0)."""
        return self.values[:t + 1] if t >= 0 else ()

    def check_horizon(self, horizon: int):
        if self.horizon != horizon:
            raise RegimeMismatchError(
                f"regime {self.key} has {len(self.values)} entries but the data has "
                f"{horizon + 1} time points (T={horizon})"
            )

    def __str__(self) -> str:
        return ','.join(str(v) for v in self.values)


@dataclass(frozen=True)
class LongitudinalDataset:
    """
    Rectangular observations O = (L0, A_0, M_0, ..., A_T, M_T, Y) with row weights.

    The frame keeps the canonical column names (L0_1.., A0, M0 or M0_1.., Y, W).
    Treat instances as read-only; helpers that need modified columns work on
    overrides instead of mutating the frame.
    """
    frame: pd.DataFrame
    horizon: int
    baseline: Tuple[str, ...]
    mediators: Tuple[Tuple[str, ...], ...]
    weight_column: Optional[str] = None

    def __post_init__(self):
        if self.horizon < 0:
            raise DatasetFormatError("horizon T must be >= 0")
        if len(self.mediators) != self.horizon + 1:
            raise DatasetFormatError("one mediator block per time point is required")
        missing = [c for c in self.columns if c not in self.frame.columns]
        if missing:
            raise DatasetFormatError(f"missing columns: {', '.join(missing)}")
        if len(self.frame) == 0:
            raise DatasetFormatError("dataset has no rows")
        for t in range(self.horizon + 1):
            a = self.frame[f'A{t}'].to_numpy()
            if not np.all(np.isin(a, (0, 1))):
                raise DatasetFormatError(f"treatment column A{t} must contain only 0/1")
        for name in self.columns:
            values = self.frame[name].to_numpy(dtype=float)
            if not np.all(np.isfinite(values)):
                raise DatasetFormatError(f"column {name} has missing or non-finite values")
        if self.weight_column is not None:
            w = self.frame[self.weight_column].to_numpy(dtype=float)
            if np.any(w < 0) or not np.sum(w) > 0:
                raise DatasetFormatError("weights must be >= 0 with a positive sum")

    # ---- construction -------------------------------------------------

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'LongitudinalDataset':
        """Infer the layout from canonical column names."""
        baseline = []
        treatments = {}
        mediators: Dict[int, List[Tuple[int, str]]] = {}
        for name in frame.columns:
            if _BASELINE_RE.match(name):
                baseline.append(name)
            elif _TREATMENT_RE.match(name):
                treatments[int(_TREATMENT_RE.match(name).group(1))] = name
            elif _MEDIATOR_RE.match(name):
                match = _MEDIATOR_RE.match(name)
                component = int(match.group(2)) if match.group(2) else 0
                mediators.setdefault(int(match.group(1)), []).append((component, name))
            elif name not in (OUTCOME_COLUMN, WEIGHT_COLUMN):
                raise DatasetFormatError(f"unexpected column '{name}'")
        if not treatments:
            raise DatasetFormatError("no treatment columns A0..AT found")
        horizon = max(treatments)
        if sorted(treatments) != list(range(horizon + 1)):
            raise DatasetFormatError("treatment columns must be A0..AT without gaps")
        if sorted(mediators) != list(range(horizon + 1)):
            raise DatasetFormatError("mediator columns must cover M0..MT")
        if OUTCOME_COLUMN not in frame.columns:
            raise DatasetFormatError("outcome column Y missing")
        baseline.sort(key=lambda c: int(_BASELINE_RE.match(c).group(1)))
        blocks = tuple(tuple(name for _, name in sorted(mediators[t])) for t in range(horizon + 1))
        weight = WEIGHT_COLUMN if WEIGHT_COLUMN in frame.columns else None
        return cls(
            frame=frame.reset_index(drop=True),
            horizon=horizon,
            baseline=tuple(baseline),
            mediators=blocks,
            weight_column=weight,
        )

    @classmethod
    def read_csv(cls, path: str) -> 'LongitudinalDataset':
        """Load a dataset CSV, reporting file/line for malformed input."""
        try:
            frame = pd.read_csv(path, sep=',', decimal='.', thousands=None, encoding='utf-8')
        except pd.errors.ParserError as e:
            line = None
            match = re.search(r'line (\d+)', str(e))
            if match:
                line = int(match.group(1))
            raise DatasetFormatError(f"cannot parse CSV: {e}", path, line) from e
        except pd.errors.EmptyDataError as e:
            raise DatasetFormatError("empty file", path) from e
        for name in frame.columns:
            coerced = pd.to_numeric(frame[name], errors='coerce')
            bad = np.flatnonzero(coerced.isna().to_numpy())
            if bad.size:
                # header is line 1
                raise DatasetFormatError(
                    f"non-numeric or missing value in column '{name}'", path, int(bad[0]) + 2
                )
            frame[name] = coerced
        try:
            dataset = cls.from_frame(frame)
        except DatasetFormatError as e:
            raise DatasetFormatError(str(e), path) from e
        logging.info(f"Loaded {dataset.n_rows} rows (T={dataset.horizon}) from {path}")
        return dataset

    def to_csv(self, path: Union[str, io.TextIOBase]):
        """Write the canonical CSV; '-' writes to stdout."""
        frame = self.frame[list(self.columns) + ([self.weight_column] if self.weight_column else [])]
        if path == '-':
            frame.to_csv(sys.stdout, index=False, lineterminator='\n')
        else:
            frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')

    # ---- accessors ----------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def treatments(self) -> Tuple[str, ...]:
        return tuple(f'A{t}' for t in range(self.horizon + 1))

    @property
    def columns(self) -> Tuple[str, ...]:
        """Canonical column order without the weight column."""
        ordered = list(self.baseline)
        for t in range(self.horizon + 1):
            ordered.append(f'A{t}')
            ordered.extend(self.mediators[t])
        ordered.append(OUTCOME_COLUMN)
        return tuple(ordered)

    @property
    def weights(self) -> np.ndarray:
        if self.weight_column is None:
            return np.ones(self.n_rows)
        return self.frame[self.weight_column].to_numpy(dtype=float)

    @property
    def outcome(self) -> np.ndarray:
        return self.frame[OUTCOME_COLUMN].to_numpy(dtype=float)

    def column(self, name: str) -> np.ndarray:
        if name not in self.frame.columns:
            raise KeyError(name)
        return self.frame[name].to_numpy(dtype=float)

    def treatment(self, t: int) -> np.ndarray:
        return self.column(f'A{t}')

    def treatment_history(self, t: int) -> np.ndarray:
        """n x (t+1) matrix of A_0..A_t (n x 0 for t < 0)."""
        if t < 0:
            return np.zeros((self.n_rows, 0), dtype=int)
        return self.frame[[f'A{k}' for k in range(t + 1)]].to_numpy(dtype=int)

    def mediator(self, t: int) -> np.ndarray:
        """Single-component mediator M_t."""
        block = self.mediators[t]
        if len(block) != 1:
            raise ValueError(f"M{t} has {len(block)} components; a single binary mediator is required")
        return self.column(block[0])

    def mediator_history(self, t: int) -> np.ndarray:
        """n x (t+1) matrix of single-component M_0..M_t (n x 0 for t < 0)."""
        if t < 0:
            return np.zeros((self.n_rows, 0), dtype=int)
        return np.column_stack([self.mediator(k) for k in range(t + 1)]).astype(int)

    def has_binary_mediators(self) -> bool:
        if any(len(block) != 1 for block in self.mediators):
            return False
        return all(np.all(np.isin(self.mediator(t), (0, 1))) for t in range(self.horizon + 1))

    def regime_match(self, regime: RegimeSpec, t: int) -> np.ndarray:
        """Boolean rows with A_0..A_t equal to the regime prefix."""
        if t < 0:
            return np.ones(self.n_rows, dtype=bool)
        return np.all(self.treatment_history(t) == np.asarray(regime.prefix(t)), axis=1)


def validate_regime(data: LongitudinalDataset, regime: Union[RegimeSpec, Sequence[int], str]) -> RegimeSpec:
    """
    Coerce a regime and check it against the dataset horizon.

    Args:
        data: Dataset the regime applies to
        regime: RegimeSpec, 0/1 sequence or "1,1" string

    Returns:
        RegimeSpec with a matching horizon
    """
    if isinstance(regime, str):
        regime = RegimeSpec.parse(regime)
    elif not isinstance(regime, RegimeSpec):
        regime = RegimeSpec(tuple(regime))
    regime.check_horizon(data.horizon)
    return regime
