"""
Nuisance-model specification: which formula fits which component.
"""
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.formula.parser import Formula, FormulaSyntaxError, format_formula, parse_formula, saturated_formula
from src.glm.models import BINOMIAL, GAUSSIAN

H_MODES = ('direct', 'gamma')


class NuisanceSpecError(ValueError):
    """Inconsistent or malformed nuisance specification."""


def _text(formula: Formula) -> str:
    return formula.source or format_formula(formula)


def _parse(text, where: str) -> Formula:
    if isinstance(text, Formula):
        return text
    if not isinstance(text, str):
        raise NuisanceSpecError(f"{where}: formula must be a string, got {type(text).__name__}")
    try:
        return parse_formula(text)
    except FormulaSyntaxError as e:
        raise NuisanceSpecError(f"{where}: {e}") from e


@dataclass(frozen=True)
class NuisanceSpec:
    """
    Formulas per component, all indexed by time t = 0..T.

    `gamma1[t][j]` / `gamma2[t][j]` (j <= t) are the treatment classifiers of
    the density-ratio rewrite. `qm[t]` and `r[t]` are the sequential
    regressions at step t.
    """
    pi: Tuple[Formula, ...]
    qy: Formula
    qm: Optional[Tuple[Formula, ...]] = None
    r: Optional[Tuple[Formula, ...]] = None
    g: Optional[Tuple[Formula, ...]] = None
    gamma1: Optional[Tuple[Tuple[Formula, ...], ...]] = None
    gamma2: Optional[Tuple[Tuple[Formula, ...], ...]] = None
    h_mode: str = 'direct'
    truncate: Optional[float] = None
    seq_family: str = GAUSSIAN

    def __post_init__(self):
        if not self.pi:
            raise NuisanceSpecError("at least one propensity formula (pi) is required")
        size = len(self.pi)
        for name in ('qm', 'r', 'g'):
            value = getattr(self, name)
            if value is not None and len(value) != size:
                raise NuisanceSpecError(f"'{name}' has {len(value)} formulas; expected {size} (T={size - 1})")
        for name in ('gamma1', 'gamma2'):
            value = getattr(self, name)
            if value is None:
                continue
            if len(value) != size:
                raise NuisanceSpecError(f"'{name}' needs one row per time point ({size})")
            for t, row in enumerate(value):
                if len(row) != t + 1:
                    raise NuisanceSpecError(f"'{name}[{t}]' needs {t + 1} formulas (j = 0..{t})")
        if self.h_mode not in H_MODES:
            raise NuisanceSpecError(f"h_mode must be one of {H_MODES}, got '{self.h_mode}'")
        if self.h_mode == 'gamma' and (self.gamma1 is None or self.gamma2 is None):
            raise NuisanceSpecError("h_mode 'gamma' requires gamma1 and gamma2 formulas")
        if self.truncate is not None and not self.truncate > 1:
            raise NuisanceSpecError("truncate must be a number > 1 or null")
        if self.seq_family not in (GAUSSIAN, BINOMIAL):
            raise NuisanceSpecError(f"seq_family must be gaussian or binomial, got '{self.seq_family}'")

    @property
    def horizon(self) -> int:
        return len(self.pi) - 1

    def has_gamma(self) -> bool:
        return self.gamma1 is not None and self.gamma2 is not None

    def check_horizon(self, horizon: int):
        if self.horizon != horizon:
            raise NuisanceSpecError(f"spec is for T={self.horizon} but the data has T={horizon}")

    def to_dict(self) -> Dict:
        payload = {
            'pi': [_text(f) for f in self.pi],
            'g': [_text(f) for f in self.g] if self.g is not None else None,
            'gamma1': [[_text(f) for f in row] for row in self.gamma1] if self.gamma1 is not None else None,
            'gamma2': [[_text(f) for f in row] for row in self.gamma2] if self.gamma2 is not None else None,
            'qy': _text(self.qy),
            'qm': [_text(f) for f in self.qm] if self.qm is not None else None,
            'r': [_text(f) for f in self.r] if self.r is not None else None,
            'h_mode': self.h_mode,
            'truncate': self.truncate,
            'seq_family': self.seq_family,
        }
        return {k: v for k, v in payload.items() if v is not None or k == 'truncate'}

    @classmethod
    def from_dict(cls, payload: Mapping) -> 'NuisanceSpec':
        if not isinstance(payload, Mapping):
            raise NuisanceSpecError("nuisance spec must be a JSON object")
        unknown = set(payload) - {'pi', 'g', 'gamma1', 'gamma2', 'qy', 'qm', 'r', 'h_mode', 'truncate', 'seq_family'}
        if unknown:
            raise NuisanceSpecError(f"unknown spec keys: {', '.join(sorted(unknown))}")
        for key in ('pi', 'qy'):
            if key not in payload:
                raise NuisanceSpecError(f"spec is missing '{key}'")

        def many(key):
            value = payload.get(key)
            if value is None:
                return None
            if not isinstance(value, list):
                raise NuisanceSpecError(f"'{key}' must be a list")
            return tuple(_parse(text, f"{key}[{i}]") for i, text in enumerate(value))

        def nested(key):
            value = payload.get(key)
            if value is None:
                return None
            if not isinstance(value, list) or not all(isinstance(row, list) for row in value):
                raise NuisanceSpecError(f"'{key}' must be a list of lists")
            return tuple(tuple(_parse(text, f"{key}[{t}][{j}]") for j, text in enumerate(row))
                         for t, row in enumerate(value))

        truncate = payload.get('truncate')
        return cls(
            pi=many('pi'),
            qy=_parse(payload['qy'], 'qy'),
            qm=many('qm'),
            r=many('r'),
            g=many('g'),
            gamma1=nested('gamma1'),
            gamma2=nested('gamma2'),
            h_mode=payload.get('h_mode', 'direct'),
            truncate=float(truncate) if truncate is not None else None,
            seq_family=payload.get('seq_family', GAUSSIAN),
        )

    @classmethod
    def from_json(cls, path: str) -> 'NuisanceSpec':
        try:
            with open(path, encoding='utf-8') as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise NuisanceSpecError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
        logging.info(f"Loaded nuisance spec from {path}")
        return cls.from_dict(payload)

    def to_json(self, path: str):
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write('\n')


def saturated_spec(horizon: int, baseline: Sequence[str], h_mode: str = 'direct',
                   seq_family: str = GAUSSIAN) -> NuisanceSpec:
    """
    Saturated formulas over binary histories with single-component mediators.

    Sequential regressions use (L0, M_0..M_{t-1}) only, so they are fitted
    within the regime stratum.
    """
    L = list(baseline)

    def A(upto: int) -> List[str]:
        return [f'A{k}' for k in range(upto + 1)]

    def M(upto: int) -> List[str]:
        return [f'M{k}' for k in range(upto + 1)]

    T = horizon
    return NuisanceSpec(
        pi=tuple(saturated_formula(L + A(t - 1) + M(t - 1)) for t in range(T + 1)),
        qy=saturated_formula(L + A(T) + M(T)),
        qm=tuple(saturated_formula(L + M(t - 1)) for t in range(T + 1)),
        r=tuple(saturated_formula(L + M(t - 1)) for t in range(T + 1)),
        g=tuple(saturated_formula(L + A(t) + M(t - 1)) for t in range(T + 1)),
        gamma1=tuple(tuple(saturated_formula(L + A(j - 1) + M(t)) for j in range(t + 1)) for t in range(T + 1)),
        gamma2=tuple(tuple(saturated_formula(L + A(j - 1) + M(t - 1)) for j in range(t + 1)) for t in range(T + 1)),
        h_mode=h_mode,
        seq_family=seq_family,
    )
