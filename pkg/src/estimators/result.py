import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.utils.helpers import format_float


@dataclass
class EstimateResult:
    """
    Point estimate with optional influence-function inference.

    When `ci` is set, `se` is set too and lo <= psi <= hi.
    """
    estimator: str
    psi: float
    regime: str
    n: int
    alpha: float = 0.05
    se: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None
    eif_values: Optional[np.ndarray] = None
    eif_mean: Optional[float] = None
    diagnostics: List[str] = field(default_factory=list)
    details: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ci is not None:
            if self.se is None:
                raise ValueError("a confidence interval requires a standard error")
            lo, hi = self.ci
            assert lo <= self.psi <= hi or not np.isfinite(self.psi), "Wald interval must contain psi"

    def to_dict(self) -> Dict:
        return {
            'estimator': self.estimator,
            'psi': _json_float(self.psi),
            'se': _json_float(self.se),
            'ci': [_json_float(self.ci[0]), _json_float(self.ci[1])] if self.ci is not None else None,
            'alpha': self.alpha,
            'regime': self.regime,
            'n': self.n,
            'eif_mean': _json_float(self.eif_mean),
            'diagnostics': list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> 'EstimateResult':
        ci = payload.get('ci')
        return cls(
            estimator=payload['estimator'],
            psi=_from_json(payload['psi']),
            regime=str(payload.get('regime', '')),
            n=int(payload.get('n', 0)),
            alpha=float(payload.get('alpha', 0.05)),
            se=_from_json(payload.get('se')),
            ci=(_from_json(ci[0]), _from_json(ci[1])) if ci is not None else None,
            eif_mean=_from_json(payload.get('eif_mean')),
            diagnostics=list(payload.get('diagnostics', [])),
        )

    def to_json(self, path_or_stream):
        text = json.dumps(self.to_dict(), indent=2) + '\n'
        if hasattr(path_or_stream, 'write'):
            path_or_stream.write(text)
        else:
            with open(path_or_stream, 'w', encoding='utf-8') as fh:
                fh.write(text)

    @classmethod
    def from_json(cls, path: str) -> 'EstimateResult':
        with open(path, encoding='utf-8') as fh:
            return cls.from_dict(json.load(fh))

    def summary_line(self) -> str:
        lo, hi = self.ci if self.ci is not None else (None, None)
        return (f"psi={format_float(self.psi)} se={format_float(self.se)} "
                f"ci=[{format_float(lo)},{format_float(hi)}]")

    def covers(self, truth: float) -> Optional[bool]:
        if self.ci is None:
            return None
        return bool(self.ci[0] <= truth <= self.ci[1])


def _json_float(value: Optional[float]):
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None


def _from_json(value) -> Optional[float]:
    return None if value is None else float(value)
