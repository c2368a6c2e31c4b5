import json
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple, Union

from src.config import Config
from src.data.dataset import RegimeSpec
from src.estimators.registry import ESTIMATORS


class StudyConfigError(ValueError):
    """Invalid Monte Carlo study configuration."""


@dataclass(frozen=True)
class MonteCarloConfig:
    """
    Sample sizes, replications, estimators and regimes of one study.

    `truth` maps regime keys ("11") to true values, or is "auto" to estimate
    them from large intervened draws of the DGP.
    """
    dgp: str = 'builtin:paper'
    scenarios: Tuple[str, ...] = ('a', 'b', 'c', 'd', 'e')
    sample_sizes: Tuple[int, ...] = Config.DEFAULT_SAMPLE_SIZES
    replications: int = Config.DEFAULT_REPLICATIONS
    estimators: Tuple[str, ...] = tuple(ESTIMATORS)
    regimes: Tuple[RegimeSpec, ...] = (RegimeSpec((1, 1)), RegimeSpec((0, 0)))
    seed: int = 0
    alpha: float = Config.DEFAULT_ALPHA
    truth: Union[str, Dict[str, float]] = 'auto'

    def __post_init__(self):
        if self.replications < 1:
            raise StudyConfigError("reps must be at least 1")
        if not self.sample_sizes:
            raise StudyConfigError("at least one sample size is required")
        small = [n for n in self.sample_sizes if n < Config.MIN_SAMPLE_SIZE]
        if small:
            raise StudyConfigError(f"sample sizes must be at least {Config.MIN_SAMPLE_SIZE}, got {small}")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise StudyConfigError(f"unknown estimators: {', '.join(unknown)}")
        if not self.estimators:
            raise StudyConfigError("at least one estimator is required")
        if not self.regimes:
            raise StudyConfigError("at least one regime is required")
        if not 0 < self.alpha < 1:
            raise StudyConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if isinstance(self.truth, str):
            if self.truth != 'auto':
                raise StudyConfigError("truth must be 'auto' or an object keyed by regime")
        else:
            missing = [r.key for r in self.regimes if r.key not in self.truth]
            if missing:
                raise StudyConfigError(f"truth is missing regimes: {', '.join(missing)}")

    def truth_for(self, regime: RegimeSpec) -> Optional[float]:
        return None if isinstance(self.truth, str) else float(self.truth[regime.key])

    @classmethod
    def from_dict(cls, payload: Mapping) -> 'MonteCarloConfig':
        if not isinstance(payload, Mapping):
            raise StudyConfigError("study config must be a JSON object")
        known = {'dgp', 'scenarios', 'n', 'reps', 'estimators', 'regimes', 'seed', 'alpha', 'truth'}
        unknown = set(payload) - known
        if unknown:
            raise StudyConfigError(f"unknown study config keys: {', '.join(sorted(unknown))}")
        kwargs = {}
        try:
            if 'dgp' in payload:
                kwargs['dgp'] = str(payload['dgp'])
            if 'scenarios' in payload:
                kwargs['scenarios'] = tuple(str(s) for s in payload['scenarios'])
            if 'n' in payload:
                kwargs['sample_sizes'] = tuple(int(n) for n in payload['n'])
            if 'reps' in payload:
                kwargs['replications'] = int(payload['reps'])
            if 'estimators' in payload:
                kwargs['estimators'] = tuple(str(e) for e in payload['estimators'])
            if 'regimes' in payload:
                kwargs['regimes'] = tuple(RegimeSpec(tuple(int(a) for a in r)) for r in payload['regimes'])
            if 'seed' in payload:
                kwargs['seed'] = int(payload['seed'])
            if 'alpha' in payload:
                kwargs['alpha'] = float(payload['alpha'])
            if 'truth' in payload:
                truth = payload['truth']
                kwargs['truth'] = truth if isinstance(truth, str) else {str(k): float(v) for k, v in truth.items()}
        except (TypeError, ValueError, AttributeError) as e:
            raise StudyConfigError(f"malformed study config: {e}") from e
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> 'MonteCarloConfig':
        try:
            with open(path, encoding='utf-8') as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise StudyConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
        logging.info(f"Loaded study config from {path}")
        return cls.from_dict(payload)

    def to_dict(self) -> Dict:
        return {
            'dgp': self.dgp,
            'scenarios': list(self.scenarios),
            'n': list(self.sample_sizes),
            'reps': self.replications,
            'estimators': list(self.estimators),
            'regimes': [list(r.values) for r in self.regimes],
            'seed': self.seed,
            'alpha': self.alpha,
            'truth': self.truth if isinstance(self.truth, str) else dict(self.truth),
        }
