"""
Structural data-generating processes made of conditional logit equations.
"""
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple, Union

import numpy as np

_TREATMENT_RE = re.compile(r'^A(\d+)$')
_MEDIATOR_RE = re.compile(r'^M(\d+)(?:_(\d+))?$')
_BASELINE_RE = re.compile(r'^L0_(\d+)$')

DISTRIBUTIONS = ('bernoulli', 'normal')


class DgpError(ValueError):
    """Invalid DGP definition."""


@dataclass(frozen=True)
class DgpVariable:
    """
    One structural equation.

    Bernoulli variables draw from expit(linear predictor); normal variables
    draw linear predictor + N(0, 1). Coefficient keys name a parent or a
    product of parents joined with '*'.
    """
    name: str
    parents: Tuple[str, ...] = ()
    intercept: float = 0.0
    coefficients: Mapping[str, float] = field(default_factory=dict)
    latent: bool = False
    distribution: str = 'bernoulli'

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))
        object.__setattr__(self, 'coefficients', dict(self.coefficients))
        if self.distribution not in DISTRIBUTIONS:
            raise DgpError(f"{self.name}: unknown distribution '{self.distribution}'")
        for key in self.coefficients:
            for factor in key.split('*'):
                if factor.strip() not in self.parents:
                    raise DgpError(f"{self.name}: coefficient '{key}' uses non-parent '{factor.strip()}'")

    def linear_predictor(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        """Evaluate intercept + sum of coefficient * product of parent values."""
        eta = self.intercept
        for key, coef in self.coefficients.items():
            term = 1.0
            for factor in key.split('*'):
                term = term * np.asarray(values[factor.strip()], dtype=float)
            eta = eta + coef * term
        return eta

    def to_dict(self) -> Dict:
        out = {
            'name': self.name,
            'parents': list(self.parents),
            'intercept': self.intercept,
            'coefficients': dict(self.coefficients),
            'latent': self.latent,
        }
        if self.distribution != 'bernoulli':
            out['distribution'] = self.distribution
        return out


@dataclass(frozen=True)
class DiscreteDgp:
    """Variables in topological order (U, L0, A_t, M_t, Y)."""
    variables: Tuple[DgpVariable, ...]
    name: str = 'custom'

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        self._validate()

    def _validate(self):
        seen = set()
        for var in self.variables:
            if var.name in seen:
                raise DgpError(f"duplicate variable '{var.name}'")
            for parent in var.parents:
                if parent not in seen:
                    raise DgpError(f"{var.name}: parent '{parent}' must precede it in the variable list")
            seen.add(var.name)
        if 'Y' not in seen:
            raise DgpError("a DGP needs an outcome variable 'Y'")
        times = sorted(int(_TREATMENT_RE.match(v.name).group(1))
                       for v in self.variables if _TREATMENT_RE.match(v.name))
        if not times or times != list(range(len(times))):
            raise DgpError("treatments must be named A0..AT without gaps")
        latent = {v.name for v in self.variables if v.latent}
        for var in self.variables:
            if var.latent and (_TREATMENT_RE.match(var.name) or _MEDIATOR_RE.match(var.name) or var.name == 'Y'):
                raise DgpError(f"{var.name} cannot be latent")
            latent_parents = latent.intersection(var.parents)
            if latent_parents and not (_TREATMENT_RE.match(var.name) or var.name == 'Y'):
                raise DgpError(
                    f"{var.name}: latent parents {sorted(latent_parents)} may only affect treatments and Y"
                )
            if var.name == 'Y':
                direct = [p for p in var.parents if _TREATMENT_RE.match(p)]
                if direct:
                    raise DgpError(f"Y may not depend on treatments directly (front-door shape): {direct}")
            if _TREATMENT_RE.match(var.name) or _MEDIATOR_RE.match(var.name) or var.name == 'Y':
                if var.distribution != 'bernoulli':
                    raise DgpError(f"{var.name} must be Bernoulli")
        for t in range(self.horizon + 1):
            if not self.mediator_names(t):
                raise DgpError(f"no mediator for time {t}")

    # ---- layout -------------------------------------------------------

    @property
    def horizon(self) -> int:
        return max(int(_TREATMENT_RE.match(v.name).group(1))
                   for v in self.variables if _TREATMENT_RE.match(v.name))

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def latent_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.latent)

    def baseline_names(self) -> Tuple[str, ...]:
        names = [v.name for v in self.variables if _BASELINE_RE.match(v.name)]
        return tuple(sorted(names, key=lambda c: int(_BASELINE_RE.match(c).group(1))))

    def mediator_names(self, t: int) -> Tuple[str, ...]:
        names = []
        for v in self.variables:
            match = _MEDIATOR_RE.match(v.name)
            if match and int(match.group(1)) == t:
                names.append((int(match.group(2) or 0), v.name))
        return tuple(name for _, name in sorted(names))

    def observed_order(self) -> Tuple[str, ...]:
        """Canonical observed column order: L0.., A0, M0.., ..., AT, MT.., Y."""
        order = list(self.baseline_names())
        for t in range(self.horizon + 1):
            order.append(f'A{t}')
            order.extend(self.mediator_names(t))
        order.append('Y')
        extra = [v.name for v in self.variables if not v.latent and v.name not in order]
        if extra:
            raise DgpError(f"observed variables outside the canonical layout: {extra}")
        return tuple(order)

    def is_all_binary(self) -> bool:
        return all(v.distribution == 'bernoulli' for v in self.variables)

    def variable(self, name: str) -> DgpVariable:
        for var in self.variables:
            if var.name == name:
                return var
        raise KeyError(name)

    # ---- serialization ------------------------------------------------

    def to_dict(self) -> Dict:
        return {'variables': [v.to_dict() for v in self.variables]}

    @classmethod
    def from_dict(cls, payload: Mapping, name: str = 'custom') -> 'DiscreteDgp':
        if 'variables' not in payload or not isinstance(payload['variables'], list):
            raise DgpError("DGP JSON needs a 'variables' list")
        variables = []
        for i, entry in enumerate(payload['variables']):
            try:
                variables.append(DgpVariable(
                    name=entry['name'],
                    parents=tuple(entry.get('parents', [])),
                    intercept=float(entry.get('intercept', 0.0)),
                    coefficients={k: float(v) for k, v in entry.get('coefficients', {}).items()},
                    latent=bool(entry.get('latent', False)),
                    distribution=entry.get('distribution', 'bernoulli'),
                ))
            except (KeyError, TypeError, AttributeError) as e:
                raise DgpError(f"variable #{i}: malformed entry ({e})") from e
        return cls(tuple(variables), name=name)

    @classmethod
    def from_json(cls, path: str) -> 'DiscreteDgp':
        try:
            with open(path, encoding='utf-8') as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise DgpError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
        return cls.from_dict(payload, name=path)


def paper_dgp(horizon: int = 1, lag_from: int = 1) -> DiscreteDgp:
    """
    The simulation-study DGP with unmeasured U confounding A_t and Y.

    Args:
        horizon: Last time point T
        lag_from: First time at which the lagged A/M terms enter the A_t and
            M_t equations. 1 reproduces the published truths (0.45 / 0.57 at
            T=1); 2 is the literal "t > 1" indicator.

    Returns:
        DiscreteDgp with continuous L0_1
    """
    if horizon < 0:
        raise DgpError("horizon must be >= 0")
    baseline = {'L0_1': -2.0, 'L0_2': 1.0, 'L0_1*L0_2': 4.0}
    variables = [
        DgpVariable('U', (), 0.0, {}, latent=True),
        DgpVariable('L0_1', (), 0.0, {}, distribution='normal'),
        DgpVariable('L0_2', ('L0_1',), 1.0, {'L0_1': 2.0}),
    ]
    for t in range(horizon + 1):
        a_parents = ['L0_1', 'L0_2', 'U']
        a_coefs = dict(baseline)
        a_coefs['U'] = 2.0
        if t >= lag_from and t >= 1:
            a_parents += [f'A{t-1}', f'M{t-1}']
            a_coefs.update({f'A{t-1}': 2.0, f'M{t-1}': -1.0, f'A{t-1}*M{t-1}': -1.0})
        variables.append(DgpVariable(f'A{t}', tuple(a_parents), -2.0, a_coefs))

        m_parents = ['L0_1', 'L0_2', f'A{t}']
        m_coefs = {f'A{t}': -1.0, 'L0_1': -2.0, 'L0_2': 2.0, 'L0_1*L0_2': 3.0}
        if t >= lag_from and t >= 1:
            m_parents += [f'A{t-1}', f'M{t-1}']
            m_coefs.update({f'M{t-1}': 1.0, f'A{t-1}': -0.5})
        variables.append(DgpVariable(f'M{t}', tuple(m_parents), -1.0, m_coefs))

    y_parents = ['L0_1', 'L0_2', 'U', f'M{horizon}']
    y_coefs = {f'M{horizon}': 2.0, 'L0_1': 2.0, 'L0_2': -2.0, 'L0_1*L0_2': -4.0, 'U': -1.0}
    if horizon >= 1:
        y_parents.append(f'M{horizon-1}')
        y_coefs[f'M{horizon-1}'] = 1.0
    variables.append(DgpVariable('Y', tuple(y_parents), 1.0, y_coefs))
    return DiscreteDgp(tuple(variables), name='paper')


def toy_dgp() -> DiscreteDgp:
    """
    The all-binary fixture 'toy-v1' (T=1) used by the enumeration oracle.

    U confounds A0, A1 and Y; both mediators are free of U.
    """
    variables = (
        DgpVariable('U', (), -0.3, {}, latent=True),
        DgpVariable('L0_1', (), 0.2, {}),
        DgpVariable('L0_2', ('L0_1',), -0.4, {'L0_1': 0.8}),
        DgpVariable('A0', ('L0_1', 'L0_2', 'U'), -0.5,
                    {'L0_1': 0.9, 'L0_2': -0.6, 'U': 1.2}),
        DgpVariable('M0', ('L0_1', 'L0_2', 'A0'), -0.3,
                    {'A0': 1.1, 'L0_1': -0.7, 'L0_2': 0.5}),
        DgpVariable('A1', ('L0_1', 'L0_2', 'A0', 'M0', 'U'), -0.2,
                    {'A0': 0.8, 'M0': -0.9, 'L0_1': 0.4, 'L0_2': 0.3, 'U': 1.0}),
        DgpVariable('M1', ('L0_1', 'L0_2', 'A0', 'M0', 'A1'), -0.6,
                    {'A1': 1.3, 'A0': 0.4, 'M0': 0.7, 'L0_1': 0.3, 'L0_2': -0.5, 'A1*M0': -0.4}),
        DgpVariable('Y', ('L0_1', 'L0_2', 'M0', 'M1', 'U'), -0.4,
                    {'M1': 1.5, 'M0': 0.6, 'L0_1': 0.5, 'L0_2': -0.8, 'U': -1.4, 'M0*M1': 0.3}),
    )
    return DiscreteDgp(variables, name='toy-v1')


BUILTIN_DGPS = {
    'paper': paper_dgp,
    'toy-v1': toy_dgp,
}


def load_dgp(reference: Union[str, DiscreteDgp]) -> DiscreteDgp:
    """
    Resolve 'builtin:paper', 'builtin:toy-v1' or a JSON path.

    Raises:
        DgpError: unknown builtin or invalid file
    """
    if isinstance(reference, DiscreteDgp):
        return reference
    if reference.startswith('builtin:'):
        key = reference.split(':', 1)[1]
        if key not in BUILTIN_DGPS:
            raise DgpError(f"unknown builtin DGP '{key}' (known: {', '.join(sorted(BUILTIN_DGPS))})")
        return BUILTIN_DGPS[key]()
    logging.info(f"Loading DGP from {reference}")
    return DiscreteDgp.from_json(reference)
