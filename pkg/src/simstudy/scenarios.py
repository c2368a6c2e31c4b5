"""
Nuisance-model scenarios of the simulation study (T = 1, builtin:paper DGP).

Each scenario keeps the formula text exactly as written so reports can
show which models were misspecified.
"""
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Union

from src.nuisance.spec import NuisanceSpec, NuisanceSpecError

PI_FULL = ["(L1+L2)^2", "(L1+L2+A0+M0)^2"]
PI_SHORT = ["L2", "L2+A0+M0"]
G_FULL = ["L1+L2+L1*L2+A0", "L1+L2+L1*L2+A0+A1+M0"]
G_SHORT = ["L1+L2+A0", "L1+L2+A0+A1+M0"]
SEQ_FULL = ["(L1+L2)^2", "(L1+L2+M0)^2"]
SEQ_SHORT = ["L2", "L2+M0"]
QY_FULL = "(L1+L2+M0+M1)^2"
QY_SHORT = "L1+M0+M1"

GAMMA1_FULL = [["(L1+L2+M0)^2"], ["(L1+L2+M0+M1)^2", "(L1+L2+A0+M0+M1)^2"]]
GAMMA2_FULL = [["(L1+L2)^2"], ["(L1+L2+M0)^2", "(L1+L2+A0+M0)^2"]]
GAMMA1_SHORT = [["L1+L2+M0"], ["L1+L2+M0+M1", "L1+L2+A0+M0+M1"]]
GAMMA2_SHORT = [["L1+L2"], ["L1+L2+M0", "L1+L2+A0+M0"]]


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    spec: NuisanceSpec
    description: str

    def to_dict(self) -> Dict:
        return {'id': self.id, 'description': self.description, 'spec': self.spec.to_dict()}


def _scenario(sid: str, description: str, pi, g, seq, qy, gamma1, gamma2) -> ScenarioSpec:
    spec = NuisanceSpec.from_dict({
        'pi': pi, 'g': g, 'qm': seq, 'r': seq, 'qy': qy,
        'gamma1': gamma1, 'gamma2': gamma2, 'h_mode': 'direct',
    })
    return ScenarioSpec(id=sid, spec=spec, description=description)


SCENARIOS: Dict[str, ScenarioSpec] = {
    'a': _scenario('a', "all nuisance models approximately correct",
                   PI_FULL, G_FULL, SEQ_FULL, QY_FULL, GAMMA1_FULL, GAMMA2_FULL),
    'b': _scenario('b', "sequential regressions and outcome model misspecified",
                   PI_FULL, G_FULL, SEQ_SHORT, QY_SHORT, GAMMA1_FULL, GAMMA2_FULL),
    'c': _scenario('c', "mediator densities and sequential regressions misspecified",
                   PI_FULL, G_SHORT, SEQ_SHORT, QY_FULL, GAMMA1_SHORT, GAMMA2_SHORT),
    'd': _scenario('d', "propensities and outcome model misspecified",
                   PI_SHORT, G_FULL, SEQ_FULL, QY_SHORT, GAMMA1_FULL, GAMMA2_FULL),
    'e': _scenario('e', "all nuisance models misspecified",
                   PI_SHORT, G_SHORT, SEQ_SHORT, QY_SHORT, GAMMA1_SHORT, GAMMA2_SHORT),
}


def load_scenario(reference: Union[str, ScenarioSpec]) -> ScenarioSpec:
    """
    A built-in scenario id, or a path to a nuisance spec JSON file whose
    stem becomes the scenario id.

    Raises:
        NuisanceSpecError: unknown id or invalid spec file
    """
    if isinstance(reference, ScenarioSpec):
        return reference
    if reference in SCENARIOS:
        return SCENARIOS[reference]
    if not os.path.exists(reference):
        raise NuisanceSpecError(f"unknown scenario '{reference}'; built-ins are {', '.join(SCENARIOS)}")
    sid = os.path.splitext(os.path.basename(reference))[0]
    with open(reference, encoding='utf-8') as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise NuisanceSpecError(f"{reference}:{e.lineno}: invalid JSON ({e.msg})") from e
    description = payload.pop('description', f"custom scenario from {reference}") if isinstance(payload, dict) else ''
    return ScenarioSpec(id=sid, spec=NuisanceSpec.from_dict(payload), description=description)


def load_scenarios(references: List[str]) -> List[ScenarioSpec]:
    return [load_scenario(r) for r in references]
