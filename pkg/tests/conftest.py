import json
from dataclasses import replace

import pytest

from src.data.dgp import DiscreteDgp, paper_dgp, toy_dgp
from src.data.oracle import enumerate_joint, population_dataset
from src.data.simulate import simulate_dgp
from src.nuisance.spec import saturated_spec
from src.simstudy.scenarios import SCENARIOS

TOY_REGIMES = [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.fixture(scope='session')
def toy():
    return toy_dgp()


@pytest.fixture(scope='session')
def toy_joint(toy):
    return enumerate_joint(toy)


@pytest.fixture(scope='session')
def toy_population(toy_joint):
    """One row per observed configuration, weighted by its probability."""
    return population_dataset(toy_joint)


@pytest.fixture(scope='session')
def saturated(toy_population):
    return saturated_spec(toy_population.horizon, toy_population.baseline)


@pytest.fixture(scope='session')
def paper_sample():
    return simulate_dgp(paper_dgp(), 1000, seed=11)


@pytest.fixture
def scenario_a_spec():
    return SCENARIOS['a'].spec


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps(SCENARIOS['a'].spec.to_dict()))
    return str(path)


@pytest.fixture(scope='session')
def null_toy(toy):
    """toy-v1 with the mediator equations cut off from treatment."""
    variables = tuple(
        replace(v, coefficients={k: c for k, c in v.coefficients.items() if 'A' not in k})
        if v.name.startswith('M') else v
        for v in toy.variables
    )
    return DiscreteDgp(variables, name='toy-null')


@pytest.fixture(scope='session')
def unconfounded_toy(toy):
    """toy-v1 with every U coefficient set to 0."""
    variables = tuple(
        replace(v, coefficients={k: c for k, c in v.coefficients.items() if k != 'U'})
        for v in toy.variables
    )
    return DiscreteDgp(variables, name='toy-unconfounded')
