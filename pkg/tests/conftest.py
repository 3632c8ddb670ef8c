import numpy as np
import pytest

from cfmediate.model_loading import JSONModelLoader, parse_model

FIXTURES = ['fixtureA', 'fixtureB', 'fixtureC', 'fixtureD', 'fixtureE',
        'fixtureF']

CHAIN_MODEL = """{
  "name": "chain",
  "exogenous": [
    {"name": "U_X", "domain": ["0", "1"], "marginal": {"0": 0.4, "1": 0.6}},
    {"name": "U_Y", "domain": ["0", "1"], "marginal": {"0": 0.9, "1": 0.1}}
  ],
  "variables": [
    {"name": "X", "domain": ["0", "1"], "parents": [], "exo_parents": ["U_X"],
     "table": {"0": "0", "1": "1"}},
    {"name": "Z", "domain": ["0", "1"], "parents": ["X"], "exo_parents": [],
     "table": {"0": "1", "1": "0"}},
    {"name": "Y", "domain": ["0", "1"], "parents": ["Z"], "exo_parents": ["U_Y"],
     "table": {"0,0": "0", "0,1": "1", "1,0": "1", "1,1": "0"}}
  ]
}
"""


@pytest.fixture(scope='session')
def loader():
    return JSONModelLoader()


@pytest.fixture(scope='session')
def models(loader):
    return {name: loader.load(name).scm for name in FIXTURES}


@pytest.fixture
def chain():
    return parse_model(CHAIN_MODEL, source='chain.json').scm


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
