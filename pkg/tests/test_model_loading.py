import json

import pytest

from cfmediate.exceptions import ValidationError
from cfmediate.model_loading import JSONModelLoader, dump_model, parse_model

from conftest import CHAIN_MODEL, FIXTURES

DUPLICATE_VARIABLE = """{
  "exogenous": [
    {"name": "U", "domain": ["0"], "marginal": {"0": 1.0}}
  ],
  "variables": [
    {"name": "X", "domain": ["0"], "exo_parents": ["U"], "table": {"0": "0"}},
    {"name": "X", "domain": ["0"], "exo_parents": ["U"], "table": {"0": "0"}}
  ]
}
"""

DUPLICATE_KEY = """{
  "name": "a",
  "name": "b",
  "exogenous": [],
  "variables": []
}
"""

JOINT_MODEL = """{
  "name": "joint",
  "exogenous": {
    "variables": [
      {"name": "U_X", "domain": ["0", "1"]},
      {"name": "U_Y", "domain": ["0", "1"]}
    ],
    "joint": {"0,0": 0.4, "1,1": 0.4, "0,1": 0.1, "1,0": 0.1}
  },
  "variables": [
    {"name": "X", "domain": ["0", "1"], "exo_parents": ["U_X"],
     "table": {"0": "0", "1": "1"}},
    {"name": "Y", "domain": ["lo", "hi"], "parents": ["X"],
     "exo_parents": ["U_Y"], "numeric_code": {"lo": 0, "hi": 10},
     "table": {"0,0": "lo", "0,1": "hi", "1,0": "hi", "1,1": "lo"}}
  ]
}
"""


def _chain_document():
    return json.loads(CHAIN_MODEL)


def test_shipped_models_load(loader):
    assert set(FIXTURES) <= set(loader.available_models())
    for name in FIXTURES:
        document = loader.load(name)
        assert document.scm.name == name


def test_unknown_model(loader):
    with pytest.raises(ValidationError, match="Model not found"):
        loader.load('no_such_model')


def test_syntax_error_has_position():
    with pytest.raises(ValidationError,
            match=r"bad\.json: line 1, column \d+: syntax error"):
        parse_model('{"name": }', source='bad.json')


def test_duplicate_keys_report_both_locations():
    with pytest.raises(ValidationError) as excinfo:
        parse_model(DUPLICATE_KEY)
    assert ("duplicate key 'name' at line 2, column 3 and line 3, column 3"
            in str(excinfo.value))


def test_duplicate_variable_names():
    with pytest.raises(ValidationError) as excinfo:
        parse_model(DUPLICATE_VARIABLE)
    assert ("duplicate variable name X (declared at line 6, column 5 and "
            "line 7, column 5)" in str(excinfo.value))


def test_unknown_keys_are_rejected():
    document = _chain_document()
    document['variables'][0]['parent'] = []
    with pytest.raises(ValidationError, match="unknown key 'parent'"):
        parse_model(json.dumps(document, indent=2))


def test_type_errors_are_collected():
    document = _chain_document()
    document['variables'][0]['domain'] = "01"
    document['variables'][1]['observable'] = "yes"
    with pytest.raises(ValidationError) as excinfo:
        parse_model(json.dumps(document, indent=2))
    assert len(excinfo.value.violations) == 2


def test_semantic_errors_are_located():
    document = _chain_document()
    del document['variables'][2]['table']['1,1']
    with pytest.raises(ValidationError,
            match=r"line \d+, column \d+: table not total: Y has no entry"):
        parse_model(json.dumps(document, indent=2))


def test_exogenous_mass_error():
    document = _chain_document()
    document['exogenous'][0]['marginal'] = {"0": 0.4, "1": 0.5}
    with pytest.raises(ValidationError, match="exogenous mass 0.9 ≠ 1"):
        parse_model(json.dumps(document, indent=2))


def test_unknown_parent_is_reported():
    document = _chain_document()
    document['variables'][1]['parents'] = ['Q']
    with pytest.raises(ValidationError, match="Unknown endogenous parent Q"):
        parse_model(json.dumps(document, indent=2))


def test_locations():
    document = parse_model(CHAIN_MODEL)
    assert document.locations[('variables', 'X')] == (8, 5)
    assert ('variables', 'Y', 'table') in document.locations


def test_joint_exogenous_and_numeric_code():
    scm = parse_model(JOINT_MODEL).scm
    assert not scm.is_markovian()
    assert scm.domain('Y').numeric_code == {'lo': 0.0, 'hi': 10.0}
    distribution = scm.exact_distribution()
    assert distribution.prob({'Y': 'hi'}) == pytest.approx(0.2)


def test_dump_is_canonical(models):
    for scm in list(models.values()) + [parse_model(JOINT_MODEL).scm]:
        text = dump_model(scm)
        assert text.endswith("\n")
        assert list(json.loads(text)) == ['name', 'exogenous', 'variables']
        assert dump_model(parse_model(text).scm) == text
    dumped = json.loads(dump_model(parse_model(JOINT_MODEL).scm))
    assert dumped['variables'][1]['numeric_code'] == {'lo': 0.0, 'hi': 10.0}
    assert 'numeric_code' not in dumped['variables'][0]


def test_model_directory(tmp_path):
    (tmp_path / 'chain.json').write_text(CHAIN_MODEL)
    loader = JSONModelLoader(model_directory=str(tmp_path))
    assert loader.available_models() == ['chain']
    assert loader.load('chain').scm.endogenous == ('X', 'Z', 'Y')
    assert loader.load(str(tmp_path / 'chain.json')).scm.name == 'chain'


def test_model_file_must_be_utf8(loader, tmp_path):
    path = tmp_path / 'latin1.json'
    path.write_bytes(CHAIN_MODEL.replace('"chain"', '"ch\xe4in"').encode(
        'latin-1'))
    with pytest.raises(ValidationError, match="not UTF-8 text, byte 0xe4"):
        loader.load(str(path))


def test_numeric_code_must_be_an_object():
    document = _chain_document()
    document['variables'][2]['numeric_code'] = [0, 1]
    with pytest.raises(ValidationError,
            match="expected an object of numeric codes"):
        parse_model(json.dumps(document, indent=2))
