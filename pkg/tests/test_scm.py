from collections import OrderedDict
import math

import numpy as np
import pandas as pd
import pytest

from cfmediate.exceptions import CapacityError, ValidationError, ZeroMassError
from cfmediate.model_loading import parse_model
from cfmediate.scm import (Dataset, DomainSpec, ExogenousSpace, PathSubgraph,
    Regime, Scm, StructuralEquation, format_assignment, outcome_coding,
    parse_assignment)

from conftest import CHAIN_MODEL

BINARY = DomainSpec(['0', '1'])


def _identity_model(x_table=None, y_parents=('X',), y_table=None):
    exogenous = ExogenousSpace.from_marginals(
            OrderedDict([('U', BINARY)]),
            {'U': {'0': 0.5, '1': 0.5}})
    equations = [
            StructuralEquation('X', BINARY, [], ['U'],
                x_table or {'0': '0', '1': '1'}),
            StructuralEquation('Y', BINARY, y_parents, [],
                y_table or {'0': '1', '1': '0'})
            ]
    return Scm(exogenous, equations, name='identity')


def test_domain_spec():
    domain = DomainSpec(['a', 'b', 'c'])
    assert domain.numeric_code == {'a': 0.0, 'b': 1.0, 'c': 2.0}
    assert domain.has_default_coding()
    coded = DomainSpec(['lo', 'hi'], {'hi': 10})
    assert coded.numeric_code['hi'] == 10.0
    assert not coded.has_default_coding()
    with pytest.raises(ValidationError, match="Duplicate"):
        DomainSpec(['a', 'a'])
    with pytest.raises(ValidationError, match="comma"):
        DomainSpec(['a,b'])
    with pytest.raises(ValidationError):
        DomainSpec([])


def test_outcome_coding():
    assert outcome_coding(BINARY) == {'0': 0.0, '1': 1.0}
    assert outcome_coding(DomainSpec(['a', 'b']), 'a') == {'a': 1.0, 'b': 0.0}
    with pytest.raises(ValidationError, match="Indicator"):
        outcome_coding(BINARY, '2')


def test_assignments_and_regimes():
    assert parse_assignment("X=1, Z=0") == OrderedDict([('X', '1'),
        ('Z', '0')])
    assert format_assignment(parse_assignment("X=1,Z=0")) == "X=1,Z=0"
    with pytest.raises(ValidationError, match="assigned twice"):
        parse_assignment("X=1,X=0")
    with pytest.raises(ValidationError, match="expected VAR=value"):
        parse_assignment("X")

    regime = Regime.parse("do:X=1;randomize:Z")
    assert regime.fixings == {'X': '1'}
    assert regime.randomized == ('Z',)
    assert str(regime) == "do:X=1;randomize:Z"
    assert Regime.parse("observational").is_observational
    assert Regime({'X': 1}) == Regime.parse("do:X=1")
    with pytest.raises(ValidationError, match="both fixed and randomized"):
        Regime({'X': '1'}, ['X'])
    with pytest.raises(ValidationError):
        Regime.parse("intervene:X=1")


def test_path_subgraph_parse():
    g = PathSubgraph.parse("X->Z, Z->Y")
    assert ('X', 'Z') in g
    assert str(g) == "X->Z,Z->Y"
    with pytest.raises(ValidationError, match="PARENT->CHILD"):
        PathSubgraph.parse("X-Z")


def test_validation_reports_every_problem():
    scm = _identity_model(y_table={'0': '1'})
    messages = [v.message for v in scm.validate()]
    assert any(m.startswith("table not total") for m in messages)
    with pytest.raises(ValidationError, match="table not total"):
        scm.evaluate({'U': '0'})

    scm = _identity_model(y_parents=('W',))
    assert any("Unknown endogenous parent W" in v.message
            for v in scm.validate())


def test_cycle_detected():
    exogenous = ExogenousSpace.from_marginals(OrderedDict([('U', BINARY)]),
            {'U': {'0': 1.0}})
    equations = [
            StructuralEquation('A', BINARY, ['B'], [], {'0': '0', '1': '1'}),
            StructuralEquation('B', BINARY, ['A'], [], {'0': '0', '1': '1'})
            ]
    violations = Scm(exogenous, equations).validate()
    assert any(v.message.startswith("cycle detected: A -> B -> A")
            or v.message.startswith("cycle detected: B -> A -> B")
            for v in violations)


def test_exogenous_mass_must_sum_to_one():
    space = ExogenousSpace.from_marginals(OrderedDict([('U', BINARY)]),
            {'U': {'0': 0.5, '1': 0.6}})
    assert any("exogenous mass 1.1 ≠ 1" in v.message
            for v in space.violations())
    joint = ExogenousSpace(OrderedDict([('U', BINARY)]), {'0': 0.2})
    assert any("exogenous mass 0.2 ≠ 1" in v.message
            for v in joint.violations())


def test_exogenous_blocks():
    variables = OrderedDict([('A', BINARY), ('B', BINARY), ('C', BINARY)])
    # A independent of (B, C); B and C perfectly correlated
    joint = OrderedDict()
    for a, pa in (('0', 0.3), ('1', 0.7)):
        joint[(a, '0', '0')] = pa * 0.5
        joint[(a, '1', '1')] = pa * 0.5
    space = ExogenousSpace(variables, joint)
    assert space.blocks() == [('A',), ('B', 'C')]
    assert space.support_size() == 4
    assert space.support()[0] == (('0', '0', '0'), 0.15)


def test_induced_graph_and_markovianity(chain):
    graph = chain.induced_graph
    assert set(graph.exogenous) == {'U_X', 'U_Y'}
    assert graph.has_edge('U_X', 'X')
    assert graph.has_edge('X', 'Z')
    assert graph.observed == frozenset(['X', 'Z', 'Y'])
    assert chain.is_markovian()
    assert chain.endogenous == ('X', 'Z', 'Y')


def test_shared_noise_is_not_markovian():
    exogenous = ExogenousSpace.from_marginals(OrderedDict([('U', BINARY)]),
            {'U': {'0': 0.5, '1': 0.5}})
    equations = [
            StructuralEquation('X', BINARY, [], ['U'], {'0': '0', '1': '1'}),
            StructuralEquation('Y', BINARY, ['X'], ['U'],
                {'0,0': '0', '0,1': '1', '1,0': '1', '1,1': '1'})
            ]
    scm = Scm(exogenous, equations)
    assert not scm.is_markovian()
    assert scm.induced_graph.has_edge('U', 'Y')


def test_correlated_noise_becomes_one_block():
    variables = OrderedDict([('U_X', BINARY), ('U_Y', BINARY)])
    joint = {'0,0': 0.5, '1,1': 0.5}
    equations = [
            StructuralEquation('X', BINARY, [], ['U_X'], {'0': '0', '1': '1'}),
            StructuralEquation('Y', BINARY, ['X'], ['U_Y'],
                {'0,0': '0', '0,1': '1', '1,0': '1', '1,1': '0'})
            ]
    scm = Scm(ExogenousSpace(variables, joint), equations)
    assert not scm.is_markovian()
    graph = scm.induced_graph
    assert graph.has_edge('U_X__U_Y', 'X')
    assert graph.has_edge('U_X__U_Y', 'Y')


def test_evaluate(chain):
    assert chain.evaluate({'U_X': '0', 'U_Y': '0'}) == {'X': '0', 'Z': '1',
            'Y': '1'}
    assert chain.evaluate(('1', '1'), {'Z': '1'}) == {'X': '1', 'Z': '1',
            'Y': '0'}
    with pytest.raises(ValidationError, match="incomplete unit"):
        chain.evaluate({'U_X': '0'})
    with pytest.raises(ValidationError, match="drawn before"):
        chain.evaluate(('0', '0'), Regime(randomized=['X']))
    with pytest.raises(ValidationError, match="not in the domain"):
        chain.evaluate(('0', '0'), {'X': '2'})


def test_nested_outcome(chain):
    unit = {'U_X': '0', 'U_Y': '0'}
    # Z held at its value under X=1 (0), so Y = 0
    assert chain.nested_outcome(unit, 'X', '0', '1', ['Z'], 'Y') == '0'
    assert chain.nested_outcome(unit, 'X', '1', '0', ['Z'], 'Y') == '1'
    with pytest.raises(ValidationError, match="must not be empty"):
        chain.nested_outcome(unit, 'X', '0', '1', [], 'Y')
    with pytest.raises(ValidationError, match="Outcome Y is in the mediator"):
        chain.nested_outcome(unit, 'X', '0', '1', ['Y'], 'Y')
    with pytest.raises(ValidationError, match="Treatment X is in the mediator"):
        chain.nested_outcome(unit, 'X', '0', '1', ['X'], 'Y')


def test_composition(chain):
    for unit, _ in chain.enumerate_units():
        for x in ('0', '1'):
            assert chain.nested_outcome(unit, 'X', x, x, ['Z'], 'Y') == \
                    chain.evaluate(unit, {'X': x})['Y']


def test_exact_distribution(chain):
    distribution = chain.exact_distribution()
    assert distribution.total() == pytest.approx(1.0)
    assert distribution.support[0] == ('0', '1', '0')
    assert distribution.prob({'Y': '1'}) == pytest.approx(0.42)
    assert distribution.prob({'Y': '1'}, {'X': '0'}) == pytest.approx(0.9)
    intervened = chain.exact_distribution({'Z': '0'}, over=['Y'])
    assert intervened.prob({'Y': '1'}) == pytest.approx(0.1)
    randomized = chain.exact_distribution(Regime(randomized=['Z']),
            over=['Z', 'Y'])
    assert randomized.prob({'Z': '1'}) == pytest.approx(0.5)
    with pytest.raises(ZeroMassError):
        chain.exact_distribution({'X': '1'}).prob({'Y': '1'}, {'X': '0'})


def test_information_measures(chain):
    distribution = chain.exact_distribution()
    assert distribution.mutual_information(['X'], ['Y'], ['Z']) == \
            pytest.approx(0.0, abs=1e-12)
    h_x = -(0.4 * math.log(0.4) + 0.6 * math.log(0.6))
    assert distribution.mutual_information(['X'], ['Z']) == pytest.approx(h_x)


def test_expectation_with_numeric_code():
    exogenous = ExogenousSpace.from_marginals(OrderedDict([('U', BINARY)]),
            {'U': {'0': 0.25, '1': 0.75}})
    domain = DomainSpec(['lo', 'hi'], {'lo': -1, 'hi': 3})
    scm = Scm(exogenous, [StructuralEquation('Y', domain, [], ['U'],
        {'0': 'lo', '1': 'hi'})])
    distribution = scm.exact_distribution()
    assert distribution.expectation('Y', domain.numeric_code) == \
            pytest.approx(-0.25 + 2.25)


def test_capacity_cap():
    variables = OrderedDict([('U_X', BINARY), ('U_Y', BINARY)])
    exogenous = ExogenousSpace.from_marginals(variables,
            {'U_X': {'0': 0.5, '1': 0.5}, 'U_Y': {'0': 0.5, '1': 0.5}})
    equations = [
            StructuralEquation('X', BINARY, [], ['U_X'], {'0': '0', '1': '1'}),
            StructuralEquation('Y', BINARY, [], ['U_Y'], {'0': '0', '1': '1'})
            ]
    scm = Scm(exogenous, equations, unit_cap=3)
    with pytest.raises(CapacityError, match="exceeds the cap"):
        scm.get_metadata()
    with pytest.raises(ValidationError, match="Parent domain product"):
        parse_model(CHAIN_MODEL, unit_cap=3).scm.get_metadata()


def test_sample_is_reproducible(chain):
    first = chain.sample(500, seed=11)
    second = chain.sample(500, seed=11)
    pd.testing.assert_frame_equal(first.frame, second.frame)
    assert list(first.columns) == ['X', 'Z', 'Y']
    assert first.seed == 11
    assert first.regime.is_observational


def test_sample_under_regimes(chain):
    fixed = chain.sample(200, seed=0, regime=Regime.parse("do:X=1"))
    assert (fixed.frame['X'] == '1').all()
    assert (fixed.frame['Z'] == '0').all()
    randomized = chain.sample(200, seed=0,
            regime=Regime.parse("randomize:X"))
    assert set(randomized.frame['X']) == {'0', '1'}
    with pytest.raises(ValidationError, match="at least 1"):
        chain.sample(0)


def test_sample_frequencies_approach_exact_distribution(chain):
    dataset = chain.sample(20000, seed=5)
    frequency = np.mean(dataset.frame['Y'] == '1')
    assert frequency == pytest.approx(0.42, abs=0.02)


def test_dataset_checks_domains(chain):
    frame = pd.DataFrame({'X': ['0', '1', '2']})
    with pytest.raises(ValidationError, match="Row 3 column X"):
        Dataset(frame, domains=chain.domains)
    dataset = Dataset(pd.DataFrame({'X': [0, 1]}), domains=chain.domains)
    assert dataset.rows == [{'X': '0'}, {'X': '1'}]


def test_surgery_argument_checks(chain):
    with pytest.raises(ValidationError, match="not in the induced graph"):
        chain.surgery([('X', 'Y')], 'X', '1', '0')
    with pytest.raises(ValidationError, match="Value .2. is not in"):
        chain.surgery([('X', 'Z')], 'X', '2', '0')
    with pytest.raises(ValidationError, match="Reference value .2."):
        chain.surgery([('X', 'Z')], 'X', '1', '2')


def test_metadata(chain):
    metadata = chain.get_metadata()
    assert metadata['name'] == 'chain'
    assert metadata['num_units'] == 4
    assert metadata['markovian']
