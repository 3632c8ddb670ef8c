from itertools import permutations

import numpy as np
import pytest

from cfmediate.effects import (EffectQuery, EffectWitness, cde_avg,
    compute_effect, default_mediators, has_effect, nde_avg, nde_unit, nie_avg,
    nie_unit, pse, te_avg, te_decomposition, te_unit)
from cfmediate.exceptions import ValidationError
from cfmediate.random_models import random_linear_scm, random_scm


def test_fixture_a(models):
    scm = models['fixtureA']
    assert te_avg(scm, 'X', '1', '0', 'Y') == pytest.approx(1.0)
    assert nde_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.0)
    assert nie_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.0)
    assert cde_avg(scm, 'X', '1', '0', {'Z': '1'}, 'Y') == pytest.approx(1.0)
    assert cde_avg(scm, 'X', '1', '0', {'Z': '0'}, 'Y') == pytest.approx(0.0)


def test_fixture_b(models):
    scm = models['fixtureB']
    assert nde_avg(scm, 'X', '1', '0', None, 'Y') == pytest.approx(1.0)
    assert nie_avg(scm, 'X', '1', '0', None, 'Y') == pytest.approx(2.0)
    assert te_avg(scm, 'X', '1', '0', 'Y') == pytest.approx(3.0)


def test_fixture_c_discrimination_masked_in_total_effect(models):
    scm = models['fixtureC']
    assert te_avg(scm, 'X', 'female', 'male', 'Y') == pytest.approx(0.0)
    assert nde_avg(scm, 'X', 'female', 'male', None, 'Y') == \
            pytest.approx(-0.25)
    assert nie_avg(scm, 'X', 'female', 'male', None, 'Y') == \
            pytest.approx(0.125)
    assert cde_avg(scm, 'X', 'female', 'male', {'Z': 'low'}, 'Y') == \
            pytest.approx(-0.5)
    assert cde_avg(scm, 'X', 'female', 'male', {'Z': 'high'}, 'Y') == \
            pytest.approx(0.0)
    # a low-qualified man hired on his coin flip
    unit = {'U_X': '0', 'U_Z': '0', 'U_Y': '1'}
    existence = has_effect(scm, 'natural_direct', unit, 'X', 'Y')
    assert existence.present
    assert existence.witness == EffectWitness('female', 'male', None)


def test_fixture_d_path_specific_effect(models):
    scm = models['fixtureD']
    g = [('X', 'Z'), ('Z', 'W'), ('W', 'Y')]
    assert pse(scm, g, 'X', '1', '0', 'Y') == pytest.approx(2.0)
    assert te_avg(scm, 'X', '1', '0', 'Y') == pytest.approx(5.0)
    assert default_mediators(scm, 'X', 'Y') == ('Z', 'W')
    assert nde_avg(scm, 'X', '1', '0', None, 'Y') == pytest.approx(0.0)
    assert nie_avg(scm, 'X', '1', '0', None, 'Y') == pytest.approx(5.0)


def test_fixture_e(models):
    scm = models['fixtureE']
    assert nde_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.5)
    assert nie_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.5)


def test_fixture_f(models):
    scm = models['fixtureF']
    assert te_avg(scm, 'X', '1', '0', 'Y') == pytest.approx(0.70)
    assert nde_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.62)
    assert nie_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(0.32)
    assert nie_avg(scm, 'X', '0', '1', ['Z'], 'Y') == pytest.approx(-0.08)


def test_path_specific_reductions(models):
    scm = models['fixtureF']
    edges = [('X', 'Z'), ('X', 'Y'), ('Z', 'Y')]
    assert pse(scm, [('X', 'Y')], 'X', '1', '0', 'Y') == \
            pytest.approx(nde_avg(scm, 'X', '1', '0', ['Z'], 'Y'))
    assert pse(scm, [('X', 'Z'), ('Z', 'Y')], 'X', '1', '0', 'Y') == \
            pytest.approx(nie_avg(scm, 'X', '1', '0', ['Z'], 'Y'))
    assert pse(scm, edges, 'X', '1', '0', 'Y') == \
            pytest.approx(te_avg(scm, 'X', '1', '0', 'Y'))
    assert pse(scm, [], 'X', '1', '0', 'Y') == pytest.approx(0.0)


def test_null_transition(models):
    scm = models['fixtureF']
    assert te_avg(scm, 'X', '1', '1', 'Y') == 0.0
    assert nde_avg(scm, 'X', '0', '0', ['Z'], 'Y') == 0.0
    assert nie_avg(scm, 'X', '1', '1', ['Z'], 'Y') == 0.0
    assert cde_avg(scm, 'X', '1', '1', {'Z': '0'}, 'Y') == 0.0


def test_indicator_scale(models):
    scm = models['fixtureB']
    assert te_avg(scm, 'X', '1', '0', 'Y', indicator='3') == pytest.approx(1.0)
    assert te_avg(scm, 'X', '1', '0', 'Y', indicator='0') == \
            pytest.approx(-1.0)
    with pytest.raises(ValidationError, match="Indicator"):
        te_avg(scm, 'X', '1', '0', 'Y', indicator='7')


def test_has_effect(models):
    scm = models['fixtureA']
    unit = {'U_X': '0'}
    controlled = has_effect(scm, 'controlled_direct', unit, 'X', 'Y')
    assert controlled.present
    assert controlled.witness == EffectWitness('1', '0', {'Z': '1'})

    natural = has_effect(scm, 'natural_direct', unit, 'X', 'Y')
    assert not natural.present
    assert natural.witness is None
    searched = has_effect(scm, 'natural_direct', unit, 'X', 'Y',
            search_all_references=True)
    assert searched.present
    assert searched.witness == EffectWitness('0', '1', None)

    assert not has_effect(scm, 'indirect', unit, 'X', 'Y').present
    assert has_effect(scm, 'indirect', unit, 'X', 'Y',
            search_all_references=True).present
    with pytest.raises(ValidationError, match="Invalid effect kind"):
        has_effect(scm, 'total', unit, 'X', 'Y')


def test_compute_effect_reports(models):
    scm = models['fixtureF']
    report = compute_effect(scm, EffectQuery('te', 'X', '1', '0', 'Y'),
            per_unit=True)
    assert report.value == pytest.approx(0.70)
    assert len(report.unit_values) == 8
    assert sum(p * v for _, p, v in report.unit_values) == \
            pytest.approx(report.value)
    assert report.decomposition['holds']
    assert report.decomposition['te_via_nie'] == pytest.approx(0.70)

    nde = compute_effect(scm, EffectQuery('nde', 'X', '1', '0', 'Y'))
    assert nde.label == 'direct/indirect'
    assert nde.unit_values is None

    unit = {'U_Y': '0', 'U_Z': '0', 'U_X': '0'}
    single = compute_effect(scm, EffectQuery('te', 'X', '1', '0', 'Y'),
            unit=unit)
    assert single.value == 1


def test_compute_effect_validation(models):
    scm = models['fixtureF']
    with pytest.raises(ValidationError, match="requires a mediator setting"):
        compute_effect(scm, EffectQuery('cde', 'X', '1', '0', 'Y'))
    with pytest.raises(ValidationError, match="only accepted for effect kind"):
        compute_effect(scm, EffectQuery('nde', 'X', '1', '0', 'Y',
            z_setting={'Z': '0'}))
    with pytest.raises(ValidationError, match="mediator set is only accepted"):
        compute_effect(scm, EffectQuery('te', 'X', '1', '0', 'Y', ('Z',)))
    with pytest.raises(ValidationError, match="requires a subgraph"):
        compute_effect(scm, EffectQuery('pse', 'X', '1', '0', 'Y'))
    with pytest.raises(ValidationError, match="same variable"):
        compute_effect(scm, EffectQuery('te', 'X', '1', '0', 'X'))
    with pytest.raises(ValidationError, match="not in the domain"):
        compute_effect(scm, EffectQuery('te', 'X', '2', '0', 'Y'))
    with pytest.raises(ValidationError, match="fix the treatment"):
        cde_avg(scm, 'X', '1', '0', {'X': '0'}, 'Y')


def test_outcome_without_other_parents_needs_mediators(chain):
    with pytest.raises(ValidationError, match="supply a mediator set"):
        nde_avg(chain, 'X', '1', '0', None, 'Z')


@pytest.mark.slow
def test_total_effect_decomposition_on_random_models():
    rng = np.random.default_rng(2024)
    for i in range(200):
        scm = random_scm(rng, n_endogenous=int(rng.integers(3, 6)),
                max_domain=3, markovian=i % 2 == 0)
        for x, x_ref in permutations(scm.domain('X').values, 2):
            decomposition = te_decomposition(scm, 'X', x, x_ref, 'Y')
            total = te_avg(scm, 'X', x, x_ref, 'Y')
            assert decomposition['holds']
            assert decomposition['te_via_nie'] == pytest.approx(total,
                    abs=1e-9)
            assert decomposition['te_via_nde'] == pytest.approx(total,
                    abs=1e-9)
            assert te_avg(scm, 'X', x_ref, x, 'Y') == pytest.approx(-total,
                    abs=1e-9)


def test_path_specific_reductions_on_random_models():
    rng = np.random.default_rng(99)
    for i in range(30):
        scm = random_scm(rng, n_endogenous=int(rng.integers(3, 6)),
                max_domain=3, markovian=i % 2 == 0)
        Zset = default_mediators(scm, 'X', 'Y')
        edges = [(p, c) for c in scm.endogenous for p in scm.parents(c)]
        indirect = [edge for edge in edges if edge != ('X', 'Y')]
        x, x_ref = scm.domain('X').values[:2]
        assert pse(scm, [('X', 'Y')], 'X', x, x_ref, 'Y') == pytest.approx(
                nde_avg(scm, 'X', x, x_ref, Zset, 'Y'), abs=1e-9)
        assert pse(scm, indirect, 'X', x, x_ref, 'Y') == pytest.approx(
                nie_avg(scm, 'X', x, x_ref, Zset, 'Y'), abs=1e-9)
        direct_model = scm.surgery([('X', 'Y')], 'X', x, x_ref)
        indirect_model = scm.surgery(indirect, 'X', x, x_ref)
        for unit, _ in scm.enumerate_units():
            assert te_unit(direct_model, unit, 'X', x, x_ref, 'Y') == \
                    nde_unit(scm, unit, 'X', x, x_ref, Zset, 'Y')
            assert te_unit(indirect_model, unit, 'X', x, x_ref, 'Y') == \
                    nie_unit(scm, unit, 'X', x, x_ref, Zset, 'Y')


def test_linear_models():
    rng = np.random.default_rng(3)
    for _ in range(20):
        scm = random_linear_scm(rng)
        a, b, c = scm.coefficients
        assert nde_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(a)
        assert nie_avg(scm, 'X', '1', '0', ['Z'], 'Y') == pytest.approx(b * c)
        assert te_avg(scm, 'X', '1', '0', 'Y') == pytest.approx(a + b * c)
