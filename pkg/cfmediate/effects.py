from collections import namedtuple, OrderedDict
from itertools import product
import logging

from cfmediate.exceptions import ValidationError
from cfmediate.graph import mediator_set_label
from cfmediate.scm import PathSubgraph, format_assignment, outcome_coding

logger = logging.getLogger(__name__)

EFFECT_KINDS = ['cde', 'nde', 'nie', 'te', 'pse']
EFFECT_EXISTENCE_KINDS = ['controlled_direct', 'natural_direct', 'indirect']

METHOD = 'ground-truth enumeration'

IDENTITY_TOLERANCE = 1e-9

EffectQuery = namedtuple('EffectQuery', ['kind', 'X', 'x', 'x_ref', 'Y',
    'Zset', 'z_setting', 'subgraph', 'indicator'])
EffectQuery.__new__.__defaults__ = (None, None, None, None)

# value: population value, or the value for the requested unit
# unit_values: list of (unit, probability, value) for per-unit tables
EffectReport = namedtuple('EffectReport', ['query', 'value', 'unit_values',
    'method', 'decomposition', 'label'])

EffectWitness = namedtuple('EffectWitness', ['x', 'x_ref', 'z'])
EffectExistence = namedtuple('EffectExistence', ['present', 'witness'])


def default_mediators(scm, X, Y):
    """All parents of Y except X."""
    return tuple(p for p in scm.parents(Y) if p != X)


def _mediators(scm, X, Y, Zset):
    if Zset is None:
        Zset = default_mediators(scm, X, Y)
        if not Zset:
            raise ValidationError("Outcome {} has no parents besides {}; "
                    "supply a mediator set".format(Y, X))
    return tuple(Zset)


def _coding(scm, Y, indicator):
    return outcome_coding(scm.domain(Y), indicator)


def _z_setting(scm, X, Y, z_setting):
    if not z_setting:
        raise ValidationError("A controlled direct effect needs a mediator "
                "setting z")
    for name, value in z_setting.items():
        if name in (X, Y):
            raise ValidationError("Mediator setting must not fix the treatment "
                    "or the outcome: {}".format(name))
        scm._endogenous(name, "mediator")
        scm._value(name, value, "mediator value")
    return OrderedDict(z_setting)


def _outcome(scm, unit, fixings, Y):
    return scm.evaluate(unit, fixings)[Y]


def cde_unit(scm, unit, X, x, x_ref, z_setting, Y, indicator=None):
    z = _z_setting(scm, X, Y, z_setting)
    coding = _coding(scm, Y, indicator)
    treated = OrderedDict([(X, x)])
    treated.update(z)
    reference = OrderedDict([(X, x_ref)])
    reference.update(z)
    return (coding[_outcome(scm, unit, treated, Y)]
            - coding[_outcome(scm, unit, reference, Y)])


def nde_unit(scm, unit, X, x, x_ref, Zset, Y, indicator=None):
    Zset = _mediators(scm, X, Y, Zset)
    coding = _coding(scm, Y, indicator)
    return (coding[scm.nested_outcome(unit, X, x, x_ref, Zset, Y)]
            - coding[_outcome(scm, unit, {X: x_ref}, Y)])


def nie_unit(scm, unit, X, x, x_ref, Zset, Y, indicator=None):
    Zset = _mediators(scm, X, Y, Zset)
    coding = _coding(scm, Y, indicator)
    return (coding[scm.nested_outcome(unit, X, x_ref, x, Zset, Y)]
            - coding[_outcome(scm, unit, {X: x_ref}, Y)])


def te_unit(scm, unit, X, x, x_ref, Y, indicator=None):
    coding = _coding(scm, Y, indicator)
    return (coding[_outcome(scm, unit, {X: x}, Y)]
            - coding[_outcome(scm, unit, {X: x_ref}, Y)])


def pse_unit(scm, unit, g, X, x, x_ref, Y, indicator=None):
    modified = scm.surgery(g, X, x, x_ref)
    return te_unit(modified, unit, X, x, x_ref, Y, indicator)


# Probability-weighted sum over the enumerated units, accumulated in
# enumeration order
def _average(scm, term):
    total = 0.0
    for unit, p in scm.enumerate_units():
        total += p * term(unit)
    return total


def cde_avg(scm, X, x, x_ref, z_setting, Y, indicator=None):
    return _average(scm, lambda u: cde_unit(scm, u, X, x, x_ref, z_setting, Y,
        indicator))


def nde_avg(scm, X, x, x_ref, Zset, Y, indicator=None):
    return _average(scm, lambda u: nde_unit(scm, u, X, x, x_ref, Zset, Y,
        indicator))


def nie_avg(scm, X, x, x_ref, Zset, Y, indicator=None):
    return _average(scm, lambda u: nie_unit(scm, u, X, x, x_ref, Zset, Y,
        indicator))


def te_avg(scm, X, x, x_ref, Y, indicator=None):
    return _average(scm, lambda u: te_unit(scm, u, X, x, x_ref, Y, indicator))


def pse(scm, g, X, x, x_ref, Y, unit=None, indicator=None):
    """Path-specific effect of x (against x_ref) on Y transmitted along the
    edge-subgraph g: the total effect in the model obtained by surgery.

    :param unit: evaluate for this unit; None gives the P(u)-weighted average
    """
    if not isinstance(g, PathSubgraph):
        g = PathSubgraph(g)
    modified = scm.surgery(g, X, x, x_ref)
    if unit is not None:
        return te_unit(modified, unit, X, x, x_ref, Y, indicator)
    return te_avg(modified, X, x, x_ref, Y, indicator)


def has_effect(scm, kind, unit, X, Y, Zset=None, search_all_references=False,
        indicator=None):
    """Existential effect test for one unit.

    The reference value is the unit's factual value of X unless
    search_all_references is set, in which case every ordered pair of
    distinct values is tried. Values are visited in declared domain order and
    the first witness is returned.
    """
    if kind not in EFFECT_EXISTENCE_KINDS:
        raise ValidationError("Invalid effect kind: {}. Select one of "
                "{}.".format(kind, EFFECT_EXISTENCE_KINDS))
    X = scm._endogenous(X, "treatment")
    Y = scm._endogenous(Y, "outcome")
    Zset = _mediators(scm, X, Y, Zset)
    domain = scm.domain(X)
    if search_all_references:
        references = list(domain)
    else:
        references = [scm.evaluate(unit)[X]]

    for x_ref in references:
        for x in domain:
            if x == x_ref:
                continue
            if kind == 'controlled_direct':
                settings = product(*[scm.domain(z).values for z in Zset])
                for values in settings:
                    z = OrderedDict(zip(Zset, values))
                    if cde_unit(scm, unit, X, x, x_ref, z, Y, indicator) != 0:
                        return EffectExistence(True, EffectWitness(x, x_ref, z))
            elif kind == 'natural_direct':
                if nde_unit(scm, unit, X, x, x_ref, Zset, Y, indicator) != 0:
                    return EffectExistence(True, EffectWitness(x, x_ref, None))
            elif nie_unit(scm, unit, X, x, x_ref, Zset, Y, indicator) != 0:
                return EffectExistence(True, EffectWitness(x, x_ref, None))
    return EffectExistence(False, None)


def validate_query(scm, query):
    if query.kind not in EFFECT_KINDS:
        raise ValidationError("Invalid effect kind: {}. Select one of "
                "{}.".format(query.kind, EFFECT_KINDS))
    scm._endogenous(query.X, "treatment")
    scm._endogenous(query.Y, "outcome")
    if query.X == query.Y:
        raise ValidationError("Treatment and outcome are the same variable: "
                "{}".format(query.X))
    scm._value(query.X, query.x)
    scm._value(query.X, query.x_ref, "reference value")
    if query.kind == 'cde':
        if query.z_setting is None:
            raise ValidationError("Effect kind cde requires a mediator setting")
    elif query.z_setting is not None:
        raise ValidationError("A mediator setting is only accepted for effect "
                "kind cde")
    if query.kind == 'pse':
        if query.subgraph is None:
            raise ValidationError("Effect kind pse requires a subgraph")
    elif query.subgraph is not None:
        raise ValidationError("A subgraph is only accepted for effect kind pse")
    if query.Zset is not None and query.kind not in ('nde', 'nie'):
        raise ValidationError("A mediator set is only accepted for effect "
                "kinds nde and nie")


def _unit_term(scm, query):
    kind, X, x, x_ref, Y = query.kind, query.X, query.x, query.x_ref, query.Y
    if kind == 'cde':
        return lambda u: cde_unit(scm, u, X, x, x_ref, query.z_setting, Y,
                query.indicator)
    elif kind == 'nde':
        return lambda u: nde_unit(scm, u, X, x, x_ref, query.Zset, Y,
                query.indicator)
    elif kind == 'nie':
        return lambda u: nie_unit(scm, u, X, x, x_ref, query.Zset, Y,
                query.indicator)
    elif kind == 'te':
        return lambda u: te_unit(scm, u, X, x, x_ref, Y, query.indicator)
    modified = scm.surgery(query.subgraph, X, x, x_ref)
    return lambda u: te_unit(modified, u, X, x, x_ref, Y, query.indicator)


# Total effect decompositions TE(x,x*) = NIE(x,x*) - NDE(x*,x) and
# TE(x,x*) = NDE(x,x*) - NIE(x*,x) over the default mediator set
def te_decomposition(scm, X, x, x_ref, Y, indicator=None):
    Zset = default_mediators(scm, X, Y)
    if not Zset:
        return None
    total = te_avg(scm, X, x, x_ref, Y, indicator)
    nde_forward = nde_avg(scm, X, x, x_ref, Zset, Y, indicator)
    nde_reverse = nde_avg(scm, X, x_ref, x, Zset, Y, indicator)
    nie_forward = nie_avg(scm, X, x, x_ref, Zset, Y, indicator)
    nie_reverse = nie_avg(scm, X, x_ref, x, Zset, Y, indicator)
    by_indirect = nie_forward - nde_reverse
    by_direct = nde_forward - nie_reverse
    return OrderedDict([
        ('mediators', list(Zset)),
        ('nde', nde_forward),
        ('nie', nie_forward),
        ('nde_reversed', nde_reverse),
        ('nie_reversed', nie_reverse),
        ('te_via_nie', by_indirect),
        ('te_via_nde', by_direct),
        ('holds', abs(total - by_indirect) <= IDENTITY_TOLERANCE
            and abs(total - by_direct) <= IDENTITY_TOLERANCE)
        ])


def compute_effect(scm, query, unit=None, per_unit=False):
    """Evaluate an EffectQuery by enumeration.

    :param unit: report the effect for this single unit
    :param per_unit: also return the per-unit table over all units
    """
    validate_query(scm, query)
    term = _unit_term(scm, query)

    unit_values = None
    if unit is not None:
        unit = scm._unit_values(unit)
        value = term(unit)
    else:
        rows = [(u, p, term(u)) for u, p in scm.enumerate_units()]
        value = 0.0
        for _, p, v in rows:
            value += p * v
        if per_unit:
            unit_values = rows

    decomposition = None
    if query.kind == 'te' and unit is None:
        decomposition = te_decomposition(scm, query.X, query.x, query.x_ref,
                query.Y, query.indicator)
        if decomposition is not None and not decomposition['holds']:
            logger.warning("Total effect decomposition identities do not hold "
                    "for {}".format(scm.name))

    label = None
    if query.kind in ('nde', 'nie'):
        Zset = _mediators(scm, query.X, query.Y, query.Zset)
        label = mediator_set_label(scm.induced_graph, query.X, Zset, query.Y)

    logger.debug("{} of {} on {} ({} vs {}){}: {}".format(
        query.kind.upper(), query.X, query.Y, query.x, query.x_ref,
        "" if unit is None else " for unit " + format_assignment(unit), value))
    return EffectReport(query, value, unit_values, METHOD, decomposition, label)
