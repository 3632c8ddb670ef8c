from collections import OrderedDict
from itertools import combinations, product
import logging
import math

import networkx as nx
import numpy as np
import pandas as pd
from scipy.stats import entropy

from cfmediate.exceptions import (CapacityError, ValidationError, Violation,
    ZeroMassError)
from cfmediate.graph import CausalGraph, VARIABLE_NAME

logger = logging.getLogger(__name__)

# Refuse models whose exogenous support (or dense joint) exceeds this size
UNIT_CAP = 10 ** 7

MASS_TOLERANCE = 1e-9

# Weight column of frames; not a valid variable name, so it never collides
WEIGHT_COLUMN = '#weight'

# Largest number of exogenous variables for which the independence blocks of
# a non-factorized joint are searched
BLOCK_SEARCH_CAP = 16


def format_assignment(assignment):
    return ",".join("{}={}".format(name, value)
            for name, value in assignment.items())


def parse_assignment(text):
    assignment = OrderedDict()
    text = text.strip()
    if not text:
        return assignment
    for item in text.split(','):
        name, sep, value = item.partition('=')
        name, value = name.strip(), value.strip()
        if not sep or not name:
            raise ValidationError("Invalid assignment {!r} in {!r}; expected "
                    "VAR=value".format(item, text))
        if name in assignment:
            raise ValidationError("Variable {} assigned twice in "
                    "{!r}".format(name, text))
        assignment[name] = value
    return assignment


def _table_key(key):
    if isinstance(key, str):
        return tuple(key.split(',')) if key != '' else ()
    return tuple(str(v) for v in key)


class DomainSpec():
    """Ordered finite set of value labels with a numeric coding used when
    outcome values are subtracted. The default code of a label is its
    ordinal position."""

    def __init__(self, values, numeric_code=None):
        self.values = tuple(str(v) for v in values)
        if not self.values:
            raise ValidationError("Domain must contain at least one value")
        if len(set(self.values)) != len(self.values):
            raise ValidationError("Duplicate domain values in {}".format(
                list(self.values)))
        for value in self.values:
            if ',' in value:
                raise ValidationError("Domain value {!r} contains a comma".format(
                    value))
        self._index = {value: i for i, value in enumerate(self.values)}

        self.numeric_code = OrderedDict((value, float(i))
                for i, value in enumerate(self.values))
        for label, code in (numeric_code or {}).items():
            label = str(label)
            if label not in self._index:
                raise ValidationError("Numeric code given for unknown value "
                        "{!r}".format(label))
            code = float(code)
            if not math.isfinite(code):
                raise ValidationError("Numeric code for {!r} is not a finite "
                        "real".format(label))
            self.numeric_code[label] = code

    def index(self, value):
        return self._index[value]

    def __contains__(self, value):
        return value in self._index

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        return (isinstance(other, DomainSpec) and self.values == other.values
                and self.numeric_code == other.numeric_code)

    def __repr__(self):
        return "DomainSpec({})".format(list(self.values))

    def has_default_coding(self):
        return all(code == float(i)
                for i, code in enumerate(self.numeric_code.values()))


# Map outcome labels to reals: the domain's numeric coding, or the indicator
# of a target label for probability-scale effects.
def outcome_coding(domain, indicator=None):
    if indicator is None:
        return OrderedDict(domain.numeric_code)
    if indicator not in domain:
        raise ValidationError("Indicator label {!r} is not in the outcome "
                "domain {}".format(indicator, list(domain.values)))
    return OrderedDict((value, 1.0 if value == indicator else 0.0)
            for value in domain)


class ExogenousSpace():
    """Exogenous variables and their joint distribution P(u).

    The joint is either an explicit map from full exogenous tuples to
    probabilities, or (from_marginals) a product of independent marginals.
    """

    def __init__(self, variables, joint=None, marginals=None):
        self.variables = OrderedDict(variables)
        self.marginals = None
        self.joint = None
        if marginals is not None:
            self.marginals = OrderedDict((name, OrderedDict(
                (str(label), float(p)) for label, p in marginals[name].items()))
                for name in self.variables if name in marginals)
        else:
            self.joint = OrderedDict((_table_key(key), float(p))
                    for key, p in (joint or {}).items())

    @classmethod
    def from_marginals(cls, variables, marginals):
        return cls(variables, marginals=marginals)

    @property
    def names(self):
        return tuple(self.variables)

    def support_size(self):
        if self.marginals is not None:
            return math.prod(sum(1 for p in marginal.values() if p > 0)
                    for marginal in self.marginals.values())
        return sum(1 for p in self.joint.values() if p > 0)

    def violations(self):
        violations = []
        for name in self.variables:
            if not VARIABLE_NAME.match(name):
                violations.append(Violation(('exogenous', name),
                    "Invalid variable name: {!r}".format(name)))

        if self.marginals is not None:
            for name in self.variables:
                if name not in self.marginals:
                    violations.append(Violation(('exogenous', name),
                        "No marginal given for {}".format(name)))
                    continue
                marginal = self.marginals[name]
                for label, p in marginal.items():
                    if label not in self.variables[name]:
                        violations.append(Violation(('exogenous', name),
                            "Marginal of {} references unknown value "
                            "{!r}".format(name, label)))
                    if p < 0 or not math.isfinite(p):
                        violations.append(Violation(('exogenous', name),
                            "Negative or non-finite probability {} for "
                            "{}={}".format(p, name, label)))
                mass = math.fsum(marginal.values())
                if abs(mass - 1.0) > MASS_TOLERANCE:
                    violations.append(Violation(('exogenous', name),
                        "exogenous mass {} ≠ 1 for {}".format(
                            '{:.12g}'.format(mass), name)))
            return violations

        domains = list(self.variables.values())
        for key, p in self.joint.items():
            if len(key) != len(domains):
                violations.append(Violation(('exogenous', 'joint', ",".join(key)),
                    "Joint tuple ({}) has {} values for {} exogenous "
                    "variables".format(",".join(key), len(key), len(domains))))
                continue
            for name, value, domain in zip(self.variables, key, domains):
                if value not in domain:
                    violations.append(Violation(
                        ('exogenous', 'joint', ",".join(key)),
                        "Joint tuple ({}) has value {!r} outside the domain of "
                        "{}".format(",".join(key), value, name)))
            if p < 0 or not math.isfinite(p):
                violations.append(Violation(('exogenous', 'joint', ",".join(key)),
                    "Negative or non-finite probability {} for ({})".format(p,
                        ",".join(key))))
        mass = math.fsum(self.joint.values())
        if abs(mass - 1.0) > MASS_TOLERANCE:
            violations.append(Violation(('exogenous', 'joint'),
                "exogenous mass {} ≠ 1".format('{:.12g}'.format(mass))))
        return violations

    # Positive-probability tuples in lexicographic order of the declared
    # variable order and domain order
    def support(self):
        domains = list(self.variables.values())
        if self.marginals is not None:
            per_variable = [[(label, self.marginals[name].get(label, 0.0))
                for label in domain if self.marginals[name].get(label, 0.0) > 0]
                for name, domain in self.variables.items()]
            units = []
            for combo in product(*per_variable):
                p = 1.0
                for _, p_i in combo:
                    p *= p_i
                units.append((tuple(label for label, _ in combo), p))
            return units
        units = [(key, p) for key, p in self.joint.items() if p > 0]
        units.sort(key=lambda item: tuple(domain.index(v)
            for domain, v in zip(domains, item[0])))
        return units

    def dense(self):
        shape = tuple(len(domain) for domain in self.variables.values())
        if math.prod(shape) > UNIT_CAP:
            raise CapacityError("Exogenous joint with {} cells exceeds the cap "
                    "of {}".format(math.prod(shape), UNIT_CAP))
        array = np.zeros(shape)
        domains = list(self.variables.values())
        for key, p in self.support():
            array[tuple(domain.index(v) for domain, v in zip(domains, key))] += p
        return array

    def blocks(self):
        """Finest partition of the exogenous variables such that the joint is
        the product of the block marginals."""
        names = self.names
        if self.marginals is not None or len(names) <= 1:
            return [(name,) for name in names]
        if len(names) > BLOCK_SEARCH_CAP:
            raise CapacityError("Independence search is limited to {} "
                    "exogenous variables".format(BLOCK_SEARCH_CAP))
        array = self.dense()
        remaining = list(range(len(names)))
        blocks = []
        while remaining:
            first, rest = remaining[0], remaining[1:]
            block = None
            for size in range(len(rest) + 1):
                for extra in combinations(rest, size):
                    candidate = [first] + list(extra)
                    if len(candidate) == len(remaining) or _factorizes(array,
                            remaining, candidate):
                        block = candidate
                        break
                if block is not None:
                    break
            blocks.append(tuple(names[i] for i in block))
            positions = tuple(remaining.index(i) for i in block)
            array = array.sum(axis=positions)
            remaining = [i for i in remaining if i not in block]
        return blocks


# Test P(remaining) = P(A) P(remaining - A) on a dense array whose axes
# follow `remaining`
def _factorizes(array, remaining, block):
    axes_a = sorted(remaining.index(i) for i in block)
    axes_b = [axis for axis in range(len(remaining)) if axis not in axes_a]
    marginal_a = array.sum(axis=tuple(axes_b))
    marginal_b = array.sum(axis=tuple(axes_a))
    joint = np.transpose(array, axes_a + axes_b)
    return np.allclose(joint, np.multiply.outer(marginal_a, marginal_b),
            rtol=0.0, atol=1e-12)


class StructuralEquation():
    """child = f(endogenous parents, exogenous parents), stored as a total
    table keyed by parent value tuples (endogenous parents first)."""

    def __init__(self, child, domain, endogenous_parents=(),
            exogenous_parents=(), table=None):
        self.child = child
        self.domain = domain
        self.endogenous_parents = tuple(endogenous_parents)
        self.exogenous_parents = tuple(exogenous_parents)
        self.table = OrderedDict((_table_key(key), str(value))
                for key, value in (table or {}).items())

    @property
    def parents(self):
        return self.endogenous_parents + self.exogenous_parents

    def __repr__(self):
        return "StructuralEquation({} <- {})".format(self.child,
                list(self.parents))


class Regime():
    """An intervention regime: do(fixings), optionally with variables that
    are randomized uniformly over their domains."""

    def __init__(self, fixings=None, randomized=()):
        self.fixings = OrderedDict((name, str(value))
                for name, value in (fixings or {}).items())
        self.randomized = tuple(randomized)
        overlap = set(self.fixings) & set(self.randomized)
        if overlap:
            raise ValidationError("Variables both fixed and randomized: "
                    "{}".format(sorted(overlap)))

    @classmethod
    def coerce(cls, regime):
        if regime is None:
            return cls()
        if isinstance(regime, Regime):
            return regime
        return cls(regime)

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text in ('', 'observational'):
            return cls()
        fixings, randomized = OrderedDict(), []
        for part in text.split(';'):
            kind, sep, body = part.strip().partition(':')
            if not sep:
                raise ValidationError("Invalid regime {!r}; expected "
                        "'observational', 'do:VAR=value,...' or "
                        "'randomize:VAR,...'".format(text))
            if kind == 'do':
                fixings.update(parse_assignment(body))
            elif kind == 'randomize':
                randomized.extend(n.strip() for n in body.split(',')
                        if n.strip())
            else:
                raise ValidationError("Invalid regime kind {!r} in "
                        "{!r}".format(kind, text))
        return cls(fixings, randomized)

    def merged(self, fixings):
        combined = OrderedDict(self.fixings)
        combined.update(fixings)
        return Regime(combined, [n for n in self.randomized
            if n not in combined])

    @property
    def is_observational(self):
        return not self.fixings and not self.randomized

    def key(self):
        return (tuple(sorted(self.fixings.items())),
                tuple(sorted(self.randomized)))

    def __eq__(self, other):
        return isinstance(other, Regime) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __str__(self):
        if self.is_observational:
            return 'observational'
        parts = []
        if self.fixings:
            parts.append('do:' + format_assignment(self.fixings))
        if self.randomized:
            parts.append('randomize:' + ",".join(self.randomized))
        return ";".join(parts)

    def __repr__(self):
        return "Regime({})".format(self)


class PathSubgraph():
    """Edge-subgraph selecting the arrows that transmit the effect."""

    def __init__(self, edges=()):
        self.edges = frozenset(tuple(edge) for edge in edges)

    @classmethod
    def parse(cls, text):
        edges = []
        for item in text.split(','):
            item = item.strip()
            if not item:
                continue
            parent, sep, child = item.partition('->')
            if not sep or not parent.strip() or not child.strip():
                raise ValidationError("Invalid edge {!r}; expected "
                        "PARENT->CHILD".format(item))
            edges.append((parent.strip(), child.strip()))
        return cls(edges)

    def __contains__(self, edge):
        return tuple(edge) in self.edges

    def __str__(self):
        return ",".join("{}->{}".format(p, c) for p, c in sorted(self.edges))


class Distribution():
    """Exact distribution over a tuple of variables under a regime."""

    def __init__(self, variables, probability, regime=None):
        self.variables = tuple(variables)
        self.probability = OrderedDict(probability)
        self.support = list(self.probability)
        self.regime = Regime.coerce(regime)

    def _positions(self, names):
        try:
            return [self.variables.index(name) for name in names]
        except ValueError:
            raise ValidationError("Distribution over {} has no variable among "
                    "{}".format(list(self.variables), list(names)))

    def mass(self, event):
        positions = self._positions(list(event))
        values = list(event.values())
        return math.fsum(p for key, p in self.probability.items()
                if all(key[i] == v for i, v in zip(positions, values)))

    def marginal(self, names):
        positions = self._positions(names)
        result = OrderedDict()
        for key, p in self.probability.items():
            sub = tuple(key[i] for i in positions)
            result[sub] = result.get(sub, 0.0) + p
        return Distribution(names, result, self.regime)

    def prob(self, event, given=None):
        given = given or {}
        denominator = self.mass(given) if given else 1.0
        if denominator <= 0:
            raise ZeroMassError("Conditioning event {} has zero probability "
                    "under {}".format(format_assignment(given), self.regime),
                    event=given)
        joint = OrderedDict(given)
        for name, value in event.items():
            if name in joint and joint[name] != value:
                return 0.0
            joint[name] = value
        return self.mass(joint) / denominator

    def expectation(self, name, coding, given=None):
        given = given or {}
        denominator = self.mass(given) if given else 1.0
        if denominator <= 0:
            raise ZeroMassError("Conditioning event {} has zero probability "
                    "under {}".format(format_assignment(given), self.regime),
                    event=given)
        position = self._positions([name])[0]
        positions = self._positions(list(given))
        values = list(given.values())
        total = math.fsum(p * coding[key[position]]
                for key, p in self.probability.items()
                if all(key[i] == v for i, v in zip(positions, values)))
        return total / denominator

    def entropy(self, names):
        if not names:
            return 0.0
        return float(entropy(list(self.marginal(names).probability.values())))

    def mutual_information(self, A, B, C=()):
        """Exact conditional mutual information I(A; B | C) in nats."""
        A, B, C = list(A), list(B), list(C)
        return (self.entropy(A + C) + self.entropy(B + C)
                - self.entropy(A + B + C) - self.entropy(C))

    def to_frame(self):
        frame = pd.DataFrame(list(self.probability.keys()),
                columns=list(self.variables))
        frame[WEIGHT_COLUMN] = list(self.probability.values())
        return frame

    def total(self):
        return math.fsum(self.probability.values())


class Dataset():
    """Rows of endogenous assignments sampled under a declared regime."""

    def __init__(self, frame, regime=None, seed=None, domains=None):
        self.frame = frame.astype(str).reset_index(drop=True)
        self.columns = tuple(self.frame.columns)
        self.regime = Regime.coerce(regime)
        self.seed = seed
        if domains is not None:
            for column in self.columns:
                if column not in domains:
                    continue
                bad = ~self.frame[column].isin(list(domains[column].values))
                if bad.any():
                    row = int(bad.idxmax())
                    raise ValidationError("Row {} column {}: value {!r} is not "
                            "in the declared domain {}".format(row + 1, column,
                                self.frame[column][row],
                                list(domains[column].values)))

    @property
    def rows(self):
        return [OrderedDict(record) for record in
                self.frame.to_dict(orient='records')]

    def __len__(self):
        return len(self.frame)


class Scm():
    """Finite-domain structural causal model.

    :param exogenous: ExogenousSpace holding u and P(u)
    :param equations: list of StructuralEquation, one per endogenous variable
    :param observability: optional dict name -> bool (default all observable)
    :param name: model name
    :param unit_cap: refuse exogenous supports larger than this
    """

    def __init__(self, exogenous, equations, observability=None,
            name='model', unit_cap=UNIT_CAP):
        self.name = name
        self.exogenous = exogenous
        self.equation_list = list(equations)
        self.equations = OrderedDict((eq.child, eq) for eq in self.equation_list)
        self.observability = OrderedDict((eq.child, True)
                for eq in self.equation_list)
        self.observability.update(observability or {})
        self.unit_cap = unit_cap
        self._compiled = False

    def __repr__(self):
        return "Scm(name={!r}, endogenous={})".format(self.name,
                list(self.equations))

    def validate(self):
        """Return every violation of the model invariants, each with the path
        of the offending element."""
        violations = list(self.exogenous.violations())

        seen = {}
        for name in self.exogenous.names:
            seen[name] = 'exogenous'
        for eq in self.equation_list:
            if not VARIABLE_NAME.match(eq.child):
                violations.append(Violation(('variables', eq.child),
                    "Invalid variable name: {!r}".format(eq.child)))
            if eq.child in seen:
                violations.append(Violation(('variables', eq.child),
                    "Duplicate variable name {} (already declared as "
                    "{})".format(eq.child, seen[eq.child])))
            seen[eq.child] = 'endogenous'

        for eq in self.equation_list:
            violations.extend(self._equation_violations(eq))

        for name in self.observability:
            if name not in self.equations:
                violations.append(Violation(('variables', name),
                    "Observability flag for unknown endogenous variable "
                    "{}".format(name)))

        links = nx.DiGraph()
        links.add_nodes_from(self.equations)
        for eq in self.equation_list:
            links.add_edges_from((parent, eq.child)
                    for parent in eq.endogenous_parents
                    if parent in self.equations)
        if not nx.is_directed_acyclic_graph(links):
            cycle = nx.find_cycle(links)
            violations.append(Violation(('variables', cycle[0][0]),
                "cycle detected: {}".format(" -> ".join(
                    [parent for parent, _ in cycle] + [cycle[0][0]]))))
        return violations

    def _equation_violations(self, eq):
        violations = []
        path = ('variables', eq.child)
        domains = []
        for parent in eq.endogenous_parents:
            if parent not in self.equations:
                violations.append(Violation(path + ('parents',),
                    "Unknown endogenous parent {} of {}".format(parent,
                        eq.child)))
            else:
                domains.append(self.equations[parent].domain)
        for parent in eq.exogenous_parents:
            if parent not in self.exogenous.variables:
                violations.append(Violation(path + ('exo_parents',),
                    "Unknown exogenous parent {} of {}".format(parent,
                        eq.child)))
            else:
                domains.append(self.exogenous.variables[parent])
        if len(set(eq.parents)) != len(eq.parents):
            violations.append(Violation(path + ('parents',),
                "Repeated parent in {}".format(list(eq.parents))))
        if violations:
            return violations

        for key, value in eq.table.items():
            if value not in eq.domain:
                violations.append(Violation(path + ('table', ",".join(key)),
                    "Table output {!r} for ({}) is outside the domain of "
                    "{}".format(value, ",".join(key), eq.child)))
            if len(key) != len(domains) or any(v not in d
                    for v, d in zip(key, domains)):
                violations.append(Violation(path + ('table', ",".join(key)),
                    "Table key ({}) does not match the parent domains of "
                    "{}".format(",".join(key), eq.child)))

        size = math.prod(len(d) for d in domains)
        if size > self.unit_cap:
            violations.append(Violation(path + ('table',),
                "Parent domain product of {} has {} cells".format(eq.child,
                    size)))
            return violations
        missing = [key for key in product(*[d.values for d in domains])
                if key not in eq.table]
        for key in missing[:10]:
            violations.append(Violation(path + ('table',),
                "table not total: {} has no entry for ({}) = ({})".format(
                    eq.child, ",".join(eq.parents), ",".join(key))))
        if len(missing) > 10:
            violations.append(Violation(path + ('table',),
                "table not total: {} more missing entries for {}".format(
                    len(missing) - 10, eq.child)))
        return violations

    def _ensure_valid(self):
        if self._compiled:
            return
        violations = self.validate()
        if violations:
            raise ValidationError("Model {} is invalid: {}".format(self.name,
                "; ".join(v.message for v in violations)), violations)
        self._compile()

    def _compile(self):
        links = nx.DiGraph()
        declared = list(self.equations)
        links.add_nodes_from(declared)
        for eq in self.equation_list:
            links.add_edges_from((p, eq.child) for p in eq.endogenous_parents)
        self.order = tuple(nx.lexicographical_topological_sort(links,
            key=declared.index))

        self.domains = OrderedDict(self.exogenous.variables)
        for name in self.order:
            self.domains[name] = self.equations[name].domain

        if self.exogenous.support_size() > self.unit_cap:
            raise CapacityError("Exogenous support of {} tuples exceeds the cap "
                    "of {}".format(self.exogenous.support_size(), self.unit_cap))
        names = self.exogenous.names
        self.units = [(OrderedDict(zip(names, key)), p)
                for key, p in self.exogenous.support()]

        blocks = self.exogenous.blocks()
        children = OrderedDict((name, []) for name in names)
        for eq in self.equation_list:
            for parent in eq.exogenous_parents:
                children[parent].append(eq.child)
        self.markovian = (all(len(block) == 1 for block in blocks)
                and all(len(c) <= 1 for c in children.values()))

        nodes, edges, exogenous_nodes = [], [], []
        for block in blocks:
            node = "__".join(block)
            nodes.append(node)
            exogenous_nodes.append(node)
            for member in block:
                edges.extend((node, child) for child in children[member])
        nodes.extend(declared)
        for eq in self.equation_list:
            edges.extend((p, eq.child) for p in eq.endogenous_parents)
        observed = [name for name in declared if self.observability[name]]
        self.graph = CausalGraph(nodes, edges, exogenous=exogenous_nodes,
                observed=observed)
        self.exogenous_blocks = blocks
        self._compiled = True
        logger.debug("Compiled model {}: {} endogenous variables, {} units, "
                "markovian={}".format(self.name, len(self.order),
                    len(self.units), self.markovian))

    @property
    def induced_graph(self):
        self._ensure_valid()
        return self.graph

    @property
    def endogenous(self):
        self._ensure_valid()
        return self.order

    def is_markovian(self):
        self._ensure_valid()
        return self.markovian

    def domain(self, name):
        self._ensure_valid()
        if name not in self.domains:
            raise ValidationError("Unknown variable: {}".format(name))
        return self.domains[name]

    def parents(self, name):
        return self.equations[self._endogenous(name)].endogenous_parents

    def _endogenous(self, name, role="variable"):
        self._ensure_valid()
        if name not in self.equations:
            raise ValidationError("Unknown endogenous {}: {}".format(role, name))
        return name

    def _value(self, name, value, role="value"):
        value = str(value)
        if value not in self.domains[name]:
            raise ValidationError("{} {!r} is not in the domain of {} "
                    "{}".format(role.capitalize(), value, name,
                        list(self.domains[name].values)))
        return value

    def check_regime(self, regime):
        regime = Regime.coerce(regime)
        for name, value in regime.fixings.items():
            self._endogenous(name, "regime variable")
            self._value(name, value, "regime value")
        for name in regime.randomized:
            self._endogenous(name, "randomized variable")
        return regime

    def get_metadata(self):
        self._ensure_valid()
        return OrderedDict([
            ('name', self.name),
            ('num_endogenous', len(self.order)),
            ('num_exogenous', len(self.exogenous.names)),
            ('num_units', len(self.units)),
            ('markovian', self.markovian),
            ('observed', [n for n in self.order if self.observability[n]]),
            ('domain_sizes', OrderedDict((n, len(self.domains[n]))
                for n in self.domains)),
            ('exogenous_blocks', [list(b) for b in self.exogenous_blocks])
            ])

    def _unit_values(self, unit):
        names = self.exogenous.names
        if not isinstance(unit, dict):
            unit = tuple(unit)
            if len(unit) != len(names):
                raise ValidationError("incomplete unit: expected {} exogenous "
                        "values, got {}".format(len(names), len(unit)))
            unit = OrderedDict(zip(names, unit))
        missing = [name for name in names if name not in unit]
        if missing:
            raise ValidationError("incomplete unit: missing values for "
                    "{}".format(missing))
        return OrderedDict((name, self._value(name, unit[name], "unit value"))
                for name in names)

    # Structural evaluation in topological order; fixed variables take their
    # regime value
    def _evaluate_values(self, values, fixings):
        values = dict(values)
        result = OrderedDict()
        for name in self.order:
            if name in fixings:
                value = fixings[name]
            else:
                eq = self.equations[name]
                value = eq.table[tuple(values[p] for p in eq.parents)]
            values[name] = value
            result[name] = value
        return result

    def evaluate(self, unit, regime=None):
        self._ensure_valid()
        regime = self.check_regime(regime)
        if regime.randomized:
            raise ValidationError("Randomized variables {} must be drawn before "
                    "evaluating a unit".format(list(regime.randomized)))
        return self._evaluate_values(self._unit_values(unit), regime.fixings)

    def nested_outcome(self, unit, X, x, x_ref, Zset, Y):
        """Y_{x, Z_{x_ref}}(u): Y when X is set to x and Zset is held at the
        values it attains under X = x_ref."""
        X = self._endogenous(X, "treatment")
        Y = self._endogenous(Y, "outcome")
        Zset = tuple(Zset)
        if not Zset:
            raise ValidationError("Mediator set must not be empty")
        for name in Zset:
            self._endogenous(name, "mediator")
        if Y in Zset:
            raise ValidationError("Outcome {} is in the mediator set".format(Y))
        if X in Zset:
            raise ValidationError("Treatment {} is in the mediator set".format(X))
        x = self._value(X, x)
        x_ref = self._value(X, x_ref, "reference value")
        values = self._unit_values(unit)
        reference = self._evaluate_values(values, {X: x_ref})
        fixings = OrderedDict([(X, x)])
        fixings.update((name, reference[name]) for name in Zset)
        return self._evaluate_values(values, fixings)[Y]

    def surgery(self, g, X, x, x_ref):
        return PathSpecificScm(self, g, X, x, x_ref)

    def enumerate_units(self):
        self._ensure_valid()
        return [(OrderedDict(unit), p) for unit, p in self.units]

    def _randomized_assignments(self, regime):
        domains = [self.domains[name].values for name in regime.randomized]
        combos = list(product(*domains))
        weight = 1.0 / len(combos)
        return [(OrderedDict(zip(regime.randomized, combo)), weight)
                for combo in combos]

    def exact_distribution(self, regime=None, over=None):
        self._ensure_valid()
        regime = self.check_regime(regime)
        over = tuple(over) if over else self.order
        for name in over:
            self._endogenous(name, "distribution variable")
        accumulated = OrderedDict()
        randomized = self._randomized_assignments(regime)
        for unit, p in self.units:
            for assignment, weight in randomized:
                fixings = OrderedDict(regime.fixings)
                fixings.update(assignment)
                values = self._evaluate_values(unit, fixings)
                key = tuple(values[name] for name in over)
                accumulated[key] = accumulated.get(key, 0.0) + p * weight
        domains = [self.domains[name] for name in over]
        ordered = sorted(accumulated.items(), key=lambda item: tuple(
            domain.index(v) for domain, v in zip(domains, item[0])))
        return Distribution(over, ordered, regime)

    def sample(self, n, seed=0, regime=None):
        """Draw n i.i.d. rows: u from P(u), randomized variables uniformly,
        then structural evaluation. Uses numpy's default_rng(seed)."""
        self._ensure_valid()
        if n < 1:
            raise ValidationError("Sample size must be at least 1, got "
                    "{}".format(n))
        regime = self.check_regime(regime)
        rng = np.random.default_rng(seed)
        probabilities = np.array([p for _, p in self.units])
        probabilities = probabilities / probabilities.sum()
        unit_indices = rng.choice(len(self.units), size=n, p=probabilities)
        draws = [rng.integers(len(self.domains[name]), size=n)
                for name in regime.randomized]

        cache = {}
        rows = []
        for i in range(n):
            drawn = tuple(int(d[i]) for d in draws)
            key = (int(unit_indices[i]), drawn)
            if key not in cache:
                fixings = OrderedDict(regime.fixings)
                for name, index in zip(regime.randomized, drawn):
                    fixings[name] = self.domains[name].values[index]
                values = self._evaluate_values(self.units[key[0]][0], fixings)
                cache[key] = [values[name] for name in self.order]
            rows.append(cache[key])
        logger.info("Sampled {} rows from {} under {} (seed {})".format(n,
            self.name, regime, seed))
        frame = pd.DataFrame(rows, columns=list(self.order))
        return Dataset(frame, regime=regime, seed=seed, domains=self.domains)


class PathSpecificScm(Scm):
    """The modified model M*_g: each parent without a link to its child in g
    is frozen, per unit, at its value under X = x_ref in the original model.
    """

    def __init__(self, original, subgraph, X, x, x_ref):
        original._ensure_valid()
        super().__init__(original.exogenous, original.equation_list,
                original.observability, name=original.name + '*g',
                unit_cap=original.unit_cap)
        if not isinstance(subgraph, PathSubgraph):
            subgraph = PathSubgraph(subgraph)
        self.original = original
        self.subgraph = subgraph
        self.X = original._endogenous(X, "treatment")
        original._value(self.X, x)
        self.x_ref = original._value(self.X, x_ref, "reference value")
        for parent, child in sorted(subgraph.edges):
            if (child not in original.equations
                    or parent not in original.equations[child].endogenous_parents):
                raise ValidationError("Edge {}->{} is not in the induced "
                        "graph".format(parent, child))
        self._ensure_valid()

    def _evaluate_values(self, values, fixings):
        reference = self.original._evaluate_values(values, {self.X: self.x_ref})
        values = dict(values)
        result = OrderedDict()
        for name in self.order:
            if name in fixings:
                value = fixings[name]
            else:
                eq = self.equations[name]
                key = tuple(values[p] if (p, name) in self.subgraph.edges
                        else reference[p] for p in eq.endogenous_parents)
                key += tuple(values[e] for e in eq.exogenous_parents)
                value = eq.table[key]
            values[name] = value
            result[name] = value
        return result
