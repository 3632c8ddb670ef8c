from collections import namedtuple, OrderedDict
from itertools import combinations
import logging
import re

import networkx as nx

from cfmediate.exceptions import CapacityError, CriterionError, ValidationError

logger = logging.getLogger(__name__)

VARIABLE_NAME = re.compile(r'^[A-Za-z0-9_]+$')

# networkx renamed its d-separation test in 3.3 and dropped the old name in 3.5
_nx_d_separated = getattr(nx, 'is_d_separator', None) or getattr(nx, 'd_separated')

# Edge classes to delete from a graph. Plain subscripts in the identification
# conditions delete the arrows emanating from a set, bars delete the arrows
# entering it.
MutilationSpec = namedtuple('MutilationSpec',
        ['delete_outgoing_of', 'delete_incoming_of'])
MutilationSpec.__new__.__defaults__ = (frozenset(), frozenset())

# One evaluated condition of an identification criterion. The separation
# triple (A, B, C) reads "A is d-separated from B given C" and is None for
# conditions that are not separation statements.
ConditionEntry = namedtuple('ConditionEntry',
        ['label', 'mutilation', 'separation', 'verdict', 'reason'])

# Roles ('X', 'Z') whose outgoing and incoming arrows are deleted for each
# separation condition of the nonexperimental criterion.
COROLLARY1_CONVENTIONS = {
        'printed': OrderedDict([
            ('i', (('X', 'Z'), ())),
            ('ii', (('X',), ('Z',))),
            ('iii', ((), ('Z',))),
            ('iv', ((), ('X',)))
            ]),
        'backdoor': OrderedDict([
            ('i', (('X', 'Z'), ())),
            ('ii', (('X',), ('Z',))),
            ('iii', (('Z',), ())),
            ('iv', (('X',), ()))
            ])
        }

WITNESS_MODES = ['theorem1', 'corollary1', 'backdoor']


class CausalGraph():
    """Directed acyclic graph over named variables.

    :param nodes: ordered node names
    :param edges: iterable of (parent, child) pairs
    :param exogenous: nodes flagged exogenous (they may not have parents)
    :param observed: nodes that may serve as covariates; defaults to every
                     non-exogenous node
    """

    def __init__(self, nodes, edges=(), exogenous=(), observed=None):

        self.nodes = tuple(nodes)
        self._index = {}
        for i, node in enumerate(self.nodes):
            if not isinstance(node, str) or not VARIABLE_NAME.match(node):
                raise ValidationError("Invalid variable name: {!r}. Names use "
                        "letters, digits and underscores.".format(node))
            if node in self._index:
                raise ValidationError("Duplicate node: {}".format(node))
            self._index[node] = i

        edges = set(tuple(edge) for edge in edges)
        for parent, child in edges:
            for endpoint in (parent, child):
                if endpoint not in self._index:
                    raise ValidationError("Edge {}->{} references undeclared "
                            "node {}".format(parent, child, endpoint))
        self.edges = tuple(sorted(edges,
            key=lambda e: (self._index[e[0]], self._index[e[1]])))

        self.exogenous = frozenset(exogenous)
        unknown = self.exogenous - set(self.nodes)
        if unknown:
            raise ValidationError("Exogenous marks reference undeclared "
                    "nodes: {}".format(sorted(unknown)))
        if observed is None:
            observed = set(self.nodes) - self.exogenous
        self.observed = frozenset(observed)
        unknown = self.observed - set(self.nodes)
        if unknown:
            raise ValidationError("Observed marks reference undeclared "
                    "nodes: {}".format(sorted(unknown)))

        self._digraph = nx.DiGraph()
        self._digraph.add_nodes_from(self.nodes)
        self._digraph.add_edges_from(self.edges)

        for node in self.exogenous:
            parents = self.parents(node)
            if parents:
                raise ValidationError("Exogenous node {} has parents: "
                        "{}".format(node, list(parents)))

        if not nx.is_directed_acyclic_graph(self._digraph):
            cycle = nx.find_cycle(self._digraph)
            raise ValidationError("cycle detected: {}".format(
                " -> ".join([parent for parent, _ in cycle] + [cycle[0][0]])))

    def __repr__(self):
        return "CausalGraph(nodes={}, edges={})".format(list(self.nodes),
                ["{}->{}".format(p, c) for p, c in self.edges])

    def __eq__(self, other):
        return (isinstance(other, CausalGraph)
                and set(self.nodes) == set(other.nodes)
                and set(self.edges) == set(other.edges)
                and self.exogenous == other.exogenous)

    def __hash__(self):
        return hash((frozenset(self.nodes), frozenset(self.edges)))

    @property
    def digraph(self):
        return self._digraph.copy()

    def sort_nodes(self, nodes):
        return tuple(sorted(nodes, key=lambda n: self._index[n]))

    def has_edge(self, parent, child):
        return self._digraph.has_edge(parent, child)

    def parents(self, node):
        return self.sort_nodes(self._digraph.predecessors(node))

    def children(self, node):
        return self.sort_nodes(self._digraph.successors(node))

    def ancestors(self, nodes):
        result = set()
        for node in self.node_set(nodes, "ancestor query"):
            result |= nx.ancestors(self._digraph, node)
        return frozenset(result)

    def topological_order(self):
        return tuple(nx.lexicographical_topological_sort(self._digraph,
            key=lambda n: self._index[n]))

    # Validate a collection of node names (a single name is accepted) and
    # return it as a frozenset
    def node_set(self, nodes, role="node set"):
        if nodes is None:
            return frozenset()
        if isinstance(nodes, str):
            nodes = [nodes]
        nodes = frozenset(nodes)
        unknown = [n for n in nodes if n not in self._index]
        if unknown:
            raise ValidationError("Unknown node(s) in {}: {}".format(role,
                sorted(unknown)))
        return nodes

    def node(self, name, role="node"):
        if name not in self._index:
            raise ValidationError("Unknown node for {}: {}".format(role, name))
        return name


def mutilate(g, spec):
    """Return a copy of g with every arrow emanating from
    spec.delete_outgoing_of and every arrow entering spec.delete_incoming_of
    removed. The node set is unchanged."""
    outgoing = g.node_set(spec.delete_outgoing_of, "delete_outgoing_of")
    incoming = g.node_set(spec.delete_incoming_of, "delete_incoming_of")
    edges = [(p, c) for p, c in g.edges
            if p not in outgoing and c not in incoming]
    return CausalGraph(g.nodes, edges, exogenous=g.exogenous,
            observed=g.observed)


def d_separated(g, A, B, C=()):
    A = g.node_set(A, "first separation set")
    B = g.node_set(B, "second separation set")
    C = g.node_set(C, "conditioning set")
    for (name_1, set_1), (name_2, set_2) in combinations(
            [('A', A), ('B', B), ('C', C)], 2):
        overlap = set_1 & set_2
        if overlap:
            raise ValidationError("Separation sets {} and {} overlap on "
                    "{}".format(name_1, name_2, sorted(overlap)))
    if not A or not B:
        return True
    return bool(_nx_d_separated(g._digraph, set(A), set(B), set(C)))


def descendants(g, A):
    result = set()
    for node in g.node_set(A, "descendant query"):
        result |= nx.descendants(g._digraph, node)
    return frozenset(result) - g.node_set(A)


def _check_covariates(g, covariates, excluded, label):
    overlap = covariates & excluded
    if overlap:
        raise ValidationError("Covariate set {} contains treatment, mediator "
                "or outcome nodes: {}".format(label, sorted(overlap)))


def check_experimental_criterion(g, X, Z, Y, W=()):
    """Separation criterion for experimental identification of the natural
    direct (and, with x and x* exchanged, indirect) effect: W d-separates Y
    from Z once every arrow emanating from X and Z is deleted.

    Raises CriterionError when W holds a descendant of X or of a member of Z.
    """
    X = g.node(X, "treatment")
    Y = g.node(Y, "outcome")
    Z = g.node_set(Z, "mediator set")
    W = g.node_set(W, "covariate set")
    _check_covariates(g, W, Z | {X, Y}, 'W')
    forbidden = descendants(g, Z | {X})
    offending = g.sort_nodes(W & forbidden)
    if offending:
        raise CriterionError("Covariate {} is a descendant of the treatment "
                "or of a mediator".format(offending[0]))
    mutilated = mutilate(g, MutilationSpec(delete_outgoing_of=Z | {X}))
    return d_separated(mutilated, {Y}, Z, W)


def backdoor_admissible(g, X, Z_target, S=()):
    X = g.node(X, "treatment")
    Z_target = g.node_set(Z_target, "back-door target")
    S = g.node_set(S, "adjustment set")
    overlap = S & (Z_target | {X})
    if overlap:
        raise ValidationError("Adjustment set overlaps treatment or target: "
                "{}".format(sorted(overlap)))
    offending = g.sort_nodes(S & descendants(g, {X}))
    if offending:
        raise CriterionError("Adjustment variable {} is a descendant of "
                "{}".format(offending[0], X))
    mutilated = mutilate(g, MutilationSpec(delete_outgoing_of={X}))
    return d_separated(mutilated, {X}, Z_target - {X}, S)


# The effect of X on Z is unconfounded when the empty set is back-door
# admissible.
def unconfounded(g, X, Z):
    return backdoor_admissible(g, X, Z, ())


def _corollary1_mutilation(convention, label, X, Z, mutilations):
    if mutilations and label in mutilations:
        return mutilations[label]
    try:
        outgoing_roles, incoming_roles = COROLLARY1_CONVENTIONS[convention][label]
    except KeyError:
        raise ValidationError("Invalid convention: {}. Select one of "
                "{}.".format(convention, list(COROLLARY1_CONVENTIONS)))
    roles = {'X': {X}, 'Z': set(Z)}
    outgoing, incoming = set(), set()
    for role in outgoing_roles:
        outgoing |= roles[role]
    for role in incoming_roles:
        incoming |= roles[role]
    return MutilationSpec(frozenset(outgoing), frozenset(incoming))


def _corollary1_triple(label, X, Z, Y, W0, W1, W2, W3):
    if label == 'i':
        return frozenset({Y}), Z, W0
    elif label == 'ii':
        return frozenset({Y}), frozenset({X}), W0 | W1
    elif label == 'iii':
        return frozenset({Y}), Z, frozenset({X}) | W0 | W1 | W2
    elif label == 'iv':
        return Z, frozenset({X}), W0 | W3


def _corollary1_condition(g, label, X, Z, Y, sets, convention, mutilations):
    spec = _corollary1_mutilation(convention, label, X, Z, mutilations)
    A, B, C = _corollary1_triple(label, X, Z, Y, *sets)
    verdict = d_separated(mutilate(g, spec), A, B, C)
    separation = (g.sort_nodes(A), g.sort_nodes(B), g.sort_nodes(C))
    reason = None if verdict else "({}) separation fails".format(label)
    return ConditionEntry(label, spec, separation, verdict, reason)


class ConditionReport():

    def __init__(self, entries):
        self.entries = tuple(entries)

    @property
    def verdict(self):
        return all(entry.verdict for entry in self.entries)

    @property
    def failed(self):
        return [entry.label for entry in self.entries if not entry.verdict]

    def __getitem__(self, label):
        for entry in self.entries:
            if entry.label == label:
                return entry
        raise KeyError(label)

    def __repr__(self):
        return "ConditionReport(verdict={}, failed={})".format(self.verdict,
                self.failed)


def check_corollary1(g, X, Z, Y, W0=(), W1=(), W2=(), W3=(),
        convention='printed', mutilations=None):
    """Evaluate the graphical nonexperimental identification conditions
    (i)-(v) for the natural direct effect of X on Y mediated by Z.

    :param convention: 'printed' or 'backdoor', the reading of the barred
                       subscripts; see COROLLARY1_CONVENTIONS
    :param mutilations: optional dict mapping a condition label ('i'-'iv')
                        to an explicit MutilationSpec
    """
    X = g.node(X, "treatment")
    Y = g.node(Y, "outcome")
    Z = g.node_set(Z, "mediator set")
    sets = [g.node_set(W, "covariate set W{}".format(i))
            for i, W in enumerate([W0, W1, W2, W3])]
    for i, W in enumerate(sets):
        _check_covariates(g, W, Z | {X, Y}, 'W{}'.format(i))

    entries = [_corollary1_condition(g, label, X, Z, Y, sets, convention,
        mutilations) for label in ['i', 'ii', 'iii', 'iv']]

    descendants_x = descendants(g, {X})
    descendants_z = descendants(g, Z)
    offending = [(label, node) for label, W, forbidden in [
        ('W0', sets[0], descendants_x), ('W1', sets[1], descendants_x),
        ('W2', sets[2], descendants_z), ('W3', sets[3], descendants_x)]
        for node in g.sort_nodes(W & forbidden)]
    if offending:
        reason = "(v) " + ", ".join("{} contains descendant {}".format(label,
            node) for label, node in offending)
    else:
        reason = None
    entries.append(ConditionEntry('v', None, None, not offending, reason))

    report = ConditionReport(entries)
    logger.debug("Nonexperimental criterion for {}->{}: {}".format(X, Y,
        report))
    return report


def _subsets(pool, size):
    return (frozenset(c) for c in combinations(pool, size))


def search_witnesses(g, X, Z, Y, mode='theorem1', node_cap=20,
        convention='printed'):
    """Search covariate sets satisfying the selected criterion among the
    observed nondescendants. Candidates are visited by increasing total size,
    ties broken lexicographically by node name (set by set, W0 first).

    Returns an OrderedDict of witness sets, or None if no witness exists.
    """
    if len(g.nodes) > node_cap:
        raise CapacityError("Witness search is limited to graphs with at most "
                "{} nodes; this graph has {}".format(node_cap, len(g.nodes)))
    if mode not in WITNESS_MODES:
        raise ValidationError("Invalid witness search mode: {}. Select one of "
                "{}.".format(mode, WITNESS_MODES))
    X = g.node(X, "treatment")
    Y = g.node(Y, "outcome")
    Z = g.node_set(Z, "mediator set")

    base = g.observed - Z - {X, Y}
    descendants_x = descendants(g, {X})
    descendants_z = descendants(g, Z)

    if mode == 'theorem1':
        pool = sorted(base - descendants_x - descendants_z)
        logger.debug("Experimental criterion candidate pool: {}".format(pool))
        for size in range(len(pool) + 1):
            for W in _subsets(pool, size):
                if check_experimental_criterion(g, X, Z, Y, W):
                    return OrderedDict([('W', g.sort_nodes(W))])
        return None

    elif mode == 'backdoor':
        pool = sorted(base - descendants_x)
        logger.debug("Back-door candidate pool: {}".format(pool))
        for size in range(len(pool) + 1):
            for S in _subsets(pool, size):
                if backdoor_admissible(g, X, Z, S):
                    return OrderedDict([('S', g.sort_nodes(S))])
        return None

    pool_x = sorted(base - descendants_x)
    pool_z = sorted(base - descendants_z)
    logger.debug("Nonexperimental candidate pools: {} / {}".format(pool_x,
        pool_z))
    empty = frozenset()

    def holds(label, sets):
        return _corollary1_condition(g, label, X, Z, Y, sets, convention,
                None).verdict

    max_total = 3 * len(pool_x) + len(pool_z)
    for total in range(max_total + 1):
        for k0 in range(min(total, len(pool_x)) + 1):
            for W0 in _subsets(pool_x, k0):
                if not holds('i', [W0, empty, empty, empty]):
                    continue
                for k1 in range(min(total - k0, len(pool_x)) + 1):
                    for W1 in _subsets(pool_x, k1):
                        if not holds('ii', [W0, W1, empty, empty]):
                            continue
                        for k2 in range(min(total - k0 - k1,
                                len(pool_z)) + 1):
                            k3 = total - k0 - k1 - k2
                            if k3 > len(pool_x):
                                continue
                            for W2 in _subsets(pool_z, k2):
                                if not holds('iii', [W0, W1, W2, empty]):
                                    continue
                                for W3 in _subsets(pool_x, k3):
                                    if holds('iv', [W0, empty, empty, W3]):
                                        return OrderedDict([
                                            ('W0', g.sort_nodes(W0)),
                                            ('W1', g.sort_nodes(W1)),
                                            ('W2', g.sort_nodes(W2)),
                                            ('W3', g.sort_nodes(W3))])
    return None


def mediator_set_label(g, X, Z, Y):
    """'direct/indirect' when Z intercepts every directed path from X to Y
    other than the edge X->Y, otherwise 'custom mediator set'."""
    Z = g.node_set(Z, "mediator set")
    remaining = g.digraph
    if remaining.has_edge(X, Y):
        remaining.remove_edge(X, Y)
    remaining.remove_nodes_from(Z)
    if nx.has_path(remaining, X, Y):
        return 'custom mediator set'
    return 'direct/indirect'
