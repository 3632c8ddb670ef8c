"""Seeded generators of random graphs and models used by the property
suites and the consistency checks."""
from collections import OrderedDict
from itertools import product

import numpy as np

from cfmediate.exceptions import ValidationError
from cfmediate.graph import CausalGraph
from cfmediate.scm import DomainSpec, ExogenousSpace, Scm, StructuralEquation

SHAPES = ['free', 'fig2a', 'fig2b']


def random_dag(rng, n_nodes, edge_probability=0.4):
    """DAG over V0..V{n-1}; each forward pair is an edge with the given
    probability."""
    nodes = ['V{}'.format(i) for i in range(n_nodes)]
    edges = [(nodes[i], nodes[j]) for i in range(n_nodes)
            for j in range(i + 1, n_nodes) if rng.random() < edge_probability]
    return CausalGraph(nodes, edges)


def _marginal(rng, size):
    # Mixed with the uniform so that every value keeps a sizeable mass
    weights = 0.5 * rng.dirichlet(np.ones(size)) + 0.5 / size
    return weights / weights.sum()


def _labels(size):
    return [str(i) for i in range(size)]


# Structural table in which every parent configuration maps the noise values
# one to one onto the child domain, so every value has positive probability
# given every parent configuration
def _bijective_table(rng, domain, parent_domains):
    table = OrderedDict()
    for parents in product(*parent_domains):
        permutation = rng.permutation(len(domain))
        for noise in range(len(domain)):
            key = tuple(parents) + (str(noise),)
            table[key] = domain[permutation[noise]]
    return table


def _shape(rng, n_endogenous, shape):
    if shape == 'fig2b':
        return ['X', 'Z', 'Y'], [('X', 'Z'), ('X', 'Y'), ('Z', 'Y')]
    elif shape == 'fig2a':
        return (['S', 'X', 'Z', 'Y'],
                [('S', 'X'), ('S', 'Z'), ('X', 'Z'), ('X', 'Y'), ('Z', 'Y')])
    elif shape != 'free':
        raise ValidationError("Invalid shape: {}. Select one of {}.".format(
            shape, SHAPES))
    if n_endogenous < 3:
        raise ValidationError("A free-shaped model needs at least 3 "
                "endogenous variables")
    middle = ['V{}'.format(i) for i in range(1, n_endogenous - 1)]
    nodes = ['X'] + middle + ['Y']
    edges = [(nodes[i], nodes[j]) for i in range(len(nodes))
            for j in range(i + 1, len(nodes)) if rng.random() < 0.5]
    if ('X', 'Y') not in edges:
        edges.append(('X', 'Y'))
    if not any(child == 'Y' and parent != 'X' for parent, child in edges):
        edges.append((middle[int(rng.integers(len(middle)))], 'Y'))
    return nodes, edges


def scm_from_graph(rng, graph, max_domain=3, markovian=True, name='random',
        confounded=()):
    """Model over the nodes of graph, each with a private noise variable
    U_<node>. With markovian=False the noise variables share one joint that
    does not factorize.

    :param confounded: disjoint node pairs whose noise variables are
                       correlated with each other only
    """
    paired = [node for pair in confounded for node in pair]
    if len(set(paired)) != len(paired):
        raise ValidationError("Confounded pairs must be disjoint: "
                "{}".format(list(confounded)))
    for node in paired:
        graph.node(node, "confounded pair")
    nodes = list(graph.nodes)
    sizes = OrderedDict((node, int(rng.integers(2, max_domain + 1)))
            for node in nodes)
    domains = OrderedDict((node, _labels(size)) for node, size in sizes.items())

    exogenous = OrderedDict(('U_' + node, DomainSpec(domains[node]))
            for node in nodes)
    marginals = OrderedDict(('U_' + node, OrderedDict(zip(domains[node],
        _marginal(rng, sizes[node])))) for node in nodes)

    equations = []
    for node in nodes:
        parents = graph.parents(node)
        table = _bijective_table(rng, domains[node],
                [domains[p] for p in parents])
        equations.append(StructuralEquation(node, DomainSpec(domains[node]),
            parents, ['U_' + node], table))

    if markovian and confounded:
        factors = []
        for a, b in confounded:
            keys = list(product(domains[a], domains[b]))
            shared = rng.dirichlet(np.ones(len(keys)))
            factors.append((nodes.index(a), nodes.index(b), OrderedDict(
                (key, 0.5 * marginals['U_' + a][key[0]]
                    * marginals['U_' + b][key[1]] + 0.5 * mixture)
                for key, mixture in zip(keys, shared))))
        joint = OrderedDict()
        for key in product(*[domains[node] for node in nodes]):
            p = 1.0
            for node, label in zip(nodes, key):
                if node not in paired:
                    p *= marginals['U_' + node][label]
            for i, j, factor in factors:
                p *= factor[(key[i], key[j])]
            joint[key] = p
        space = ExogenousSpace(exogenous, joint)
    elif markovian:
        space = ExogenousSpace.from_marginals(exogenous, marginals)
    else:
        keys = list(product(*[domains[node] for node in nodes]))
        shared = rng.dirichlet(np.ones(len(keys)))
        joint = OrderedDict()
        for key, mixture in zip(keys, shared):
            p = 1.0
            for node, label in zip(nodes, key):
                p *= marginals['U_' + node][label]
            joint[key] = 0.5 * p + 0.5 * mixture
        space = ExogenousSpace(exogenous, joint)
    return Scm(space, equations, name=name)


def random_scm(rng, n_endogenous=4, max_domain=3, markovian=True,
        shape='free', name='random'):
    """Random model with treatment X and outcome Y.

    shape 'free': X is a root, Y the last variable, X->Y present and Y has a
    parent besides X. 'fig2b': X->Z, X->Y, Z->Y. 'fig2a': 'fig2b' plus an
    observed confounder S of X and Z.
    """
    nodes, edges = _shape(rng, n_endogenous, shape)
    return scm_from_graph(rng, CausalGraph(nodes, edges), max_domain,
            markovian, name)


def random_linear_scm(rng, name='linear'):
    """z = c*x + u_Z and y = a*x + b*z + u_Y with small integer coefficients,
    encoded as tables whose numeric codes are the label values."""
    a, b, c = (int(v) for v in rng.integers(0, 3, size=3))
    binary = ['0', '1']
    exogenous = OrderedDict([('U_X', DomainSpec(binary)),
        ('U_Z', DomainSpec(binary)), ('U_Y', DomainSpec(binary))])
    marginals = OrderedDict((u, OrderedDict(zip(binary, _marginal(rng, 2))))
            for u in exogenous)

    def integer_domain(values):
        labels = [str(v) for v in sorted(set(values))]
        return DomainSpec(labels, {label: float(label) for label in labels})

    z_values = [c * x + u for x in (0, 1) for u in (0, 1)]
    y_values = [a * x + b * z + u for x in (0, 1) for z in set(z_values)
            for u in (0, 1)]
    x_domain = DomainSpec(binary)
    z_domain = integer_domain(z_values)
    y_domain = integer_domain(y_values)

    x_table = OrderedDict(((u,), u) for u in binary)
    z_table = OrderedDict(((x, u), str(c * int(x) + int(u)))
            for x in binary for u in binary)
    y_table = OrderedDict(((x, z, u), str(a * int(x) + b * int(z) + int(u)))
            for x in binary for z in z_domain for u in binary)
    equations = [
            StructuralEquation('X', x_domain, [], ['U_X'], x_table),
            StructuralEquation('Z', z_domain, ['X'], ['U_Z'], z_table),
            StructuralEquation('Y', y_domain, ['X', 'Z'], ['U_Y'], y_table)
            ]
    scm = Scm(ExogenousSpace.from_marginals(exogenous, marginals), equations,
            name=name)
    scm.coefficients = (a, b, c)
    return scm
