from abc import ABC, abstractmethod
from collections import namedtuple, OrderedDict
import json
import logging
import os

import yaml

from cfmediate.exceptions import ValidationError, Violation
from cfmediate.scm import (DomainSpec, ExogenousSpace, Scm, StructuralEquation,
    UNIT_CAP)

logger = logging.getLogger(__name__)

DEFAULT_MODEL_DIRECTORY = os.path.join(os.path.dirname(__file__),
        'default_models')

MODEL_EXTENSION = '.json'

TOP_LEVEL_KEYS = ('name', 'exogenous', 'variables')
EXOGENOUS_KEYS = ('name', 'domain', 'marginal')
JOINT_KEYS = ('variables', 'joint')
JOINT_VARIABLE_KEYS = ('name', 'domain')
VARIABLE_KEYS = ('name', 'domain', 'observable', 'parents', 'exo_parents',
        'table', 'numeric_code')

# text: the raw document, scm: the validated model, locations: map from
# document paths to (line, column), both 1-based
ModelDocument = namedtuple('ModelDocument', ['text', 'scm', 'locations'])


# General abstract class for reading and writing model documents.
# Provided as a template for alternative model formats.
class ModelLoader(ABC):

    @abstractmethod
    def parse(self, text, source='<string>'):
        pass

    @abstractmethod
    def dump(self, scm):
        pass

    @abstractmethod
    def resolve(self, name):
        pass

    def load(self, name):
        path = self.resolve(name)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except UnicodeDecodeError as e:
            raise ValidationError("{}: not UTF-8 text, byte {} at offset "
                    "{}".format(path, hex(e.object[e.start]), e.start))
        document = self.parse(text, source=path)
        logger.info("Loaded model {} from {}".format(document.scm.name, path))
        return document


class _Pairs(list):
    pass


def _plain(value):
    if isinstance(value, _Pairs):
        return OrderedDict((k, _plain(v)) for k, v in value)
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


class _DocumentReader():
    """Turns a parsed JSON document into an Scm, collecting every structural
    problem with the line and column where it occurs."""

    def __init__(self, text, source):
        self.source = source
        self.marks = {}
        self.key_marks = {}
        self.semantic = {}
        self.violations = []
        try:
            raw = json.loads(text, object_pairs_hook=_Pairs)
        except json.JSONDecodeError as e:
            raise ValidationError("{}: line {}, column {}: syntax error: "
                    "{}".format(source, e.lineno, e.colno, e.msg),
                    [Violation((), e.msg)])
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError:
            node = None
        self.data = self._walk(raw, node, ())

    @staticmethod
    def _position(node):
        if node is None:
            return None
        return (node.start_mark.line + 1, node.start_mark.column + 1)

    def _walk(self, value, node, path):
        self.marks[path] = self._position(node)
        if isinstance(value, _Pairs):
            pairs = node.value if isinstance(node, yaml.MappingNode) else []
            result = OrderedDict()
            for i, (key, item) in enumerate(value):
                key_node, item_node = pairs[i] if i < len(pairs) else (None, None)
                if key in result:
                    self.error(path, "duplicate key {!r} at {} and {}".format(
                        key, self.describe(self.key_marks.get(path + (key,))),
                        self.describe(self._position(key_node))))
                    continue
                self.key_marks[path + (key,)] = self._position(key_node)
                result[key] = self._walk(item, item_node, path + (key,))
            return result
        if isinstance(value, list):
            items = node.value if isinstance(node, yaml.SequenceNode) else []
            return [self._walk(item, items[i] if i < len(items) else None,
                path + (i,)) for i, item in enumerate(value)]
        return value

    @staticmethod
    def describe(position):
        if position is None:
            return "unknown location"
        return "line {}, column {}".format(*position)

    def locate(self, message, position):
        if position is None:
            return "{}: {}".format(self.source, message)
        return "{}: line {}, column {}: {}".format(self.source, position[0],
                position[1], message)

    def error(self, path, message, key=False):
        position = self.key_marks.get(path) if key else self.marks.get(path)
        self.violations.append(Violation(path, self.locate(message, position)))

    def fail(self):
        if self.violations:
            raise ValidationError("Invalid model document {}: {}".format(
                self.source, "; ".join(v.message for v in self.violations)),
                self.violations)

    # Type checks. Each returns the value or None after recording an error.

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, OrderedDict):
            self.error(path, "expected an object")
            return None
        for key in value:
            if key not in allowed:
                self.error(path + (key,), "unknown key {!r}; allowed keys are "
                        "{}".format(key, list(allowed)), key=True)
        for key in required:
            if key not in value:
                self.error(path, "missing required key {!r}".format(key))
        return value

    def string(self, value, path):
        if not isinstance(value, str):
            self.error(path, "expected a string, got {}".format(
                json.dumps(value)))
            return None
        return value

    def string_list(self, value, path):
        if not isinstance(value, list):
            self.error(path, "expected a list of strings")
            return None
        items = [self.string(item, path + (i,)) for i, item in enumerate(value)]
        return None if None in items else items

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, "expected a number, got {}".format(
                json.dumps(value)))
            return None
        return float(value)

    def domain(self, value, path, numeric_code=None):
        values = self.string_list(value, path)
        if values is None:
            return None
        try:
            return DomainSpec(values, numeric_code)
        except ValidationError as e:
            self.error(path, str(e))
            return None

    def numbers(self, value, path, what="numbers"):
        if not isinstance(value, OrderedDict):
            self.error(path, "expected an object of {}".format(what))
            return None
        result = OrderedDict()
        for key, number in value.items():
            number = self.number(number, path + (key,))
            if number is not None:
                result[key] = number
        return result

    def probabilities(self, value, path):
        return self.numbers(value, path, "probabilities")

    def read(self, unit_cap=UNIT_CAP):
        document = self.mapping(self.data, (), TOP_LEVEL_KEYS,
                ('exogenous', 'variables'))
        self.fail()
        name = 'model'
        if 'name' in document:
            name = self.string(document['name'], ('name',)) or name

        declared = OrderedDict()
        exogenous = self.read_exogenous(document['exogenous'], declared)
        equations, observability = self.read_variables(document['variables'],
                declared)
        self.fail()

        scm = Scm(exogenous, equations, observability, name=name,
                unit_cap=unit_cap)
        for violation in scm.validate():
            self.violations.append(Violation(violation.path, self.locate(
                violation.message, self.semantic_position(violation.path))))
        self.fail()
        return scm

    def declare(self, name, path, declared):
        if name in declared:
            self.error(path, "duplicate variable name {} (declared at {} and "
                    "{})".format(name, self.describe(self.marks.get(
                        declared[name])), self.describe(self.marks.get(path))))
        else:
            declared[name] = path

    def semantic_position(self, path):
        path = tuple(path)
        while path:
            if path in self.semantic:
                return self.semantic[path]
            path = path[:-1]
        return None

    def read_exogenous(self, value, declared):
        path = ('exogenous',)
        variables = OrderedDict()
        if isinstance(value, list):
            marginals = OrderedDict()
            for i, item in enumerate(value):
                item_path = path + (i,)
                item = self.mapping(item, item_path, EXOGENOUS_KEYS,
                        EXOGENOUS_KEYS)
                if item is None or any(k not in item for k in EXOGENOUS_KEYS):
                    continue
                name = self.string(item['name'], item_path + ('name',))
                domain = self.domain(item['domain'], item_path + ('domain',))
                marginal = self.probabilities(item['marginal'],
                        item_path + ('marginal',))
                if name is None or domain is None or marginal is None:
                    continue
                self.declare(name, item_path, declared)
                self.semantic[('exogenous', name)] = self.marks[item_path
                        + ('marginal',)]
                variables[name] = domain
                marginals[name] = marginal
            return ExogenousSpace.from_marginals(variables, marginals)

        block = self.mapping(value, path, JOINT_KEYS, JOINT_KEYS)
        if block is None or any(k not in block for k in JOINT_KEYS):
            return ExogenousSpace(variables, {})
        if not isinstance(block['variables'], list):
            self.error(path + ('variables',), "expected a list of variables")
            return ExogenousSpace(variables, {})
        for i, item in enumerate(block['variables']):
            item_path = path + ('variables', i)
            item = self.mapping(item, item_path, JOINT_VARIABLE_KEYS,
                    JOINT_VARIABLE_KEYS)
            if item is None or any(k not in item for k in JOINT_VARIABLE_KEYS):
                continue
            name = self.string(item['name'], item_path + ('name',))
            domain = self.domain(item['domain'], item_path + ('domain',))
            if name is None or domain is None:
                continue
            self.declare(name, item_path, declared)
            self.semantic[('exogenous', name)] = self.marks[item_path]
            variables[name] = domain
        joint = self.probabilities(block['joint'], path + ('joint',)) or {}
        self.semantic[('exogenous', 'joint')] = self.marks[path + ('joint',)]
        for key in joint:
            self.semantic[('exogenous', 'joint', key)] = self.key_marks[
                    path + ('joint', key)]
        return ExogenousSpace(variables, joint)

    def read_variables(self, value, declared):
        path = ('variables',)
        equations, observability = [], OrderedDict()
        if not isinstance(value, list):
            self.error(path, "expected a list of variables")
            return equations, observability
        for i, item in enumerate(value):
            item_path = path + (i,)
            item = self.mapping(item, item_path, VARIABLE_KEYS,
                    ('name', 'domain', 'table'))
            if item is None or any(k not in item
                    for k in ('name', 'domain', 'table')):
                continue
            name = self.string(item['name'], item_path + ('name',))
            numeric_code = None
            if 'numeric_code' in item:
                numeric_code = self.numbers(item['numeric_code'],
                        item_path + ('numeric_code',), "numeric codes")
            domain = self.domain(item['domain'], item_path + ('domain',),
                    numeric_code)
            parents = self.string_list(item.get('parents', []),
                    item_path + ('parents',))
            exo_parents = self.string_list(item.get('exo_parents', []),
                    item_path + ('exo_parents',))
            observable = item.get('observable', True)
            if not isinstance(observable, bool):
                self.error(item_path + ('observable',), "expected true or "
                        "false")
                continue
            table = item['table']
            if not isinstance(table, OrderedDict):
                self.error(item_path + ('table',), "expected an object mapping "
                        "parent values to outputs")
                continue
            outputs = OrderedDict((key, self.string(output,
                item_path + ('table', key))) for key, output in table.items())
            if None in (name, domain, parents, exo_parents) or \
                    None in outputs.values():
                continue

            self.declare(name, item_path, declared)
            self.semantic[('variables', name)] = self.marks[item_path]
            for field in ('parents', 'exo_parents', 'table'):
                if item_path + (field,) in self.marks:
                    self.semantic[('variables', name, field)] = \
                            self.marks[item_path + (field,)]
            for key in outputs:
                self.semantic[('variables', name, 'table', key)] = \
                        self.key_marks[item_path + ('table', key)]
            equations.append(StructuralEquation(name, domain, parents,
                exo_parents, outputs))
            observability[name] = observable
        return equations, observability


# Canonical JSON document for a model: fixed key order, two-space indent,
# numeric codes only when they differ from the ordinal default
def dump_model(scm):
    exogenous = scm.exogenous
    if exogenous.marginals is not None:
        exogenous_doc = [OrderedDict([
            ('name', name),
            ('domain', list(domain.values)),
            ('marginal', OrderedDict(exogenous.marginals[name]))
            ]) for name, domain in exogenous.variables.items()]
    else:
        exogenous_doc = OrderedDict([
            ('variables', [OrderedDict([('name', name),
                ('domain', list(domain.values))])
                for name, domain in exogenous.variables.items()]),
            ('joint', OrderedDict((",".join(key), p)
                for key, p in exogenous.joint.items()))
            ])

    variables = []
    for eq in scm.equation_list:
        entry = OrderedDict([
            ('name', eq.child),
            ('domain', list(eq.domain.values)),
            ('observable', bool(scm.observability[eq.child])),
            ('parents', list(eq.endogenous_parents)),
            ('exo_parents', list(eq.exogenous_parents)),
            ('table', OrderedDict((",".join(key), value)
                for key, value in eq.table.items()))
            ])
        if not eq.domain.has_default_coding():
            entry['numeric_code'] = OrderedDict(eq.domain.numeric_code)
        variables.append(entry)

    document = OrderedDict([('name', scm.name), ('exogenous', exogenous_doc),
        ('variables', variables)])
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


class JSONModelLoader(ModelLoader):
    """Reads model documents in JSON syntax.

    :param model_directory: directory searched for NAME.json when a model is
                            given by name (defaults to the shipped models)
    :param unit_cap: refuse models with larger exogenous supports
    """

    def __init__(self, model_directory=None, unit_cap=UNIT_CAP):
        self.model_directory = model_directory or DEFAULT_MODEL_DIRECTORY
        self.unit_cap = unit_cap

    def resolve(self, name):
        if os.path.isfile(name):
            return name
        path = os.path.join(self.model_directory, name + MODEL_EXTENSION)
        if os.path.isfile(path):
            return path
        raise ValidationError("Model not found: {} (looked for a file and for "
                "{})".format(name, path))

    def parse(self, text, source='<string>'):
        reader = _DocumentReader(text, source)
        scm = reader.read(unit_cap=self.unit_cap)
        scm.get_metadata()
        locations = OrderedDict((path, position)
                for path, position in reader.semantic.items()
                if position is not None)
        return ModelDocument(text, scm, locations)

    def dump(self, scm):
        return dump_model(scm)

    def available_models(self):
        return sorted(os.path.splitext(f)[0]
                for f in os.listdir(self.model_directory)
                if f.endswith(MODEL_EXTENSION))


def parse_model(text, source='<string>', unit_cap=UNIT_CAP):
    return JSONModelLoader(unit_cap=unit_cap).parse(text, source)
