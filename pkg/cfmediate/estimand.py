from abc import ABC, abstractmethod
from collections import namedtuple, OrderedDict
from itertools import product
import logging

import pandas as pd

from cfmediate.effects import default_mediators, nde_avg, nie_avg
from cfmediate.exceptions import (CfmediateError, CriterionError,
    EstimandError, ValidationError, ZeroMassError)
from cfmediate.graph import (MutilationSpec, backdoor_admissible,
    check_experimental_criterion, d_separated, descendants, mutilate)
from cfmediate.scm import (WEIGHT_COLUMN, DomainSpec, Dataset, Regime,
    format_assignment, outcome_coding)

logger = logging.getLogger(__name__)

FORMULAS = ['eq8', 'eq15', 'eq17', 'eq26', 'eq27']

# Effect each formula identifies
FORMULA_EFFECTS = OrderedDict([('eq8', 'nde'), ('eq15', 'nde'),
    ('eq17', 'nde'), ('eq26', 'nie'), ('eq27', 'nie')])

CROSSCHECK_TOLERANCE = 1e-9

VERIFIED = 'verified'
UNVERIFIED = 'unverified premises'

# table: map from target value tuples to probabilities
# completed: the table came from the structural kernel because the
# conditioning event had zero mass
Conditional = namedtuple('Conditional', ['table', 'completed'])

SkippedStratum = namedtuple('SkippedStratum', ['stratum', 'mass', 'reason'])

EstimandResult = namedtuple('EstimandResult', ['value', 'formula',
    'skipped_strata', 'skipped_mass', 'used_mass', 'completed_strata',
    'sample_sizes', 'premises', 'warnings'])

CrosscheckReport = namedtuple('CrosscheckReport', ['formula', 'ground_truth',
    'estimate', 'gap', 'passed', 'premises', 'result', 'error'])


# General abstract class answering probability and expectation queries under
# named regimes. Every query is answered from the declared source only.
class DistributionProvider(ABC):

    graph = None
    smoothing = False

    # Weighted frame of the assignments observed under the regime, one column
    # per variable plus WEIGHT_COLUMN
    @abstractmethod
    def frame(self, regime):
        pass

    @abstractmethod
    def domain(self, name):
        pass

    # Conditional of the targets given a zero-mass event, or None
    def complete(self, regime, targets, given):
        return None

    def require(self, regimes):
        for regime in regimes:
            self.frame(regime)

    def sample_sizes(self, regimes):
        return None

    def coding(self, name, indicator=None):
        return outcome_coding(self.domain(name), indicator)

    def assignments(self, names):
        names = list(names)
        return [OrderedDict(zip(names, values)) for values in
                product(*[self.domain(name).values for name in names])]

    def conditional(self, regime, targets, given=None):
        """P(targets | given) under the regime, over the full product of the
        target domains in declared order."""
        regime = Regime.coerce(regime)
        targets = list(targets)
        given = OrderedDict(given or {})
        frame = self.frame(regime)
        for name in targets + list(given):
            if name not in frame.columns:
                raise EstimandError("No column {} in the data for regime "
                        "{}".format(name, regime))

        mask = pd.Series(True, index=frame.index)
        for name, value in given.items():
            mask &= frame[name] == value
        selected = frame[mask]
        denominator = selected[WEIGHT_COLUMN].sum()
        keys = [tuple(a.values()) for a in self.assignments(targets)]

        if denominator == 0 and not self.smoothing:
            table = self.complete(regime, targets, given)
            if table is None:
                raise ZeroMassError("P({}) = 0 under {}".format(
                    format_assignment(given) or 'true', regime), event=given)
            return Conditional(table, True)

        counts = OrderedDict((key, 0) for key in keys)
        if targets:
            grouped = selected.groupby(targets, sort=False)[WEIGHT_COLUMN].sum()
            for key, weight in grouped.items():
                key = key if isinstance(key, tuple) else (key,)
                counts[key] = counts.get(key, 0) + weight
        else:
            counts[()] = denominator
        if self.smoothing:
            counts = OrderedDict((key, count + 1) for key, count in counts.items())
            denominator = denominator + len(keys)
        return Conditional(OrderedDict((key, float(count / denominator))
            for key, count in counts.items()), False)

    def expectation(self, regime, name, coding, given=None):
        conditional = self.conditional(regime, [name], given)
        value = 0.0
        for (label,), p in conditional.table.items():
            value += coding[label] * p
        return value, conditional.completed


class ExactProvider(DistributionProvider):
    """Answers queries from exact distributions of a model.

    Zero-mass conditioning events are completed from the structural kernel
    when the conditioning variables, the targets and the regime's fixed
    variables cover every endogenous parent of the targets: the conditional
    is then the target distribution under an intervention fixing the
    conditioning values.
    """

    def __init__(self, scm):
        self.scm = scm
        self.graph = scm.induced_graph
        self._frames = {}

    def frame(self, regime):
        regime = self.scm.check_regime(regime)
        if regime not in self._frames:
            self._frames[regime] = self.scm.exact_distribution(regime).to_frame()
        return self._frames[regime]

    def domain(self, name):
        return self.scm.domain(name)

    def complete(self, regime, targets, given):
        if not targets:
            return None
        for name, value in given.items():
            if name in regime.fixings and regime.fixings[name] != value:
                return None
        covered = set(given) | set(targets) | set(regime.fixings)
        for target in targets:
            if not set(self.scm.parents(target)) <= covered:
                return None
        fixed = regime.merged(given)
        distribution = self.scm.exact_distribution(fixed, over=targets)
        table = OrderedDict((tuple(a.values()), 0.0)
                for a in self.assignments(targets))
        for key, p in distribution.probability.items():
            table[key] += p
        logger.debug("Completed P({} | {}) under {} from the structural "
                "kernel".format(",".join(targets), format_assignment(given),
                    regime))
        return table


def _infer_domain(name, labels):
    labels = sorted(set(labels))
    if '' in labels:
        raise ValidationError("Variable {} has an empty value in the "
                "data".format(name))
    try:
        codes = {label: float(label) for label in labels}
    except ValueError:
        return DomainSpec(labels)
    labels = sorted(labels, key=lambda label: (codes[label], label))
    return DomainSpec(labels, codes)


class DatasetProvider(DistributionProvider):
    """Answers queries from sampled data.

    :param datasets: a Dataset or a list of Datasets, at most one per regime
    :param graph: optional CausalGraph used to verify formula premises
    :param domains: optional map from variable names to DomainSpec; inferred
                    from the data when omitted
    :param smoothing: add one to every cell count
    """

    def __init__(self, datasets, graph=None, domains=None, smoothing=False):
        if isinstance(datasets, Dataset):
            datasets = [datasets]
        self.datasets = OrderedDict()
        for dataset in datasets:
            if dataset.regime in self.datasets:
                raise ValidationError("Two datasets declare regime "
                        "{}".format(dataset.regime))
            self.datasets[dataset.regime] = dataset
        if not self.datasets:
            raise ValidationError("No datasets given")
        self.graph = graph
        self.smoothing = smoothing
        self._frames = OrderedDict((regime, self._aggregate(dataset.frame))
                for regime, dataset in self.datasets.items())

        if domains is None:
            labels = OrderedDict()
            for regime, dataset in self.datasets.items():
                for column in dataset.columns:
                    labels.setdefault(column, set()).update(
                            dataset.frame[column].unique())
                for name, value in regime.fixings.items():
                    labels.setdefault(name, set()).add(value)
            domains = OrderedDict((name, _infer_domain(name, values))
                    for name, values in labels.items())
        self.domains = domains
        for regime, dataset in self.datasets.items():
            logger.info("Dataset for regime {}: {} rows, columns {}".format(
                regime, len(dataset), list(dataset.columns)))

    @staticmethod
    def _aggregate(frame):
        columns = list(frame.columns)
        return frame.groupby(columns, sort=True).size().reset_index(
                name=WEIGHT_COLUMN)

    def domain(self, name):
        if name not in self.domains:
            raise EstimandError("No domain known for variable {}".format(name))
        return self.domains[name]

    def _source(self, regime):
        if regime in self.datasets:
            return regime, OrderedDict()
        # A randomized experiment serves a do-regime through the rows whose
        # randomized values match the requested fixings
        for candidate in self.datasets:
            if not candidate.randomized:
                continue
            selection = OrderedDict()
            matches = True
            for name, value in regime.fixings.items():
                if name in candidate.randomized:
                    selection[name] = value
                elif candidate.fixings.get(name) != value:
                    matches = False
            extra = set(candidate.fixings) - set(regime.fixings)
            if matches and not extra and selection and \
                    set(selection) == set(candidate.randomized):
                return candidate, selection
        raise EstimandError("No dataset for regime {}; available regimes: "
                "{}".format(regime, [str(r) for r in self.datasets]))

    def frame(self, regime):
        regime = Regime.coerce(regime)
        source, selection = self._source(regime)
        frame = self._frames[source]
        if selection:
            mask = pd.Series(True, index=frame.index)
            for name, value in selection.items():
                mask &= frame[name] == value
            frame = frame[mask]
        return frame

    def sample_sizes(self, regimes):
        sizes = OrderedDict()
        for regime in regimes:
            sizes[str(regime)] = int(self.frame(regime)[WEIGHT_COLUMN].sum())
        return sizes


class StratumLedger():

    def __init__(self):
        self.used_mass = 0.0
        self.skipped = []
        self.completed = []
        self.warnings = []

    def use(self, mass, completed=False, stratum=None):
        self.used_mass += mass
        if completed:
            self.completed.append(format_assignment(stratum))

    def skip(self, stratum, mass, reason):
        self.skipped.append(SkippedStratum(format_assignment(stratum), mass,
            reason))
        if mass > 0:
            message = ("Positivity violation: stratum {} with weight {} "
                    "skipped ({})".format(format_assignment(stratum) or '{}',
                        mass, reason))
            logger.warning(message)
            self.warnings.append(message)
        else:
            logger.debug("Skipped zero-mass stratum {}".format(
                format_assignment(stratum) or '{}'))

    @property
    def skipped_mass(self):
        total = 0.0
        for stratum in self.skipped:
            total += stratum.mass
        return total


def _merge(*assignments):
    merged = OrderedDict()
    for assignment in assignments:
        merged.update(assignment)
    return merged


def _resolve_mediators(provider, X, Y, Zset):
    if Zset is not None:
        return tuple(Zset)
    if isinstance(provider, ExactProvider):
        return default_mediators(provider.scm, X, Y)
    if provider.graph is not None:
        return tuple(p for p in provider.graph.parents(Y)
                if p != X and p not in provider.graph.exogenous)
    raise ValidationError("A mediator set is required when no graph "
            "accompanies the data")


def _check_query(provider, X, x, x_ref, Zset, Y, covariates):
    Zset = _resolve_mediators(provider, X, Y, Zset)
    if not Zset:
        raise ValidationError("Mediator set must not be empty")
    covariates = tuple(covariates)
    roles = [X, Y] + list(Zset)
    if len(set(roles)) != len(roles):
        raise ValidationError("Treatment, outcome and mediators must be "
                "distinct: {}".format(roles))
    overlap = set(covariates) & set(roles)
    if overlap:
        raise ValidationError("Covariates overlap treatment, mediator or "
                "outcome: {}".format(sorted(overlap)))
    domain = provider.domain(X)
    for value in (x, x_ref):
        if value not in domain:
            raise ValidationError("Value {!r} is not in the domain of {} "
                    "{}".format(value, X, list(domain.values)))
    for name in list(Zset) + [Y] + list(covariates):
        provider.domain(name)
    return Zset, covariates


def _premise(graph, check, enforce):
    if graph is None:
        return UNVERIFIED
    try:
        reason = check(graph)
    except CriterionError as e:
        reason = str(e)
    if reason is None:
        return VERIFIED
    if enforce:
        raise CriterionError("Premise violated: {}".format(reason))
    logger.warning("Premise violated: {}".format(reason))
    return 'violated: ' + reason


def _experimental_check(X, Zset, Y, W):
    def check(graph):
        if check_experimental_criterion(graph, X, Zset, Y, W):
            return None
        return ("{{{}}} does not d-separate {} from {{{}}} once the arrows "
                "emanating from {} and the mediators are deleted".format(
                    ",".join(W), Y, ",".join(Zset), X))
    return check


def _adjustment_check(X, Zset, Y, S):
    def check(graph):
        if not backdoor_admissible(graph, X, Zset, S):
            return ("{{{}}} does not satisfy the back-door criterion for {} -> "
                    "{{{}}}".format(",".join(S), X, ",".join(Zset)))
        offending = graph.sort_nodes(set(S) & descendants(graph, Zset))
        if offending:
            return "{} is a descendant of a mediator".format(offending[0])
        mutilated = mutilate(graph, MutilationSpec(
            delete_outgoing_of=frozenset(Zset) | {X}))
        if not d_separated(mutilated, {Y}, set(Zset) | {X}, S):
            return ("{{{}}} does not block the back-door paths from {} and the "
                    "mediators to {}".format(",".join(S), X, Y))
        return None
    return check


def _result(value, formula, ledger, provider, regimes, premises):
    result = EstimandResult(value, formula, ledger.skipped,
            ledger.skipped_mass, ledger.used_mass, ledger.completed,
            provider.sample_sizes(regimes), premises, ledger.warnings)
    logger.info("{}: {} (premises {}, {} skipped strata, {} completed)".format(
        formula, value, premises, len(ledger.skipped), len(ledger.completed)))
    return result


def nde_eq8(provider, X, x, x_ref, Zset, Y, W=(), indicator=None,
        enforce_premises=False):
    """Experimental estimand of the natural direct effect:
    sum over w, z of [E(Y_xz|w) - E(Y_x*z|w)] P(Z_x* = z|w) P(w)."""
    Zset, W = _check_query(provider, X, x, x_ref, Zset, Y, W)
    premises = _premise(provider.graph, _experimental_check(X, Zset, Y, W),
            enforce_premises)
    coding = provider.coding(Y, indicator)
    reference = Regime({X: x_ref})
    z_values = provider.assignments(Zset)
    regimes = [Regime(_merge({X: v}, z)) for v in (x, x_ref) for z in z_values]
    regimes.append(reference)
    provider.require(regimes)

    ledger = StratumLedger()
    marginal = provider.conditional(reference, W).table
    value = 0.0
    for w in provider.assignments(W):
        p_w = marginal[tuple(w.values())]
        if p_w == 0:
            ledger.skip(w, 0.0, "P(w) = 0")
            continue
        try:
            mediator = provider.conditional(reference, Zset, w)
        except ZeroMassError as e:
            ledger.skip(w, p_w, str(e))
            continue
        for z in z_values:
            stratum = _merge(w, z)
            weight = mediator.table[tuple(z.values())] * p_w
            if weight == 0:
                ledger.skip(stratum, 0.0, "P(Z_x* = z | w) = 0")
                continue
            try:
                treated, c1 = provider.expectation(Regime(_merge({X: x}, z)),
                        Y, coding, w)
                untreated, c0 = provider.expectation(
                        Regime(_merge({X: x_ref}, z)), Y, coding, w)
            except ZeroMassError as e:
                ledger.skip(stratum, weight, str(e))
                continue
            value += (treated - untreated) * weight
            ledger.use(weight, c1 or c0 or mediator.completed, stratum)
    return _result(value, 'eq8', ledger, provider, regimes, premises)


def nie_eq26(provider, X, x, x_ref, Zset, Y, W=(), indicator=None,
        enforce_premises=False):
    """Experimental estimand of the natural indirect effect:
    sum over w, z of E(Y_x*z|w) [P(Z_x = z|w) - P(Z_x* = z|w)] P(w)."""
    Zset, W = _check_query(provider, X, x, x_ref, Zset, Y, W)
    premises = _premise(provider.graph, _experimental_check(X, Zset, Y, W),
            enforce_premises)
    coding = provider.coding(Y, indicator)
    treated_regime, reference = Regime({X: x}), Regime({X: x_ref})
    z_values = provider.assignments(Zset)
    regimes = [Regime(_merge({X: x_ref}, z)) for z in z_values]
    regimes.extend([treated_regime, reference])
    provider.require(regimes)

    ledger = StratumLedger()
    marginal = provider.conditional(reference, W).table
    value = 0.0
    for w in provider.assignments(W):
        p_w = marginal[tuple(w.values())]
        if p_w == 0:
            ledger.skip(w, 0.0, "P(w) = 0")
            continue
        try:
            shifted = provider.conditional(treated_regime, Zset, w)
            mediator = provider.conditional(reference, Zset, w)
        except ZeroMassError as e:
            ledger.skip(w, p_w, str(e))
            continue
        for z in z_values:
            stratum = _merge(w, z)
            key = tuple(z.values())
            weight = (shifted.table[key] + mediator.table[key]) / 2 * p_w
            if weight == 0:
                ledger.skip(stratum, 0.0, "P(Z_x = z | w) = P(Z_x* = z | w) = 0")
                continue
            try:
                outcome, completed = provider.expectation(
                        Regime(_merge({X: x_ref}, z)), Y, coding, w)
            except ZeroMassError as e:
                ledger.skip(stratum, weight, str(e))
                continue
            value += outcome * (shifted.table[key] - mediator.table[key]) * p_w
            ledger.use(weight, completed or shifted.completed
                    or mediator.completed, stratum)
    return _result(value, 'eq26', ledger, provider, regimes, premises)


def _nde_adjusted(provider, X, x, x_ref, Zset, Y, S, indicator, formula,
        premises):
    coding = provider.coding(Y, indicator)
    observational = Regime()
    provider.require([observational])
    ledger = StratumLedger()
    marginal = provider.conditional(observational, S).table
    value = 0.0
    for s in provider.assignments(S):
        p_s = marginal[tuple(s.values())]
        if p_s == 0:
            ledger.skip(s, 0.0, "P(s) = 0")
            continue
        try:
            mediator = provider.conditional(observational, Zset,
                    _merge({X: x_ref}, s))
        except ZeroMassError as e:
            ledger.skip(s, p_s, str(e))
            continue
        for z in provider.assignments(Zset):
            stratum = _merge(s, z)
            weight = mediator.table[tuple(z.values())] * p_s
            if weight == 0:
                ledger.skip(stratum, 0.0, "P(z | x*, s) = 0")
                continue
            try:
                treated, c1 = provider.expectation(observational, Y, coding,
                        _merge({X: x}, z, s))
                untreated, c0 = provider.expectation(observational, Y, coding,
                        _merge({X: x_ref}, z, s))
            except ZeroMassError as e:
                ledger.skip(stratum, weight, str(e))
                continue
            value += (treated - untreated) * weight
            ledger.use(weight, c1 or c0 or mediator.completed, stratum)
    return _result(value, formula, ledger, provider, [observational], premises)


def nde_eq15(provider, X, x, x_ref, Zset, Y, S=(), indicator=None,
        enforce_premises=False):
    """Nonexperimental estimand of the natural direct effect with a
    back-door set S:
    sum over s, z of [E(Y|x,z,s) - E(Y|x*,z,s)] P(z|x*,s) P(s)."""
    Zset, S = _check_query(provider, X, x, x_ref, Zset, Y, S)
    premises = _premise(provider.graph, _adjustment_check(X, Zset, Y, S),
            enforce_premises)
    return _nde_adjusted(provider, X, x, x_ref, Zset, Y, S, indicator, 'eq15',
            premises)


def nde_eq17(provider, X, x, x_ref, Zset, Y, indicator=None,
        enforce_premises=False):
    """Weighted average of the controlled direct effect for an unconfounded
    X -> Z: sum over z of [E(Y|x,z) - E(Y|x*,z)] P(z|x*)."""
    Zset, _ = _check_query(provider, X, x, x_ref, Zset, Y, ())
    premises = _premise(provider.graph, _adjustment_check(X, Zset, Y, ()),
            enforce_premises)
    return _nde_adjusted(provider, X, x, x_ref, Zset, Y, (), indicator, 'eq17',
            premises)


def nie_eq27(provider, X, x, x_ref, Zset, Y, indicator=None,
        enforce_premises=False):
    """Nonexperimental estimand of the natural indirect effect for an
    unconfounded X -> Z: sum over z of E(Y|x*,z) [P(z|x) - P(z|x*)]."""
    Zset, _ = _check_query(provider, X, x, x_ref, Zset, Y, ())
    premises = _premise(provider.graph, _adjustment_check(X, Zset, Y, ()),
            enforce_premises)
    coding = provider.coding(Y, indicator)
    observational = Regime()
    provider.require([observational])
    ledger = StratumLedger()
    value = 0.0
    try:
        shifted = provider.conditional(observational, Zset, {X: x})
        mediator = provider.conditional(observational, Zset, {X: x_ref})
    except ZeroMassError as e:
        ledger.skip(OrderedDict(), 1.0, str(e))
        return _result(value, 'eq27', ledger, provider, [observational],
                premises)
    for z in provider.assignments(Zset):
        key = tuple(z.values())
        weight = (shifted.table[key] + mediator.table[key]) / 2
        if weight == 0:
            ledger.skip(z, 0.0, "P(z | x) = P(z | x*) = 0")
            continue
        try:
            outcome, completed = provider.expectation(observational, Y, coding,
                    _merge({X: x_ref}, z))
        except ZeroMassError as e:
            ledger.skip(z, weight, str(e))
            continue
        value += outcome * (shifted.table[key] - mediator.table[key])
        ledger.use(weight, completed or shifted.completed or mediator.completed,
                z)
    return _result(value, 'eq27', ledger, provider, [observational], premises)


def estimate(provider, formula, X, x, x_ref, Zset, Y, covariates=(),
        indicator=None, enforce_premises=False):
    """Dispatch to the estimand named by formula. covariates is W for eq8
    and eq26, S for eq15, and must be empty otherwise."""
    covariates = tuple(covariates or ())
    if formula == 'eq8':
        return nde_eq8(provider, X, x, x_ref, Zset, Y, covariates, indicator,
                enforce_premises)
    elif formula == 'eq26':
        return nie_eq26(provider, X, x, x_ref, Zset, Y, covariates, indicator,
                enforce_premises)
    elif formula == 'eq15':
        return nde_eq15(provider, X, x, x_ref, Zset, Y, covariates, indicator,
                enforce_premises)
    elif formula in ('eq17', 'eq27'):
        if covariates:
            raise ValidationError("Formula {} takes no covariates; got "
                    "{}".format(formula, list(covariates)))
        if formula == 'eq17':
            return nde_eq17(provider, X, x, x_ref, Zset, Y, indicator,
                    enforce_premises)
        return nie_eq27(provider, X, x, x_ref, Zset, Y, indicator,
                enforce_premises)
    raise ValidationError("Invalid formula: {}. Select one of {}.".format(
        formula, FORMULAS))


def crosscheck(scm, formula, query, covariates=(), tolerance=CROSSCHECK_TOLERANCE):
    """Compare the estimand on the exact provider with the ground truth.
    Failures are reported in the returned CrosscheckReport, never raised."""
    try:
        if formula not in FORMULA_EFFECTS:
            raise ValidationError("Invalid formula: {}. Select one of "
                    "{}.".format(formula, FORMULAS))
        Zset = query.Zset
        if Zset is None:
            Zset = default_mediators(scm, query.X, query.Y)
        if FORMULA_EFFECTS[formula] == 'nde':
            truth = nde_avg(scm, query.X, query.x, query.x_ref, Zset, query.Y,
                    query.indicator)
        else:
            truth = nie_avg(scm, query.X, query.x, query.x_ref, Zset, query.Y,
                    query.indicator)
        result = estimate(ExactProvider(scm), formula, query.X, query.x,
                query.x_ref, Zset, query.Y, covariates, query.indicator)
    except CfmediateError as e:
        logger.warning("Crosscheck {} on {} failed: {}".format(formula,
            scm.name, e))
        return CrosscheckReport(formula, None, None, None, False, None, None,
                str(e))
    gap = abs(result.value - truth)
    passed = gap <= tolerance
    logger.info("Crosscheck {} on {}: truth {}, estimate {}, gap {} -> "
            "{}".format(formula, scm.name, truth, result.value, gap,
                'pass' if passed else 'fail'))
    return CrosscheckReport(formula, truth, result.value, gap, passed,
            result.premises, result, None)
