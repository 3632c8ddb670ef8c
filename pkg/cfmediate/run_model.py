import argparse
from collections import OrderedDict
import copy
import logging
import os
from pprint import pformat
import sys
import time

import yaml

from cfmediate.data_loading import CSVDataLoader
from cfmediate.effects import (EFFECT_KINDS, EffectQuery, compute_effect,
    default_mediators, nde_avg, nie_avg, pse, te_avg, cde_avg,
    te_decomposition)
from cfmediate.estimand import (FORMULAS, FORMULA_EFFECTS, UNVERIFIED,
    VERIFIED, DatasetProvider, ExactProvider, crosscheck, estimate)
from cfmediate.exceptions import (CapacityError, CfmediateError,
    CriterionError, EstimandError, ValidationError)
from cfmediate.graph import (COROLLARY1_CONVENTIONS, WITNESS_MODES,
    backdoor_admissible, check_corollary1, check_experimental_criterion,
    search_witnesses)
from cfmediate.model_loading import JSONModelLoader
from cfmediate.reporting import REPORT_FORMATS, Report
from cfmediate.scm import (PathSubgraph, Regime, format_assignment,
    parse_assignment)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAILURE = 2

DEFAULT_CONFIG = {
        'Logging': {'log_directory': None},
        'Graph': {'node_cap': 20, 'convention': 'printed'},
        'Model': {'unit_cap': 10 ** 7, 'model_directory': None},
        'Estimation': {'tolerance': 1e-9, 'smoothing': False},
        'Reporting': {'significant_digits': 12, 'format': 'text'},
        'Sampling': {'seed': 0, 'delimiter': ','}
        }


def load_config(path=None):
    """Built-in defaults, overridden section by section by the YAML file."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return config
    try:
        with open(path, 'r') as config_file:
            user_config = yaml.safe_load(config_file) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ValidationError("Could not read configuration file {}: "
                "{}".format(path, e))
    if not isinstance(user_config, dict):
        raise ValidationError("Invalid configuration file {}: expected a "
                "mapping of sections".format(path))
    for section, values in user_config.items():
        if section not in config:
            raise ValidationError("Unknown configuration section {} in "
                    "{}".format(section, path))
        if not isinstance(values, dict):
            raise ValidationError("Configuration section {} in {} must be a "
                    "mapping".format(section, path))
        for key, value in values.items():
            if key not in config[section]:
                raise ValidationError("Unknown configuration key {}.{} in "
                        "{}".format(section, key, path))
            config[section][key] = value
    return config


def setup_logging(config, log_dir, debug, log_to_file):

    # Set up logger
    logger = logging.getLogger()

    if debug:
        logger.setLevel(logging.DEBUG)
    else:
        logger.setLevel(logging.INFO)

    logger.handlers = [] # remove existing handlers from any previous runs
    if not log_to_file:
        handler = logging.StreamHandler()
    else:
        # Log configuration to a text file in the log dir
        if not os.path.exists(log_dir): os.makedirs(log_dir)
        time_str = time.strftime('%Y%m%d_%H%M%S')
        config_filename = os.path.join(log_dir, time_str + '_config.yml')
        with open(config_filename, 'w') as outfile:
            yaml.dump(config, outfile, default_flow_style=False)
        logging_filename = os.path.join(log_dir, time_str + '_logfile.log')
        handler = logging.FileHandler(logging_filename)
    handler.setFormatter(logging.Formatter("%(levelname)s:%(message)s"))
    logger.addHandler(handler)

    return logger


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise ValidationError("{}: {}".format(self.prog, message))


def parse_names(text):
    if text is None:
        return None
    return tuple(name.strip() for name in text.split(',') if name.strip())


def build_parser():
    common = _ArgumentParser(add_help=False)
    common.add_argument(
            '--config',
            help="path to YAML configuration file")
    common.add_argument(
            '--debug',
            action='store_true',
            help="print debug/logger messages")
    common.add_argument(
            '--log_to_file',
            action='store_true',
            help="log to a file in the log directory instead of terminal")
    common.add_argument(
            '--format',
            choices=REPORT_FORMATS,
            help="report format (machine emits a YAML document)")
    common.add_argument(
            '--output',
            help="write the report to this path instead of stdout")
    common.add_argument(
            '--model',
            help="model document path, or the name of a model in the model "
            "directory")

    query = _ArgumentParser(add_help=False)
    query.add_argument('--X', help="treatment variable")
    query.add_argument('--x', help="treatment value")
    query.add_argument('--xref', help="reference treatment value x*")
    query.add_argument('--Y', help="outcome variable")
    query.add_argument(
            '--Z',
            help="comma-separated mediator set (default: parents of Y "
            "except X)")

    parser = _ArgumentParser(prog='cfmediate',
            description=("Exact counterfactual mediation analysis over "
                "discrete structural causal models."))
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    effects = subparsers.add_parser('effects', parents=[common, query],
            help="ground-truth effects by enumeration")
    effects.add_argument('--kind', choices=EFFECT_KINDS, required=True)
    effects.add_argument('--z', help="mediator setting for cde, e.g. Z=1")
    effects.add_argument(
            '--edges',
            help="path-specific subgraph for pse, e.g. X->Z,Z->Y")
    effects.add_argument(
            '--unit',
            help="'all' for the per-unit table, or an exogenous assignment "
            "such as U_X=0")
    effects.add_argument(
            '--indicator',
            help="report effects on the indicator of this outcome label")

    identify = subparsers.add_parser('identify', parents=[common, query],
            help="graphical identification conditions")
    identify.add_argument('--mode', choices=WITNESS_MODES, required=True)
    identify.add_argument('--W', help="covariate (or back-door) set")
    for i in range(4):
        identify.add_argument('--W{}'.format(i),
                help="covariate set W{} of the nonexperimental "
                "criterion".format(i))
    identify.add_argument('--convention',
            choices=list(COROLLARY1_CONVENTIONS))
    identify.add_argument(
            '--witness-search',
            dest='witness_search',
            action='store_true',
            help="search the smallest covariate sets satisfying the criterion")

    estimation = subparsers.add_parser('estimate', parents=[common, query],
            help="evaluate an identification estimand")
    estimation.add_argument('--formula', choices=FORMULAS, required=True)
    estimation.add_argument('--provider', choices=['exact', 'dataset'],
            default='exact')
    estimation.add_argument('--W', help="covariate set for eq8/eq26")
    estimation.add_argument('--S', help="back-door set for eq15")
    estimation.add_argument('--data', nargs='+',
            help="dataset files, each with a .regime sidecar")
    estimation.add_argument('--smoothing', action='store_true',
            help="add one to every cell count")
    estimation.add_argument(
            '--no_premise_check',
            action='store_true',
            help="report violated premises instead of failing")
    estimation.add_argument('--indicator')

    sample = subparsers.add_parser('sample', parents=[common],
            help="draw a dataset from a model")
    sample.add_argument('--n', type=int, required=True)
    sample.add_argument('--seed', type=int)
    sample.add_argument('--regime', default='observational',
            help="'observational', 'do:VAR=value,...' or 'randomize:VAR,...'")
    sample.add_argument('--file', required=True,
            help="path of the dataset file to write")

    check = subparsers.add_parser('check', parents=[common],
            help="identity and crosscheck battery over a model")
    check.add_argument('--X', default='X')
    check.add_argument('--Y', default='Y')
    check.add_argument('--Z')

    return parser


def load_model(config, name):
    if name is None:
        raise ValidationError("A model is required (--model)")
    loader = JSONModelLoader(model_directory=config['Model']['model_directory'],
            unit_cap=config['Model']['unit_cap'])
    scm = loader.load(name).scm
    logger = logging.getLogger(__name__)
    logger.info("Model metadata:\n{}".format(pformat(dict(scm.get_metadata()))))
    return scm


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise ValidationError("Missing required flag --{}".format(name))


def _query_arguments(args, scm=None):
    arguments = OrderedDict([('model', scm.name if scm else None),
        ('X', args.X), ('x', args.x), ('xref', args.xref), ('Y', args.Y)])
    if args.Z is not None:
        arguments['Z'] = list(parse_names(args.Z))
    return arguments


def run_effects(args, config):
    _require(args, 'X', 'x', 'xref', 'Y')
    scm = load_model(config, args.model)
    subgraph = PathSubgraph.parse(args.edges) if args.edges else None
    z_setting = parse_assignment(args.z) if args.z is not None else None
    query = EffectQuery(args.kind, args.X, args.x, args.xref, args.Y,
            parse_names(args.Z), z_setting, subgraph, args.indicator)

    arguments = _query_arguments(args, scm)
    arguments['kind'] = args.kind
    if z_setting is not None:
        arguments['z'] = format_assignment(z_setting)
    if subgraph is not None:
        arguments['edges'] = str(subgraph)
    if args.indicator is not None:
        arguments['indicator'] = args.indicator
    report = Report('effects', arguments)

    if args.unit is not None and args.unit != 'all':
        unit = parse_assignment(args.unit)
        arguments['unit'] = format_assignment(unit)
        effect = compute_effect(scm, query, unit=unit)
    else:
        effect = compute_effect(scm, query, per_unit=args.unit == 'all')
    report.add_result('value', effect.value)
    report.add_result('method', effect.method)
    if effect.label is not None:
        report.add_result('mediator_reading', effect.label)
    if effect.decomposition is not None:
        for name, value in effect.decomposition.items():
            report.add_result(name, value)
    for unit, p, value in effect.unit_values or []:
        row = OrderedDict(unit)
        row['probability'] = p
        row['value'] = value
        report.add_detail('units', row)
    return report, EXIT_OK


def _condition_row(entry):
    row = OrderedDict([('condition', entry.label)])
    if entry.separation is not None:
        A, B, C = entry.separation
        row['deleted_outgoing'] = sorted(entry.mutilation.delete_outgoing_of)
        row['deleted_incoming'] = sorted(entry.mutilation.delete_incoming_of)
        row['separation'] = "{{{}}} _|_ {{{}}} | {{{}}}".format(",".join(A),
                ",".join(B), ",".join(C))
    row['verdict'] = entry.verdict
    if entry.reason:
        row['reason'] = entry.reason
    return row


def run_identify(args, config):
    _require(args, 'X', 'Y')
    scm = load_model(config, args.model)
    graph = scm.induced_graph
    convention = args.convention or config['Graph']['convention']
    if args.Z is not None:
        Zset = parse_names(args.Z)
    else:
        Zset = default_mediators(scm, args.X, args.Y)

    arguments = OrderedDict([('model', scm.name), ('mode', args.mode),
        ('X', args.X), ('Z', list(Zset)), ('Y', args.Y)])
    report = Report('identify', arguments)

    if args.witness_search:
        arguments['convention'] = convention
        witness = search_witnesses(graph, args.X, Zset, args.Y, args.mode,
                node_cap=config['Graph']['node_cap'], convention=convention)
        report.add_result('witness_found', witness is not None)
        for name, nodes in (witness or {}).items():
            report.add_result(name, list(nodes))
        return report, EXIT_OK if witness is not None else EXIT_FAILURE

    if args.mode == 'theorem1':
        W = parse_names(args.W) or ()
        arguments['W'] = list(W)
        verdict = check_experimental_criterion(graph, args.X, Zset, args.Y, W)
    elif args.mode == 'backdoor':
        S = parse_names(args.W) or ()
        arguments['S'] = list(S)
        verdict = backdoor_admissible(graph, args.X, Zset, S)
    else:
        sets = [parse_names(getattr(args, 'W{}'.format(i))) or ()
                for i in range(4)]
        for i, W in enumerate(sets):
            arguments['W{}'.format(i)] = list(W)
        arguments['convention'] = convention
        conditions = check_corollary1(graph, args.X, Zset, args.Y, *sets,
                convention=convention)
        for entry in conditions.entries:
            report.add_detail('conditions', _condition_row(entry))
        verdict = conditions.verdict
    report.add_result('verdict', verdict)
    return report, EXIT_OK if verdict else EXIT_FAILURE


def run_estimate(args, config):
    _require(args, 'X', 'x', 'xref', 'Y')
    scm = load_model(config, args.model) if args.model else None
    smoothing = args.smoothing or config['Estimation']['smoothing']
    if args.provider == 'exact':
        if scm is None:
            raise ValidationError("The exact provider needs a model (--model)")
        provider = ExactProvider(scm)
    else:
        if not args.data:
            raise ValidationError("The dataset provider needs --data files")
        loader = CSVDataLoader(config['Sampling']['delimiter'])
        domains = scm.domains if scm is not None else None
        datasets = [loader.load(path, domains) for path in args.data]
        for dataset in datasets:
            loader.log_value_breakdown(dataset, logging.getLogger(__name__))
        provider = DatasetProvider(datasets,
                graph=scm.induced_graph if scm is not None else None,
                domains=domains, smoothing=smoothing)

    if args.formula in ('eq8', 'eq26'):
        if args.S is not None:
            raise ValidationError("Formula {} takes --W, not "
                    "--S".format(args.formula))
        covariates = parse_names(args.W) or ()
    elif args.formula == 'eq15':
        if args.W is not None:
            raise ValidationError("Formula eq15 takes --S, not --W")
        covariates = parse_names(args.S) or ()
    else:
        if args.W is not None or args.S is not None:
            raise ValidationError("Formula {} takes no covariates".format(
                args.formula))
        covariates = ()

    arguments = _query_arguments(args, scm)
    arguments['formula'] = args.formula
    arguments['provider'] = args.provider
    arguments['covariates'] = list(covariates)
    if args.data:
        arguments['data'] = list(args.data)
    if smoothing:
        arguments['smoothing'] = True
    report = Report('estimate', arguments)

    result = estimate(provider, args.formula, args.X, args.x, args.xref,
            parse_names(args.Z), args.Y, covariates, args.indicator,
            enforce_premises=not args.no_premise_check)
    report.add_result('value', result.value)
    report.add_result('effect', FORMULA_EFFECTS[args.formula])
    report.add_result('premises', result.premises)
    report.add_result('used_mass', result.used_mass)
    report.add_result('skipped_mass', result.skipped_mass)
    for regime, size in (result.sample_sizes or {}).items():
        report.add_detail('sample_sizes', OrderedDict([('regime', regime),
            ('rows', size)]))
    for stratum in result.skipped_strata:
        report.add_detail('skipped_strata', OrderedDict([
            ('stratum', stratum.stratum or '{}'), ('mass', stratum.mass),
            ('reason', stratum.reason)]))
    for stratum in result.completed_strata:
        report.add_detail('completed_strata', stratum or '{}')
    for message in result.warnings:
        report.warn(message)
    if result.premises == UNVERIFIED:
        report.warn("Premises not checked: no graph accompanies the data")
    elif result.premises != VERIFIED:
        report.warn("Premises {}".format(result.premises))
    return report, EXIT_OK


def run_sample(args, config):
    scm = load_model(config, args.model)
    seed = args.seed if args.seed is not None else config['Sampling']['seed']
    regime = Regime.parse(args.regime)
    dataset = scm.sample(args.n, seed=seed, regime=regime)
    loader = CSVDataLoader(config['Sampling']['delimiter'])
    loader.write(dataset, args.file)
    report = Report('sample', OrderedDict([('model', scm.name),
        ('n', args.n), ('seed', seed), ('regime', str(regime))]))
    report.add_result('rows', len(dataset))
    report.add_result('file', args.file)
    report.add_result('regime_file', loader.regime_path(args.file))
    return report, EXIT_OK


def check_model(scm, X, Y, Zset=None, tolerance=1e-9, node_cap=20):
    """Identity and crosscheck battery. Returns a list of rows
    (check, values, passed, detail)."""
    logger = logging.getLogger(__name__)
    rows = []

    def record(name, values, passed, detail=''):
        rows.append(OrderedDict([('check', name), ('values', values),
            ('passed', bool(passed)), ('detail', detail)]))
        if not passed:
            logger.warning("Check {} failed for {} ({})".format(name, values,
                detail))

    Zset = tuple(Zset) if Zset else default_mediators(scm, X, Y)
    if not Zset:
        raise ValidationError("Outcome {} has no parents besides {}; supply "
                "a mediator set".format(Y, X))
    graph = scm.induced_graph
    edges = [(p, c) for p, c in graph.edges
            if p not in graph.exogenous and c not in graph.exogenous]
    domain = scm.domain(X).values

    for x in domain:
        for x_ref in domain:
            values = "x={}, x*={}".format(x, x_ref)
            total = te_avg(scm, X, x, x_ref, Y)
            decomposition = te_decomposition(scm, X, x, x_ref, Y)
            nde = nde_avg(scm, X, x, x_ref, Zset, Y)
            nie = nie_avg(scm, X, x, x_ref, Zset, Y)
            nde_reverse = nde_avg(scm, X, x_ref, x, Zset, Y)
            nie_reverse = nie_avg(scm, X, x_ref, x, Zset, Y)
            gap_22 = abs(total - (nie - nde_reverse))
            gap_23 = abs(total - (nde - nie_reverse))
            record('te_decomposition', values,
                    gap_22 <= tolerance and gap_23 <= tolerance,
                    "gaps {:.3g}, {:.3g}".format(gap_22, gap_23))
            if decomposition is not None:
                record('te_decomposition_default_mediators', values,
                        decomposition['holds'])
            antisymmetry = abs(total + te_avg(scm, X, x_ref, x, Y))
            record('te_antisymmetry', values, antisymmetry <= tolerance)

            if x == x_ref:
                z_setting = OrderedDict((z, scm.domain(z).values[0])
                        for z in Zset)
                nulls = [cde_avg(scm, X, x, x_ref, z_setting, Y), nde, nie,
                        total, pse(scm, edges, X, x, x_ref, Y)]
                record('null_transition', values,
                        all(abs(v) <= tolerance for v in nulls))
                composed = all(scm.nested_outcome(u, X, x, x, Zset, Y)
                        == scm.evaluate(u, {X: x})[Y]
                        for u, _ in scm.enumerate_units())
                record('composition', values, composed)

            if graph.has_edge(X, Y) and set(Zset) == set(
                    default_mediators(scm, X, Y)):
                direct = pse(scm, [(X, Y)], X, x, x_ref, Y)
                indirect = pse(scm, [e for e in edges if e != (X, Y)], X, x,
                        x_ref, Y)
                full = pse(scm, edges, X, x, x_ref, Y)
                record('pse_reductions', values,
                        abs(direct - nde) <= tolerance
                        and abs(indirect - nie) <= tolerance
                        and abs(full - total) <= tolerance)

            if x == x_ref:
                continue
            query = EffectQuery('nde', X, x, x_ref, Y, Zset)
            witness = search_witnesses(graph, X, Zset, Y, 'theorem1',
                    node_cap=node_cap)
            backdoor = search_witnesses(graph, X, Zset, Y, 'backdoor',
                    node_cap=node_cap)
            plans = [('eq8', witness['W'] if witness else None),
                    ('eq26', witness['W'] if witness else None),
                    ('eq15', backdoor['S'] if backdoor else None),
                    ('eq17', ()), ('eq27', ())]
            for formula, covariates in plans:
                if covariates is None:
                    record('crosscheck_' + formula, values, True,
                            "skipped: no covariate set satisfies the criterion")
                    continue
                outcome = crosscheck(scm, formula, query, covariates,
                        tolerance)
                if outcome.error is not None:
                    record('crosscheck_' + formula, values, False,
                            outcome.error)
                elif outcome.premises != VERIFIED:
                    record('crosscheck_' + formula, values, True,
                            "skipped: premises {}".format(outcome.premises))
                else:
                    record('crosscheck_' + formula, values, outcome.passed,
                            "covariates {{{}}}, gap {:.3g}".format(
                                ",".join(covariates), outcome.gap))
    return rows


def run_check(args, config):
    scm = load_model(config, args.model)
    rows = check_model(scm, args.X, args.Y, parse_names(args.Z),
            tolerance=config['Estimation']['tolerance'],
            node_cap=config['Graph']['node_cap'])
    report = Report('check', OrderedDict([('model', scm.name), ('X', args.X),
        ('Y', args.Y)]))
    passed = all(row['passed'] for row in rows)
    report.add_result('checks', len(rows))
    report.add_result('failed', sum(1 for row in rows if not row['passed']))
    report.add_result('passed', passed)
    for row in rows:
        report.add_detail('checks', row)
    return report, EXIT_OK if passed else EXIT_FAILURE


COMMANDS = {
        'effects': run_effects,
        'identify': run_identify,
        'estimate': run_estimate,
        'sample': run_sample,
        'check': run_check
        }


def run(argv=None):
    """Run one command. Returns the rendered report (or error message) and
    the exit code: 0 on success, 1 on validation errors, 2 on criterion or
    estimand failures."""
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config)
    except ValidationError as e:
        return "error: {}\n".format(e), EXIT_VALIDATION

    if args.format is not None:
        config['Reporting']['format'] = args.format
    log_dir = config['Logging']['log_directory'] or os.path.join(os.getcwd(),
            'logs')
    logger = setup_logging(config, log_dir, args.debug, args.log_to_file)
    logger.debug(pformat(config))

    try:
        report, code = COMMANDS[args.command](args, config)
    except (ValidationError, CapacityError) as e:
        logger.error(str(e))
        return "error: {}\n".format(e), EXIT_VALIDATION
    except (CriterionError, EstimandError) as e:
        logger.error(str(e))
        return "error: {}\n".format(e), EXIT_FAILURE
    except CfmediateError as e:
        logger.error(str(e))
        return "error: {}\n".format(e), EXIT_VALIDATION

    text = report.render(config['Reporting']['format'],
            config['Reporting']['significant_digits'])
    if args.output:
        with open(args.output, 'w', encoding='utf-8') as f:
            f.write(text)
    return text, code


def main(argv=None):
    text, code = run(argv)
    if code == EXIT_OK or not text.startswith('error:'):
        sys.stdout.write(text)
    else:
        sys.stderr.write(text)
    sys.exit(code)


if __name__ == "__main__":
    main()
