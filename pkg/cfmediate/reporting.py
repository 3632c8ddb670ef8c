from collections import OrderedDict

import numpy as np
import yaml

SIGNIFICANT_DIGITS = 12

REPORT_FORMATS = ['text', 'machine']


def format_number(value, digits=SIGNIFICANT_DIGITS):
    """Fixed decimal rendering with the given number of significant digits,
    trailing zeros removed."""
    if value is None:
        return 'n/a'
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    text = np.format_float_positional(float(value), precision=digits,
            unique=False, fractional=False, trim='-')
    if text == '-0':
        text = '0'
    return text


def _render_value(value, digits):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, int, np.floating, np.integer)):
        return format_number(value, digits)
    if value is None:
        return 'n/a'
    if isinstance(value, dict):
        return ", ".join("{}={}".format(k, _render_value(v, digits))
                for k, v in value.items())
    if isinstance(value, (list, tuple, frozenset, set)):
        return "{" + ",".join(str(v) for v in value) + "}"
    return str(value)


def _machine_value(value, digits):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        return float(format_number(value, digits))
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _machine_value(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple, frozenset, set)):
        return [_machine_value(v, digits) for v in value]
    if value is None:
        return None
    return str(value)


class Report():
    """Outcome of one command: echoed arguments, named results, detail
    sections (per condition, per stratum or per unit) and warnings."""

    def __init__(self, command, arguments=None):
        self.command = command
        self.arguments = OrderedDict(arguments or {})
        self.results = OrderedDict()
        self.details = OrderedDict()
        self.warnings = []

    def add_result(self, name, value):
        self.results[name] = value

    def add_detail(self, section, row):
        self.details.setdefault(section, []).append(row)

    def warn(self, message):
        if message not in self.warnings:
            self.warnings.append(message)

    def render_text(self, digits=SIGNIFICANT_DIGITS):
        lines = ["command: {}".format(self.command)]
        for name, value in self.arguments.items():
            lines.append("{}: {}".format(name, _render_value(value, digits)))
        lines.append("results:")
        for name, value in self.results.items():
            lines.append("  {} = {}".format(name, _render_value(value, digits)))
        for section, rows in self.details.items():
            lines.append("{}:".format(section))
            for row in rows:
                lines.append("  {}".format(_render_value(row, digits)))
        if self.warnings:
            lines.append("warnings:")
            for message in self.warnings:
                lines.append("  - {}".format(message))
        return "\n".join(lines) + "\n"

    def render_machine(self, digits=SIGNIFICANT_DIGITS):
        document = {
                'command': self.command,
                'arguments': _machine_value(self.arguments, digits),
                'results': _machine_value(self.results, digits),
                'details': _machine_value(self.details, digits),
                'warnings': list(self.warnings)
                }
        return yaml.safe_dump(document, sort_keys=False, allow_unicode=True,
                default_flow_style=False)

    def render(self, report_format='text', digits=SIGNIFICANT_DIGITS):
        if report_format == 'text':
            return self.render_text(digits)
        elif report_format == 'machine':
            return self.render_machine(digits)
        raise ValueError("Invalid report format: {}. Select one of "
                "{}.".format(report_format, REPORT_FORMATS))
