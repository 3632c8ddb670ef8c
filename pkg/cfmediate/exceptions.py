from collections import namedtuple

# A single problem found while validating a model. The path is a tuple
# locating the offending element, e.g. ('variables', 'Y', 'table', '0,1').
Violation = namedtuple('Violation', ['path', 'message'])


class CfmediateError(ValueError):
    pass


class ValidationError(CfmediateError):

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


# Raised when a graphical premise (a covariate precondition or an
# identification criterion) does not hold.
class CriterionError(CfmediateError):
    pass


class EstimandError(CfmediateError):
    pass


# Conditioning on an event that carries no probability mass in the source.
class ZeroMassError(EstimandError):

    def __init__(self, message, event=None):
        super().__init__(message)
        self.event = event


class CapacityError(CfmediateError):
    pass
