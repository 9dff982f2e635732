"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for bad input,
3 for budget or feasibility limits, 1 for anything else.
"""


class Gs4dError(Exception):
    exit_code = 1


class InputError(Gs4dError):
    exit_code = 2


class LimitError(Gs4dError):
    exit_code = 3


# constellation-core
class AllZeroConstellation(InputError):
    pass


class InvalidConstellation(InputError):
    pass


class SeedOnAxis(InputError):
    pass


class UnknownFormat(InputError):
    pass


class BadParam(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc = f"row {row}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
        self.row = row
        self.column = column


class DimensionMismatch(InputError):
    pass


class DuplicateLabel(InputError):
    pass


class WrongDimension(InputError):
    pass


# gmi-metrics
class BadOrder(InputError):
    pass


class DimensionUnsupported(InputError):
    pass


class NonPositiveNoise(InputError):
    pass


class TooFewSamples(InputError):
    pass


class TargetOutOfRange(InputError):
    pass


# shaping-optimizer
class InfeasibleConstraint(LimitError):
    pass


class ModelDivergence(Gs4dError):
    pass


# link-model
class NonPositiveEta(InputError):
    pass


class UnreachableAtOneSpan(Gs4dError):
    pass


class DegenerateFit(InputError):
    pass


# ssfm-sim
class BadRolloff(InputError):
    pass


class SpectralOverflow(InputError):
    pass


class StepTooLarge(InputError):
    pass


class LengthMismatch(InputError):
    pass


class BudgetExceeded(LimitError):
    pass
