"""Exception and warning types raised across the package."""


class ContactNetError(ValueError):
    """Base class for input and model errors."""


class InputError(ContactNetError):
    """Malformed input file; carries the path and row when known."""

    def __init__(self, message, path=None, row=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{':'.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.path = path
        self.row = row


class MissingColumn(InputError):
    pass


class UnknownRole(InputError):
    pass


class UnknownPerson(InputError):
    pass


class DanglingProjectRef(InputError):
    pass


class SelfReport(InputError):
    pass


class DuplicateReport(InputError):
    pass


class MinutesOutOfRange(InputError):
    pass


class ZeroLengthLine(InputError):
    pass


class DeskOffLine(InputError):
    pass


class InvalidProbability(ContactNetError):
    pass


class Unreachable(ContactNetError):
    pass


class DimensionMismatch(ContactNetError):
    pass


class CutpointsNotAscending(ContactNetError):
    pass


class InconsistentObservation(ContactNetError):
    pass


class ZeroLikelihood(ContactNetError):
    pass


class NonFiniteEvaluation(ContactNetError):
    pass


class DegenerateInput(ContactNetError):
    pass


class DegenerateInterval(ContactNetError):
    pass


class ConvergenceWarning(UserWarning):
    """Optimizer stopped without meeting the gradient tolerance."""


class MaxIterations(ConvergenceWarning):
    pass


class IndefiniteHessianAtOptimum(ConvergenceWarning):
    pass


class SeparationDetected(UserWarning):
    """A logistic coefficient diverged because a cell is all-0 or all-1."""
