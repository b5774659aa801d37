class BsympError(Exception):
    """Base class for errors raised by this package."""


class DomainError(BsympError, ValueError):
    pass


class ArityError(BsympError, ValueError):
    pass


class DegenerateError(BsympError, ArithmeticError):
    pass


class TransversalityFail(BsympError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InflationFail(BsympError):
    pass


class ConstraintError(BsympError, ValueError):
    pass


class BoundaryMismatch(BsympError, ValueError):
    pass


class ProfileError(BsympError, ValueError):
    pass


class NotSymplectic(BsympError, ValueError):
    pass


class ParseError(BsympError, ValueError):
    pass


class ScenarioError(BsympError):
    pass
