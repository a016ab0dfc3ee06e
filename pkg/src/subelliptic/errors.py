"""Exception hierarchy shared by all modules."""


class SubellError(Exception):
    """Base class for every error raised by this package."""


# symbols
class MalformedInput(SubellError):
    pass


class WeightViolation(SubellError):
    """A monomial is not of the declared weighted degree."""


class ConstraintViolation(SubellError):
    """The weights violate ell >= 1 or m >= 2 ell (or are not coprime)."""


class SwapImpossible(SubellError):
    pass


# distgeo
class OriginProjection(SubellError):
    """The origin has no projection onto the distorted circle."""


# circle
class UnresolvedZero(SubellError):
    """Zeros cluster below the sampling resolution."""


class NonUniqueMinimum(SubellError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class PropertyOneFailure(SubellError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class OrderUndetectable(SubellError):
    pass


class MissingPHint(SubellError):
    pass


# escape
class PlanInfeasible(SubellError):
    pass


class DegeneratePlan(PlanInfeasible):
    pass


class NotReached(SubellError):
    """A disto-line never meets the requested ray for tau >= 0."""


class BreakpointDerivative(SubellError):
    pass


class PreconditionViolation(SubellError):
    pass


# certify
class CertificateRefused(SubellError):
    """The (H2) verdict failed, so no escape family is built."""

    def __init__(self, msg, verdict=None):
        super().__init__(msg)
        self.verdict = verdict


class ConditionFailure(SubellError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class GrowthViolation(ConditionFailure):
    pass


class EscapeFailure(ConditionFailure):
    pass


class JacobianMismatch(ConditionFailure):
    pass


# decay
class QuadratureUnstable(SubellError):
    pass


class FitUnstable(SubellError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report
