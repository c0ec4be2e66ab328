"""Exception hierarchy shared by all modules."""


class CtmcError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(CtmcError, ValueError):
    """A model, plan or config violates one of its invariants."""


class AbsoluteContinuityError(CtmcError, ValueError):
    """The reference measure gives zero weight to a transition the first one uses.

    The relative entropy (or log-likelihood ratio) is infinite in that case.
    """


class DomainError(CtmcError, ValueError):
    """An argument lies outside the domain where the quantity is finite."""


class NumericError(CtmcError, ArithmeticError):
    """A numerical routine failed to converge or hit a singular system."""


class ExperimentError(CtmcError, RuntimeError):
    """A Monte-Carlo experiment produced no usable replicas."""
