"""
Exceptions raised by structwdro
"""


class StructWDROError(Exception):
    """
    Base class for all errors raised by structwdro
    """

    pass


class DimensionMismatch(StructWDROError, ValueError):
    """
    Arrays or objects that have to live in the same space do not
    """

    pass


class NegativeWeight(StructWDROError, ValueError):
    pass


class ZeroTotalMass(StructWDROError, ValueError):
    pass


class NotAProbabilityVector(StructWDROError, ValueError):
    """
    Weights are non-negative but do not sum to one within tolerance
    """

    pass


class PreconditionError(StructWDROError, ValueError):
    """
    Arguments violate a documented precondition, e.g. lifting parameter M < N
    """

    pass


class CapExceeded(StructWDROError):
    """
    An enumeration or an assembled program would exceed the configured size cap.

    The caller should lower the lifting parameter (or raise the cap, e.g. through the
    STRUCT_WDRO_CAP environment variable).
    """

    def __init__(self, what, size, cap):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f"{what} has size {size}, which exceeds the cap {cap}")


class UnboundedPolytope(StructWDROError, ValueError):
    pass


class EmptyPolytope(StructWDROError, ValueError):
    pass


class EmptyTheta(StructWDROError, ValueError):
    """
    The decision set Theta is empty
    """

    pass


class OutOfDomain(StructWDROError, ValueError):
    pass


class EmptyGrid(StructWDROError, ValueError):
    pass


class InstanceFormatError(StructWDROError, ValueError):
    """
    An instance, distribution or loss file could not be interpreted
    """

    pass


class SolverFailure(StructWDROError):
    """
    Solution was not found
    """

    pass


class NumericalFailure(SolverFailure):
    """
    The solver stopped because of numerical difficulties (distinct from a certified
    infeasible or unbounded program)
    """

    pass
