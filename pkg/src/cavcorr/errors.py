"""Exception hierarchy shared by all modules."""


class CavCorrError(Exception):
    """Base class for all package errors."""


class ConfigError(CavCorrError, ValueError):
    pass


class DimensionMismatch(CavCorrError, ValueError):
    pass


class NumericalError(CavCorrError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class ConvergenceError(NumericalError):
    """An iterative procedure failed to meet its tolerance."""


class NoConvergence(ConvergenceError):
    pass


class NonUniqueSteadyState(NumericalError):
    pass


class IllConditionedEigenbasis(NumericalError):
    pass


class UnphysicalState(NumericalError):
    """Density matrix violates positivity or hermiticity beyond tolerance."""


class ZeroDenominator(NumericalError):
    pass


class MemoryBudgetExceeded(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class StateCollapseToZero(NumericalError):
    pass


class StatisticalUnderflow(NumericalError):
    pass


class EmptyGrid(CavCorrError, ValueError):
    pass


class DegenerateSpectrum(NumericalError):
    pass


class KernelLargerThanGrid(CavCorrError, ValueError):
    pass


class NonSquareGrid(CavCorrError, ValueError):
    pass


class WindowTooShort(CavCorrError, ValueError):
    pass
