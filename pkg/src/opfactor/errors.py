"""Exception hierarchy shared by all factorization routines."""


class OpFactorError(Exception):
    """Base class for every error raised by opfactor."""


class ConvergenceFailure(OpFactorError):
    pass


class EmptyComplement(OpFactorError):
    pass


class ShapeMismatch(OpFactorError, ValueError):
    pass


class InfiniteFiber(OpFactorError):
    """A block product would need an infinite sum for some entry."""


class NotTriangular(OpFactorError):
    pass


class SemiFredholmObstruction(OpFactorError):
    """No almost-null vector exists in the admissible subspace.

    Attributes
    ----------
    step : int
        1-based step of the inductive search that failed.
    side : str
        ``"f"`` for the ``T`` side, ``"g"`` for the adjoint side.
    value : float
        Constrained minimum that exceeded the threshold.
    threshold : float
    """

    def __init__(self, step, side, value, threshold):
        self.step = step
        self.side = side
        self.value = value
        self.threshold = threshold
        super().__init__(
            f"step {step} ({side}-side): constrained minimum {value:.6g} "
            f"exceeds {threshold:.6g}; truncation behaves like a semi-Fredholm operator"
        )


class SpaceTooSmall(OpFactorError):
    pass


class DegenerateReduction(OpFactorError):
    pass


class SplitTooShallow(OpFactorError):
    pass


class NotEssentiallySingular(OpFactorError):
    pass


class RangeInclusionFailed(OpFactorError):
    pass


class Infeasible(OpFactorError):
    pass


class KernelEmpty(Infeasible):
    pass


class BudgetExceeded(Infeasible):
    pass


class MatrixMarketError(OpFactorError, ValueError):
    pass
