"""Exception hierarchy shared by all modules."""


class MarkovCGError(ValueError):
    """Base class for domain and validation failures."""


class NegativeEntry(MarkovCGError):
    def __init__(self, i, j, value):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"negative entry {value!r} at ({i}, {j})")


class RowSumViolation(MarkovCGError):
    def __init__(self, i, total):
        self.i, self.total = i, total
        super().__init__(f"row {i} sums to {total!r}")


class NotProbability(MarkovCGError):
    pass


class NonUniqueInvariant(MarkovCGError):
    pass


class NonPositiveInvariant(MarkovCGError):
    pass


class NotSurjective(MarkovCGError):
    def __init__(self, missing):
        self.missing = missing
        super().__init__(f"cluster {missing} has no member state")


class DimensionMismatch(MarkovCGError):
    pass


class InvariantMismatch(MarkovCGError):
    pass


class WeightMismatch(MarkovCGError):
    pass


class WeightDegenerate(MarkovCGError):
    pass


class NotReversible(MarkovCGError):
    pass


class FredholmViolation(MarkovCGError):
    pass


class SolverFailure(MarkovCGError):
    pass


class StepTooLarge(MarkovCGError):
    pass


class DomainViolation(MarkovCGError):
    pass


class Reducible(MarkovCGError):
    pass


class MinimizerDiverged(MarkovCGError):
    pass


class IdentityViolation(MarkovCGError):
    """A structural identity that must hold exactly failed numerically."""
