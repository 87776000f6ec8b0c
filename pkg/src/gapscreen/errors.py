"""Exception types raised across the package."""


class GapScreenError(Exception):
    """Base class for all library errors."""


class ZeroRow(GapScreenError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} is all zeros")


class NegativeEntry(GapScreenError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"negative entry at ({row}, {col}) in a non-negative matrix")


class DimensionMismatch(GapScreenError):
    pass


class EmptyMatrix(GapScreenError):
    pass


class InfeasiblePrimal(GapScreenError):
    pass


class DomainViolation(GapScreenError):
    def __init__(self, index: int, msg: str = ""):
        self.index = index
        super().__init__(msg or f"coordinate {index} outside the loss domain")


class OutsideDualDomain(GapScreenError):
    def __init__(self, index: int, msg: str = ""):
        self.index = index
        super().__init__(msg or f"dual coordinate {index} outside dom(D)")


class NonPositiveLambdaMax(GapScreenError):
    pass


class EpsilonTooLarge(GapScreenError):
    pass


class RankDeficient(GapScreenError):
    pass


class NoPositiveBound(GapScreenError):
    pass


class WeakDualityViolated(GapScreenError):
    pass


class CenterOutsideS0(GapScreenError):
    pass


class UnsupportedPairing(GapScreenError):
    pass


class UnsupportedAlgorithmForLoss(GapScreenError):
    pass


class LineSearchFailed(GapScreenError):
    pass


class NotConverged(GapScreenError):
    """Raised when an iterative routine exhausts max_iter; carries the partial trace."""

    def __init__(self, iterations: int, gap: float, trace=None):
        self.iterations = iterations
        self.gap = gap
        self.trace = trace
        super().__init__(f"not converged after {iterations} iterations (gap={gap:.3e})")


class ParseError(GapScreenError):
    def __init__(self, line: int, msg: str = ""):
        self.line = line
        super().__init__(f"line {line}: {msg}" if msg else f"parse error at line {line}")


class EmptyFile(GapScreenError):
    pass


class Unbounded(GapScreenError):
    pass
