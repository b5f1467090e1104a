"""Exception types raised across the package."""


class DomainError(ValueError):
    """A coefficient was evaluated outside its certified range."""


class TruncationError(ValueError):
    """Initial mass leaks outside the truncated domain."""


class SolveError(RuntimeError):
    """The implicit linear system lost positive definiteness."""


class NoConvergence(RuntimeError):
    """A fixed-point loop exhausted its iteration budget."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class AliasError(ValueError):
    """Heat kernel mass wraps around the periodic padding."""


class BandwidthError(ValueError):
    """Kernel bandwidth below the resolvable scale."""


class OverflowGuard(FloatingPointError):
    """A log Girsanov weight left [-700, 700]."""

    def __init__(self, message: str, particle: int = -1, step: int = -1):
        super().__init__(message)
        self.particle = particle
        self.step = step
