"""Exception types raised across the package."""


class IsacError(Exception):
    """Base class for all package errors."""


class ScenarioError(IsacError, ValueError):
    """Invalid physical configuration."""


class GeometryDomainError(IsacError, ValueError):
    """arcsin argument outside [-1, 1]."""


class QuadratureError(IsacError, ArithmeticError):
    """Quadrature did not converge under node doubling."""


class SolverError(IsacError, RuntimeError):
    """Interior-point solver failed numerically."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(IsacError):
    """The PCRB constraint (or a derived subproblem) cannot be met."""


class DegenerateInputError(IsacError, ValueError):
    pass


class ANRankOverflowError(IsacError):
    """The AN covariance needs more beams than configured."""

    def __init__(self, rank, n_an):
        super().__init__(f"AN covariance has rank {rank} > {n_an} configured AN beams")
        self.rank = rank
        self.n_an = n_an


class EmptyNullSpaceError(IsacError):
    """The eavesdropper channels span the whole transmit space."""


class ConfigError(IsacError, ValueError):
    pass
