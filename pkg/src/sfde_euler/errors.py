"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AlignmentError(ValueError):
    """Grids, drivers or horizons do not line up."""


class FactorizationError(RuntimeError):
    """Cholesky factorization of a covariance matrix failed."""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class EmbeddingError(RuntimeError):
    """Circulant embedding produced a significantly negative eigenvalue."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DivergenceError(RuntimeError):
    """The solver produced a non-finite or exploding value."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
