"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad model, config, or case/model combination."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class NumericError(RuntimeError):
    """A quadrature or root-finding step did not converge.

    ``residual`` carries the last error estimate when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3g})")
        self.residual = residual
