"""Exception hierarchy shared by all solver modules."""


class BSDELabError(Exception):
    """Base class for every error raised by this package."""


class DecompositionError(BSDELabError):
    """Raised when a diffusion matrix is not positive definite."""

    def __init__(self, t, x, detail=""):
        self.t = t
        self.x = x
        msg = f"cannot factor a(t, x) at t={t!r}, x={x!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EllipticityError(BSDELabError):
    pass


class CFLError(BSDELabError):
    """Raised when a lattice would carry negative transition weights."""

    def __init__(self, message, required_n_steps=None):
        self.required_n_steps = required_n_steps
        super().__init__(message)


class ConvergenceError(BSDELabError):
    """An iterative per-step solve did not converge.

    ``step`` is the time-node index and ``node`` the state (space node or
    path) index where the residual was worst.
    """

    def __init__(self, message, step=None, node=None):
        self.step = step
        self.node = node
        super().__init__(message)


class RegressionError(BSDELabError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class MonotonicityError(BSDELabError):
    """A sequence of approximations broke its proven monotone ordering."""

    def __init__(self, message, n=None, excess=None):
        self.n = n
        self.excess = excess
        super().__init__(message)


class SpecMismatchError(BSDELabError):
    pass


class ConfigError(BSDELabError):
    """Configuration parse or validation failure, with an optional line."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
