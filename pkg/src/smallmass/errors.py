"""Exception hierarchy for smallmass."""


class SmallMassError(Exception):
    """Base class for all library errors."""


class EvaluationError(SmallMassError, FloatingPointError):
    """A coefficient field produced non-finite values."""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"non-finite value in coefficient field {field!r}")


class LyapunovError(SmallMassError, ValueError):
    """The Lyapunov equation has no unique solution (stability margin <= 0)."""

    def __init__(self, margin):
        self.margin = margin
        super().__init__(
            "Lyapunov problem unsolvable: all eigenvalues of B need positive real "
            f"part, smallest real part is {margin:.3e}"
        )


class QuadratureError(SmallMassError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, achieved, requested):
        self.achieved = achieved
        self.requested = requested
        super().__init__(
            f"quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}"
        )


class FluctuationDissipationError(SmallMassError, ValueError):
    """Sigma sigma^T != 2 kBT gamma at the requested point."""


class BlowUpError(SmallMassError, FloatingPointError):
    """A time step produced non-finite values.

    Attributes
    ----------
    state : State
        Last finite state before the failing step.
    time : float
        Time of that state.
    leg : str
        ``"full"`` or ``"limit"``.
    """

    def __init__(self, state, time, leg="full"):
        self.state = state
        self.time = time
        self.leg = leg
        super().__init__(f"{leg} integrator blew up after t={time:.6g}")


class RegistryError(SmallMassError, ValueError):
    """Unknown builtin system or invalid/missing parameter."""


class ConfigError(SmallMassError, ValueError):
    """Invalid run configuration."""


class ExperimentInvalid(SmallMassError, RuntimeError):
    """Monte Carlo experiment exceeded its aborted-path budget."""

    def __init__(self, aborted_fraction, budget):
        self.aborted_fraction = aborted_fraction
        self.budget = budget
        super().__init__(
            f"aborted path fraction {aborted_fraction:.3%} exceeds budget {budget:.3%}"
        )
