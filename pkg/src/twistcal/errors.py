"""Exception hierarchy shared by every module of the package."""


class TwistcalError(Exception):
    """Base class for all errors raised by twistcal."""


class PositivityLoss(TwistcalError):
    """The metric density 1 + phi_{z zbar} dropped below the configured floor."""

    def __init__(self, min_density, w_floor, t=None):
        self.min_density = float(min_density)
        self.w_floor = float(w_floor)
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(
            f"metric density min {self.min_density:.6g} < floor {self.w_floor:.3g}{where}"
        )


class NumericalBlowup(TwistcalError):
    """A solver produced non-finite values."""


class ShapeMismatch(TwistcalError, ValueError):
    """Fields live on different grids or have the wrong shape."""


class DomainError(TwistcalError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class DegenerateInput(TwistcalError, ValueError):
    """Input makes the requested quantity undefined (zero divisor, equal arguments)."""


class ResidualTooLarge(TwistcalError):
    """A linear solve finished but its a-posteriori residual exceeds the tolerance."""

    def __init__(self, residual, tolerance, solution=None):
        self.residual = float(residual)
        self.tolerance = float(tolerance)
        self.solution = solution
        super().__init__(f"relative residual {self.residual:.3e} > {self.tolerance:.1e}")


class MaxItersExceeded(TwistcalError):
    """An iteration did not reach its tolerance; the report is attached."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class NonContractive(MaxItersExceeded):
    """Successive correction ratios rose above one after having dropped below it."""


class InsufficientData(TwistcalError, ValueError):
    """Too few usable samples for a fit."""


class ConfigError(TwistcalError, ValueError):
    """Invalid run configuration."""
