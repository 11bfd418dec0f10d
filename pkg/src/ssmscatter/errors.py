"""Exception hierarchy shared by every module of the package."""


class SSMError(Exception):
    """Base class for all errors raised by ssmscatter."""


class InvalidSpec(SSMError):
    pass


class NonLorentzian(InvalidSpec):
    """lambda <= 0 somewhere, so g is not Lorentzian."""


class DegenerateMetric(InvalidSpec):
    pass


class OutOfDomain(SSMError):
    pass


class NotOnBoundary(SSMError):
    pass


class DegenerateBoundary(SSMError):
    pass


class StepSizeUnderflow(SSMError):
    pass


class NonFiniteState(SSMError):
    pass


class MomentumMismatch(SSMError):
    pass


class EnergyMismatch(SSMError):
    pass


class NoExit(SSMError):
    """Horizon reached before the trajectory left the domain."""


class GrazingExit(SSMError):
    """Trajectory meets the boundary tangentially (flagged degenerate)."""


class NoInwardSolution(SSMError):
    """The boundary data cannot be realized by an inward vector at (rho, m)."""


class ShootingFailed(SSMError):
    pass


class NotSimple(SSMError):
    pass


class LeftDomain(SSMError):
    pass


class AngleUndefined(SSMError):
    pass


class GaugeBreaksSignature(SSMError):
    pass


class InvalidGauge(SSMError):
    pass


class BoundaryTraceMismatch(SSMError):
    pass


class ConventionMismatch(SSMError):
    pass


class NotNull(SSMError):
    pass


class LambdaNotOne(SSMError):
    pass


class ConfigError(SSMError):
    def __init__(self, message, *, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class ConservationWarning(UserWarning):
    """Conserved quantity drifted past tolerance even after step refinement."""
