"""Exception hierarchy shared by all grflab modules.

Numerical aborts carry enough payload (time, grid location) for the CLI to
emit a diagnostic before exiting with the abort code.
"""


class GrflabError(Exception):
    """Base class for all package errors."""


class ConfigError(GrflabError):
    """Malformed or contradictory experiment configuration."""


# geometry
class DegenerateMetric(GrflabError):
    """Metric coefficient is non-positive."""


class UnsupportedDegree(GrflabError):
    """Form degree incompatible with the backend dimension."""


# flow
class AnsatzBreak(GrflabError):
    """Flow right-hand side left the backend ansatz beyond tolerance."""


class MissingField(GrflabError):
    """An operation required a field the state does not carry."""


class NotClosed(GrflabError):
    """A form required to be closed has a nonzero exterior derivative."""


class MetricDegenerate(GrflabError):
    """SPD floor breached during time integration."""

    def __init__(self, t, location, value):
        self.t = t
        self.location = location
        self.value = value
        super().__init__(
            f"metric eigenvalue {value:.3e} under SPD floor at t={t:.6g}, node {location}"
        )


class StiffnessAbort(GrflabError):
    """Step-size underflow or divergence consistent with a CFL violation."""

    def __init__(self, t, detail=""):
        self.t = t
        super().__init__(f"integration aborted at t={t:.6g}: {detail}")


class RangeError(GrflabError):
    """Time or parameter outside the valid span."""


# heat
class MaxPrincipleViolation(GrflabError):
    """Forward heat solution went negative beyond tolerance."""


class PositivityLoss(GrflabError):
    """Backward conjugate solution lost positivity."""

    def __init__(self, t, location, value):
        self.t = t
        self.location = location
        self.value = value
        super().__init__(f"u = {value:.3e} <= 0 at t={t:.6g}, node {location}")


class MassDrift(GrflabError):
    """Conserved integral drifted beyond the configured tolerance."""


class PositivityRequired(GrflabError):
    """Operation needs a strictly positive conjugate solution."""


# entropy
class RicciFlowOnly(GrflabError):
    """Nash-entropy operations require a torsion-free trajectory."""


class NormalizationError(GrflabError):
    """Measure does not have unit mass within tolerance."""


class EigenFail(GrflabError):
    """Eigenvalue iteration failed to converge to the requested residual."""


# soliton
class FixtureBroken(GrflabError):
    """Soliton fixture violates its defining identities."""


class NoConvergence(GrflabError):
    """Normalized dilaton flow diverged."""


# isoperimetric
class TooSmall(GrflabError):
    """Region too small for a resolvable boundary."""


class ZeroFunction(GrflabError):
    """Test function is identically zero."""
