"""Exception hierarchy shared by all modules."""


class AnicapError(Exception):
    """Base class for all library errors."""


class NonConvexNorm(AnicapError):
    """The norm's A_F matrix fails positive definiteness somewhere."""


class DegeneratePoint(AnicapError):
    """Dual-jet query at (numerically) zero vector."""


class InvalidContactAngle(AnicapError):
    """omega_0 outside (-F(E_{n+1}), F(-E_{n+1}))."""


class PointOffCap(AnicapError):
    """Query point does not lie on the capillary cap."""


class NotBoundaryPoint(AnicapError):
    """Boundary-frame query at a non-boundary point."""


class FormMismatch(AnicapError):
    """The two forms of the boundary-convexity condition disagree."""


class ChartFailure(AnicapError):
    """Meshing failed (star-shapedness / level-set crossing broken)."""


class SingularMetric(AnicapError):
    """det of the intrinsic metric is not positive at some node."""


class NotAdmissible(AnicapError):
    """Body fails admissibility (Robin residual or tau positivity)."""


class NotPositive(AnicapError):
    """Positivity of the support function required but violated."""


class NotSymmetricNorm(AnicapError):
    """Operation requires the declared norm symmetries."""


class ProjectionBreaksPositivity(AnicapError):
    """Compatibility projection of f lost positivity."""


class ConditionFailed(AnicapError):
    """Boundary-convexity condition fails; a-priori estimates unsupported."""


class AdmissibilityLost(AnicapError):
    """Solver hit the tau-positivity floor with step halving exhausted."""


class NoConvergence(AnicapError):
    """Newton/homotopy failed to reach the residual tolerance."""


class ConfigError(AnicapError):
    """Malformed or incomplete run configuration."""
