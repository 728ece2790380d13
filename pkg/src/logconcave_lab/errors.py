"""Exception classes raised by the lab."""


class LabError(Exception):
    """Base class for all errors raised by logconcave_lab."""


class ConvexityAuditFailed(LabError):
    pass


class MassUnderflow(LabError):
    pass


class ZeroMassSlice(LabError):
    pass


class NonConvergence(LabError):
    pass


class NonLipschitzOnGrid(LabError):
    pass


class DimMismatch(LabError, ValueError):
    pass


class DegenerateJacobian(LabError):
    pass


class AbsoluteContinuityViolated(LabError):
    pass


class UndefinedPrefix(LabError):
    """A conditional-moment table was queried where the prefix carries no mass."""


class IntegrabilityFailed(LabError):
    pass


class NotMartingaleIncrements(LabError):
    pass


class NotIsotropic(LabError):
    pass


class NotPositiveDefinite(LabError, ValueError):
    pass


class DegenerateHull(LabError, ValueError):
    pass


class NotBarycentered(LabError, ValueError):
    pass


class ComponentNotMartingale(LabError):
    pass


class ConfigInvalid(LabError, ValueError):
    pass
