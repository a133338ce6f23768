"""Exception types shared across the package."""


class CalabiflowError(Exception):
    """Base class for all calabiflow errors."""


class InvalidGrid(CalabiflowError):
    """Grid bounds or node count violate the preconditions."""


class ConeViolation(CalabiflowError):
    """Profile left the Kahler cone (phi' outside (0, b) or phi'' <= 0)."""


class NumericalBlowup(CalabiflowError):
    """NaN or infinity detected during time stepping."""


class FormulaMismatch(CalabiflowError):
    """The two scalar-curvature formulas disagree beyond tolerance."""


class VertexAtBoundary(CalabiflowError):
    """Weighted-potential argmin landed on the outermost grid nodes."""


class WrongSingularityType(CalabiflowError):
    """Diagnostic invoked on a run whose singularity type it does not cover."""


class BracketError(CalabiflowError):
    """No sign change found when bracketing the soliton shooting integral."""


class PositivityLoss(CalabiflowError):
    """Soliton momentum profile w(x) dropped to zero or below."""


class Inconclusive(CalabiflowError):
    """Run too short to classify the blow-up limit."""
