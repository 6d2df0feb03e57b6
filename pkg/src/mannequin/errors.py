"""Exception types raised by the mannequin package."""


class MannequinError(Exception):
    """Base class for all package-specific errors."""


class MalformedPoseError(MannequinError):
    """Pose is structurally invalid (wrong shape, non-finite, bad quaternion)."""


class DegeneratePrimitiveError(MannequinError):
    """Primitive fitting hit a zero-length segment or non-positive dimension."""


class RenderViewpointError(MannequinError):
    """Camera cannot see the body (behind or inside it)."""


class ProjectionError(MannequinError):
    """A point to be projected lies behind the camera."""


class UninterpretableSketchError(MannequinError):
    """Stroke set carries no usable figure structure."""


class SearchBudgetError(MannequinError):
    """Chain-assignment search exceeded its node budget."""


class UnderconstrainedLiftError(MannequinError):
    """Too few confident 2D joints to attempt a 3D lift."""


class DegenerateGeometryError(MannequinError):
    """Point cloud is too degenerate (collinear/coincident) for registration."""
