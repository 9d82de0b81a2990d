"""Exception types raised across the engine."""


class EchotraceError(Exception):
    """Base class for all engine errors."""


class ParseError(EchotraceError):
    """A mesh or config file could not be parsed."""


class EmptyMesh(EchotraceError):
    """A mesh file contained zero triangles."""


class UnknownMaterial(EchotraceError):
    """A scene instance references a material id that was never declared."""


class MissingMesh(EchotraceError):
    """A scene instance references a mesh id or file that cannot be resolved."""


class InvalidFrequencyGrid(EchotraceError):
    """Frequency bin centers are empty, non-positive, or not strictly increasing."""


class UnknownEntity(EchotraceError):
    """An emitter/receiver/instance id lookup failed."""


class RevisionMismatch(EchotraceError):
    """Data produced from one scene revision was fed to another."""


class GridMismatch(EchotraceError):
    """Spectra from different spectral grids were combined."""


class SampleRateMismatch(EchotraceError):
    """Impulse response and emitted signal disagree on sample rate."""


class AliasRisk(EchotraceError):
    """A propagation delay exceeds the spectral grid's unambiguous time span."""


class IsolatedVertex(UserWarning):
    """A vertex belongs to no (non-degenerate) triangle; its curvature is 0."""
