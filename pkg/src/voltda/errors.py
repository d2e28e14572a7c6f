"""Exception hierarchy shared by all pipeline stages."""


class VoltdaError(Exception):
    """Base class for every error raised by this package."""


class FormatError(VoltdaError):
    """Malformed file contents (bad magic, bad header, short payload)."""


class ShapeError(VoltdaError):
    """Array rank or dimensions incompatible with a 3D volume."""


class LayoutError(VoltdaError):
    """Memory layout or dtype we refuse to interpret (Fortran order, complex)."""


class TruncationError(FormatError):
    """Raw payload length does not match its sidecar descriptor."""


class SpecError(VoltdaError):
    """Invalid synthetic-volume or converter configuration."""


class ThresholdError(VoltdaError):
    """A Rips threshold cannot be derived from the given cloud."""


class ResourceError(VoltdaError):
    """Simplex budget exceeded during complex construction."""


class IntegrityError(VoltdaError):
    """Complex or diagram violates a structural invariant."""


class OracleScaleError(VoltdaError):
    """Input too large for the dense reference reduction."""


class DomainError(VoltdaError, ValueError):
    """Parameter outside its mathematical domain."""


class EmptyDiagramError(VoltdaError):
    """No finite pairs from which to derive image bounds."""


class InsufficientDataError(VoltdaError):
    """Too few labelled samples for a stratified evaluation."""


class ConfigError(VoltdaError):
    """Invalid pipeline configuration."""
