class TlsReflectError(Exception):
    """Base class for errors raised by this package."""


class CloudParseError(TlsReflectError):
    """A point-cloud file does not match its declared format."""


class CalibrationError(TlsReflectError):
    """Intensity-correction fitting failed (e.g. a rank-deficient design)."""


class DegenerateGeometryError(TlsReflectError):
    """A neighbourhood has too little spread to define a normal or plane."""


class ConfigError(TlsReflectError):
    """Invalid pipeline configuration."""


class StageError(TlsReflectError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
