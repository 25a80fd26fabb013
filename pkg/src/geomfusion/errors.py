"""Exception hierarchy shared across the pipeline.

The CLI maps these onto process exit codes: usage errors exit 2,
data errors exit 3, artifact errors exit 4.
"""


class GeomFusionError(Exception):
    """Base class for all pipeline errors."""


class UsageError(GeomFusionError):
    """Bad arguments or inconsistent options."""

    exit_code = 2


class DataError(GeomFusionError):
    """Malformed or insufficient input data."""

    exit_code = 3


class ArtifactError(GeomFusionError):
    """Missing, malformed, or incompatible model artifact."""

    exit_code = 4
