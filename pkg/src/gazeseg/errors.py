"""Error hierarchy shared across the package.

Exit codes used by the CLI: 0 success, 2 config, 3 data, 4 provider.
"""


class GazesegError(Exception):
    """Base class; carries the CLI exit code."""

    exit_code = 1


class ConfigError(GazesegError):
    exit_code = 2


class DataError(GazesegError):
    exit_code = 3


class ProviderError(GazesegError):
    exit_code = 4


class CodecError(DataError):
    """Malformed or unsupported raster file."""


class DetectionFailed(DataError):
    """Arena rectangle could not be located in the frame."""
