"""Exception types raised across the package."""


class HankelSysIdError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(HankelSysIdError, ValueError):
    """Array shapes or block geometry are inconsistent."""


class DomainError(HankelSysIdError, ValueError):
    """A scalar argument lies outside the domain of the operation."""


class UnsupportedGeometryError(HankelSysIdError, ValueError):
    """The operation is only defined for a restricted geometry (e.g. SISO)."""


class ConfigError(HankelSysIdError, ValueError):
    """An experiment configuration is invalid."""


class DatasetError(HankelSysIdError, ValueError):
    """A numeric data file could not be parsed."""
