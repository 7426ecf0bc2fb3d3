"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 1 (usage),
DataError -> 2, NumericError -> 3.
"""


class CuenetError(Exception):
    pass


class ConfigError(CuenetError):
    """Bad flags, unknown config keys, invalid option values."""


class DataError(CuenetError):
    """Malformed corpus files, out-of-range labels, missing inputs."""


class NumericError(CuenetError):
    """Non-finite losses or other numeric breakdown during training."""
