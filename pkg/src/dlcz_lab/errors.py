"""Package-level exception types, one per failure class the CLI reports."""


class DlczError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(DlczError):
    """Bad configuration file, unknown key, or invalid parameter value."""


class RecordFormatError(DlczError):
    """Malformed, truncated, or version-incompatible record/summary file."""


class FitError(DlczError):
    """A statistical estimate or fit could not be formed from the data."""


class InversionError(DlczError):
    """Loss inversion produced an unphysical state (and clipping was off)."""
