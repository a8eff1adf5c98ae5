"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every data or pipeline error raised by this package."""


class InvalidInputError(ToolkitError):
    """An operation was called with arguments outside its contract."""


class SchemaError(ToolkitError):
    """An input file does not match its declared schema."""


class FusionError(ToolkitError):
    """Job/host/telemetry records cannot be fused consistently."""


class LedgerError(ToolkitError):
    """The checkpoint ledger is corrupt, inconsistent, or incomplete."""
