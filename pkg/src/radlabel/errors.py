"""Shared exception types, mapped to CLI exit codes."""


class ValidationError(ValueError):
    """Bad arguments, configuration, or preconditions. CLI exit code 2."""


class DataError(RuntimeError):
    """Malformed, inconsistent, or insufficient input data. CLI exit code 3."""
