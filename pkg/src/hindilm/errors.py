"""Shared exception types, mapped to CLI exit codes."""


class DataError(Exception):
    """Malformed or unreadable input data (corpus files, model files, TSVs)."""


class NumericError(Exception):
    """Non-finite value produced or consumed by a numeric operation."""
