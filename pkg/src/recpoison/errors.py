"""Shared exception types."""


class NumericError(RuntimeError):
    """Non-finite values or degenerate numeric inputs during optimization."""
