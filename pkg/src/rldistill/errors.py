"""Shared exception types.

Exit-code mapping for the CLI lives in :mod:`rldistill.cli`; library code
raises these and never calls ``sys.exit`` itself.
"""

from __future__ import annotations


class ContractViolation(ValueError):
    """A caller broke a documented precondition (bad shapes, bad ranges, ...)."""


class NumericalFailure(ArithmeticError):
    """A recorded computation produced a non-finite value.

    ``node_id`` identifies the offending node in the active computation
    record, when known.
    """

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class ConfigError(ValueError):
    """Config file failed strict parsing or validation."""


class DatasetFormatError(ValueError):
    """A dataset/encoder file is malformed or has an unsupported version."""
