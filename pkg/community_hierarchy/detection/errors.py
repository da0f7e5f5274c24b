from __future__ import annotations

from typing import Optional


class HierarchyError(Exception):
    """Base class for every error raised by the detection subsystem."""


class ValidationError(HierarchyError, ValueError):
    """
    A precondition of an operation does not hold (invalid parameters, depth out of
    range, mismatched node counts, ...).
    """


class EigensolverError(HierarchyError, RuntimeError):
    def __init__(self, message: str, residual: Optional[float] = None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual
