"""Exception types."""
from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class KernelError(ValueError):
    """A transition matrix is malformed (negative entries, bad row sums, shape)."""


class ConvergenceError(RuntimeError):
    """A series or recursion did not reach its truncation criterion."""


class CertificationError(Exception):
    """Drift or minorisation inequalities fail for the supplied data.

    ``violations`` holds ``(kernel_index, state, margin)`` tuples; a positive
    margin is the amount by which the inequality is broken.
    """

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)
