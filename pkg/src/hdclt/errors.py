"""Semantic exception hierarchy shared by all hdclt modules."""


class HdcltError(Exception):
    """Base error for this package."""


class DomainError(HdcltError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SpecificationError(HdcltError, ValueError):
    """A tail specification, schedule or config violates a named constraint."""


class SolverError(HdcltError, RuntimeError):
    """A root finder or fixed-point iteration failed to converge."""


class EstimationError(HdcltError, RuntimeError):
    """A Monte Carlo estimator cannot produce a stable value from the sample."""
