"""Numerical kernels, rating stages and pipeline orchestration."""

from services.validation import validation_service

__all__ = ["validation_service"]
