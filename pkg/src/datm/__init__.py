"""Desk-scale dataset distillation by difficulty-aligned trajectory matching."""

__version__ = "0.1.0"
