"""Paired critics with cross-evaluated targets and conservative advantage reshaping."""

__version__ = "0.1.0"
