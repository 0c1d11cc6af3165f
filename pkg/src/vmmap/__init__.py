"""Exact solvers for bandwidth-constrained virtual machine mapping."""

__version__ = "0.1.0"
