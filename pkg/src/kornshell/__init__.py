"""Numerical verification of Korn-type inequalities on thin shells with a flat point."""

__version__ = "0.1.0"
