"""Numerical laboratory for semitube and Hartogs-Laurent domains in C^2."""
__version__ = "0.1.0"
