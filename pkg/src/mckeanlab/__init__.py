"""Numerical laboratory for moderated and conditional McKean SDEs."""
__version__ = "0.1.0"
