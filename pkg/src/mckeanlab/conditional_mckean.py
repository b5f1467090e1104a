"""Conditional McKean-Langevin system; the implementation lives in :mod:`mckeanlab.conditional`."""
from .conditional import *  # noqa: F401,F403
