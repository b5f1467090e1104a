"""Mild formulation, contraction and uniqueness replay; the implementation lives in :mod:`mckeanlab.mild`."""
from .mild import *  # noqa: F401,F403
