"""Moderated particle system; the implementation lives in :mod:`mckeanlab.particles`."""
from .particles import *  # noqa: F401,F403
