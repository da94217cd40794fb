"""Cohomogeneity-one Einstein equations as a polynomial dynamical system."""
from .model import ModelParams, StateXYZ

__all__ = ["ModelParams", "StateXYZ"]
__version__ = "0.1.0"
