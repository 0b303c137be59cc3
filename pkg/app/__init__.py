"""Robust path following: simulator, learned controller, trainer and evaluation."""

__version__ = "1.0.0"
__author__ = "Robust Path Following Team"
