"""Offline figures from covering and trajectory text files."""

__version__ = "0.1.0"

from .covering import Covering, read_covering, read_points
from .plot_covering import plot_covering
