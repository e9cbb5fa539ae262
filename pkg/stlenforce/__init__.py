"""Runtime enforcement of non-nested STL properties on piecewise-linear signals."""

__version__ = "0.1.0"
