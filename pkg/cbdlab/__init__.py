"""cbdlab - numerical toolkit for convex-body sparse domination."""

__version__ = "0.1.0"
