"""Worst-case complexity certification for branch-and-bound MILP/MIQP solvers
over multi-parametric problem families."""

__version__ = "0.1.0"
