"""Arbitrarily regular conforming virtual elements on polygonal meshes.

Builds C^k (k = p2 - 1) conforming virtual element spaces on polygonal
tessellations of the unit square and solves the Poisson (p1 = 1) and
biharmonic (p1 = 2) equations, with configurable stabilization and a
CG/Lanczos condition-number estimator.
"""

__version__ = "0.1.0"
