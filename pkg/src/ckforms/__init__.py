"""Numerical laboratory for conformal Killing forms on Riemannian manifolds.

Everything is built on exact truncated Taylor-jet arithmetic: chart metrics
are evaluated as jets, curvature and covariant derivatives fall out by
algebra, and every analytic identity is checked pointwise at sampled chart
points.
"""

__version__ = "0.1.0"
