"""Free-fermion toolkit for the critical 2D Ising model.

Four presentations of the same free-fermion content, cross-checked against
each other: exact transfer matrices on lattice strips, continuum correlators
on conformally mapped domains, a level-truncated Clifford vertex algebra
with exact rational arithmetic, and chordal SLE(3) martingale dynamics.
"""

from .numerics import (
    RngStream,
    SkewMatrix,
    brownian_increments,
    central_diff,
    pfaffian,
    pfaffian_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "SkewMatrix",
    "brownian_increments",
    "central_diff",
    "pfaffian",
    "pfaffian_oracle",
    "__version__",
]
