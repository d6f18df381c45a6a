"""Skew products of weakly contracting planar maps over an expanding circle map.

Tools to build the plateau fiber family, iterate its skew product and
solenoidal extension, certify attractors and pullback invariant graphs,
and run ergodic diagnostics (Lyapunov, Birkhoff, synchronization, mixing)
with reproducible, seedable artifacts.
"""

__version__ = "0.1.0"
