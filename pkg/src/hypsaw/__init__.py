"""Self-avoiding walks on the order-7 triangular tiling of the hyperbolic plane.

Exact lattice construction (combinatorial and geometric), reflection
automorphisms, graph convex hulls, exact SAW enumeration and sampling,
suffix-reflection maps, and the verification experiments built on them.
"""

__version__ = "0.1.0"
