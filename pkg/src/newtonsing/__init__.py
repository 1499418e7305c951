"""Newton-polyhedron invariants and numerical checks for odd singular kernels |b|^-delta0."""

__version__ = "0.1.0"
