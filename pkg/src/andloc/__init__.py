"""Anderson transitions in non-Hermitian disordered lattices."""

__version__ = "0.1.0"
