"""Random dense matrices drawn from a symmetry class, for checks and tests."""

from __future__ import annotations

import numpy as np

from .ops import SymmetryOp, project_onto, tiled


def _staggered(n_sites: int) -> np.ndarray:
    return np.diag(np.where(np.arange(n_sites) % 2 == 0, 1.0, -1.0)).astype(complex)


def standard_ops(name: str, n: int) -> list:
    """Conventional symmetry operations of a class on an ``n``-dimensional space.

    Spinful classes use ``1 ⊗ σ`` with site-major ordering; the bipartite
    sublattice sign alternates between consecutive sites.
    """
    spin = n // 2
    if name == "A":
        return []
    if name == "AI":
        return [SymmetryOp("TRS", np.eye(n))]
    if name == "AIII":
        return [SymmetryOp("CS", np.diag(np.r_[np.ones(n // 2), -np.ones(n - n // 2)]))]
    if n % 2:
        raise ValueError(f"class {name} needs an even dimension")
    if name == "AII":
        return [SymmetryOp("TRS", tiled("y", spin))]
    if name == "AII†":
        return [SymmetryOp("TRS†", tiled("y", spin))]
    if name == "DIII":
        return [SymmetryOp("TRS", tiled("y", spin)), SymmetryOp("PHS", tiled("x", spin))]
    if name == "CII†":
        return [SymmetryOp("TRS†", tiled("y", spin)),
                SymmetryOp("PHS†", np.kron(_staggered(spin), tiled("y", 1)))]
    raise KeyError(f"no standard operations stored for class {name!r}")


def random_class_matrix(name: str, n: int, rng: np.random.Generator, scale: float = 1.0):
    """Complex Gaussian matrix projected onto the class ``name``.

    Returns
    -------
    H : ndarray
    ops : list of SymmetryOp
        The relations ``H`` satisfies.
    """
    ops = standard_ops(name, n)
    raw = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    return project_onto(raw, ops), ops
