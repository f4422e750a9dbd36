"""Symmetry relations, Hermitization and the non-Hermitian class table."""

from .classes import (
    ClassRecord,
    SymmetryClassTag,
    all_classes,
    canonical_name,
    class_record,
    classify,
    close_symmetries,
    counterpart,
    energy_kind_for,
    export_table,
    inverse_table,
    reduce_class,
)
from .ops import (
    PAULI,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    HermitizedPair,
    SymmetryOp,
    hermitize,
    project_onto,
    tiled,
    verify,
)
from .recipes import RECIPES, Construction, ai_sigma_x_basis, construct_from_hermitian
from .random import random_class_matrix

__all__ = [
    "ClassRecord", "SymmetryClassTag", "all_classes", "canonical_name", "class_record",
    "classify", "close_symmetries", "counterpart", "energy_kind_for", "export_table",
    "inverse_table", "reduce_class", "PAULI", "SIGMA_X", "SIGMA_Y", "SIGMA_Z",
    "HermitizedPair", "SymmetryOp", "hermitize", "project_onto", "tiled", "verify",
    "RECIPES", "Construction", "ai_sigma_x_basis", "construct_from_hermitian",
    "random_class_matrix",
]
