"""Non-Hermitian matrices built from Hermitian ones so that eigenmodes carry over.

Each recipe takes one or two Hermitian matrices of a given Hermitian class and
returns a non-Hermitian matrix of a target class together with its symmetry
operations, the symmetry-conserving energy, and a map sending eigenmodes of
the input to right eigenmodes of the output at that energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classes import class_record
from .ops import SIGMA_X, SIGMA_Y, SIGMA_Z, SymmetryOp, tiled, verify  # noqa: F401

# target class -> (Hermitian input class, number of inputs)
RECIPES = {
    "AIII": ("A", 1),
    "AIII+S-": ("A", 2),
    "BDI+S-+": ("A", 1),
    "CI+S-+": ("A", 1),
    "CI": ("AI", 1),
    "BDI†": ("AI", 1),
    "CI+S+-": ("AI", 2),
    "AIII†": ("AIII", 2),
    "AIII+S+": ("AIII", 1),
    "D+S+": ("AIII", 1),
    "C+S+": ("AIII", 1),
    "AI+S-": ("AIII", 1),
    "AI+S+": ("BDI", 2),
    "BDI+S++": ("BDI", 1),
    "CI+S++": ("BDI", 1),
}


@dataclass(frozen=True)
class Construction:
    """Output of :func:`construct_from_hermitian`."""

    recipe: str
    matrix: np.ndarray = field(repr=False)
    ops: tuple = field(repr=False)
    energy: complex
    map_mode: Callable = field(repr=False)

    @property
    def target_class(self) -> str:
        return self.recipe

    def max_residual(self) -> float:
        return max((verify(self.matrix, op) for op in self.ops), default=0.0)


def _block(a, b, c, d):
    return np.block([[a, b], [c, d]])


def _check_hermitian(h, name, tol):
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"{name}: input must be square")
    scale = max(np.linalg.norm(h), 1.0)
    if np.linalg.norm(h - h.conj().T) > tol * scale:
        raise ValueError(f"{name}: input is not Hermitian")


def _chiral_block(h_tilde, name, tol, real=False):
    """Upper-right block ``h`` of a chiral Hermitian matrix ``[[0, h], [h†, 0]]``."""
    n2 = h_tilde.shape[0]
    if n2 % 2:
        raise ValueError(f"{name}: chiral input must have even dimension")
    n = n2 // 2
    scale = max(np.linalg.norm(h_tilde), 1.0)
    if np.linalg.norm(h_tilde[:n, :n]) + np.linalg.norm(h_tilde[n:, n:]) > tol * scale:
        raise ValueError(f"{name}: input does not anticommute with σ_z (class AIII form)")
    h = h_tilde[:n, n:]
    if real and np.linalg.norm(h.imag) > tol * scale:
        raise ValueError(f"{name}: class BDI input must be real")
    return h


def _check_trs(h, v_t, name, tol):
    scale = max(np.linalg.norm(h), 1.0)
    if v_t.shape != h.shape:
        raise ValueError(f"{name}: V_T has the wrong dimension")
    if np.linalg.norm(v_t @ h @ v_t.conj().T - h.conj()) > tol * scale:
        raise ValueError(f"{name}: input violates V_T H V_T† = H* (class AI)")


def ai_sigma_x_basis(real_symmetric: np.ndarray) -> np.ndarray:
    """Rotate a real symmetric matrix of even size into the basis where V_T = σ_x ⊗ 1."""
    s = np.asarray(real_symmetric, dtype=complex)
    m = s.shape[0]
    if m % 2:
        raise ValueError("dimension must be even")
    n = m // 2
    w = np.kron(np.array([[1, 1j], [1, -1j]]) / np.sqrt(2), np.eye(n))
    return w @ s @ w.conj().T


def _chirality(vec, n, tol=1e-12):
    """+1 for (ψ, 0), -1 for (0, ψ), error otherwise."""
    top = np.linalg.norm(vec[:n])
    bottom = np.linalg.norm(vec[n:])
    if bottom <= tol * max(top, 1e-300):
        return 1
    if top <= tol * max(bottom, 1e-300):
        return -1
    raise ValueError("zero mode of a chiral input must have definite chirality")


def construct_from_hermitian(recipe: str, inputs, energies=None, imaginary_energy: float = 0.0,
                             block_split: int | None = None, v_t=None,
                             tol: float = 1e-10) -> Construction:
    """Build a non-Hermitian matrix of class ``recipe`` from Hermitian inputs.

    Parameters
    ----------
    recipe : str
        Target non-Hermitian class, one of :data:`RECIPES`.
    inputs : array or sequence of arrays
        One Hermitian matrix, or two independent ones for the two-input recipes
        (AIII+S-, CI+S+-, AIII†, AI+S+). Chiral inputs (classes AIII and BDI)
        are given in the block form ``[[0, h], [h†, 0]]``.
    energies : sequence of float, optional
        Real reference energies of the inputs. Zero by default; chiral inputs
        always use zero.
    imaginary_energy : float
        ``E_i`` of the recipes with an imaginary symmetry-conserving energy
        (AIII, BDI†).
    block_split : int, optional
        Size ``n1`` of the first diagonal block (AIII, BDI†). Defaults to half.
    v_t : ndarray, optional
        Time-reversal unitary of class-AI inputs for CI+S+- (default identity).
        CI requires V_T = σ_x ⊗ 1 and BDI† requires V_T = diag(1, -1) with the
        block split, as in their standard forms.

    Returns
    -------
    Construction
    """
    from .classes import canonical_name

    name = canonical_name(recipe)
    if name not in RECIPES:
        raise KeyError(f"no construction recipe for class {recipe!r}")
    source_class, n_inputs = RECIPES[name]
    mats = [np.asarray(inputs, dtype=complex)] if isinstance(inputs, np.ndarray) and np.ndim(inputs) == 2 \
        else [np.asarray(m, dtype=complex) for m in inputs]
    if len(mats) != n_inputs:
        raise ValueError(f"recipe {name} takes {n_inputs} input matrices, got {len(mats)}")
    if n_inputs == 2 and mats[0].shape != mats[1].shape:
        raise ValueError("two-input recipes need inputs of equal dimension")
    for m in mats:
        _check_hermitian(m, name, tol)
    dim = mats[0].shape[0]
    divisor = class_record(name).even_dimension
    if dim % divisor:
        raise ValueError(f"recipe {name} needs the input dimension to be a multiple of {divisor}")
    energies = [0.0] * n_inputs if energies is None else [float(e) for e in np.atleast_1d(energies)]
    if len(energies) != n_inputs:
        raise ValueError("one reference energy per input is required")
    if source_class in ("AIII", "BDI") and any(energies):
        raise ValueError("chiral inputs are used at zero energy")

    builder = _BUILDERS[name]
    H, ops, energy, mapper = builder(mats, energies, imaginary_energy, block_split, v_t, tol)
    out = Construction(name, H, tuple(ops), complex(energy), mapper)
    residual = out.max_residual()
    if residual > max(tol, 1e-12):
        raise ArithmeticError(f"recipe {name}: symmetry residual {residual:.2e}")
    return out


def _split(dim, block_split):
    n1 = dim // 2 if block_split is None else int(block_split)
    if not 0 < n1 < dim:
        raise ValueError("block_split must lie strictly between 0 and the dimension")
    return n1


def _imaginary_blocks(h, e, n1, e_i):
    """``[[-i(h1 - e), i h12], [-i h12†, i(h2 - e)]] + i e_i``."""
    dim = h.shape[0]
    H = 1j * (h - e * np.eye(dim))
    H[:n1, :n1] *= -1
    H[n1:, :n1] *= -1
    return H + 1j * e_i * np.eye(dim)


def _build_aiii(mats, energies, e_i, block_split, v_t, tol):
    h = mats[0]
    dim = h.shape[0]
    n1 = _split(dim, block_split)
    H = _imaginary_blocks(h, energies[0], n1, e_i)
    u_c = np.diag(np.r_[np.ones(n1), -np.ones(dim - n1)]).astype(complex)
    return H, [SymmetryOp("CS", u_c)], 1j * e_i, lambda psi, source=0: u_c @ psi


def _build_aiii_s_minus(mats, energies, e_i, block_split, v_t, tol):
    a, b = mats
    n = a.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    H = _block(zero, a - energies[0] * eye, b - energies[1] * eye, zero)
    ops = [SymmetryOp("CS", tiled("y", n, outer=True)), SymmetryOp("SLS", tiled("z", n, outer=True))]
    return H, ops, 0.0, _two_input_map(n)


def _two_input_map(n):
    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        zero = np.zeros(n, dtype=complex)
        return np.r_[zero, psi] if source == 0 else np.r_[psi, zero]
    return mapper


def _build_bdi_s_minus_plus(mats, energies, e_i, block_split, v_t, tol):
    h = mats[0]
    n = h.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    H = _block(zero, 1j * (h - energies[0] * eye), -1j * (h.conj() - energies[0] * eye), zero)
    ops = [SymmetryOp("SLS", tiled("z", n, outer=True)),
           SymmetryOp("TRS", tiled("x", n, outer=True)),
           SymmetryOp("PHS", np.eye(2 * n))]
    return H, ops, 0.0, _two_input_map(n)


def _build_ci_s_minus_plus(mats, energies, e_i, block_split, v_t, tol):
    h = mats[0]
    n = h.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    sy = tiled("y", n // 2)
    H = _block(zero, h - energies[0] * eye, -sy @ (h.conj() - energies[0] * eye) @ sy, zero)
    ops = [SymmetryOp("SLS", tiled("z", n, outer=True)),
           SymmetryOp("TRS", np.kron(SIGMA_Y, sy)),
           SymmetryOp("PHS", np.kron(np.eye(2), sy))]
    return H, ops, 0.0, _two_input_map(n)


def _build_ci(mats, energies, e_i, block_split, v_t, tol):
    h = mats[0]
    n = h.shape[0] // 2
    sx = tiled("x", n, outer=True)
    _check_trs(h, sx, "CI", tol)
    H = _imaginary_blocks(h, energies[0], n, 0.0)
    sz = tiled("z", n, outer=True)
    ops = [SymmetryOp("TRS", sx), SymmetryOp("PHS", tiled("y", n, outer=True))]
    return H, ops, 0.0, lambda psi, source=0: sz @ psi


def _build_bdi_dagger(mats, energies, e_i, block_split, v_t, tol):
    h = mats[0]
    dim = h.shape[0]
    n1 = _split(dim, block_split)
    u_t = np.diag(np.r_[np.ones(n1), -np.ones(dim - n1)]).astype(complex)
    _check_trs(h, u_t, "BDI†", tol)
    H, _, energy, mapper = _build_aiii(mats, energies, e_i, n1, v_t, tol)
    ops = [SymmetryOp("TRS†", np.eye(dim)), SymmetryOp("PHS†", u_t)]
    return H, ops, energy, mapper


def _build_ci_s_plus_minus(mats, energies, e_i, block_split, v_t, tol):
    a, b = mats
    n = a.shape[0]
    vt = np.eye(n, dtype=complex) if v_t is None else np.asarray(v_t, dtype=complex)
    for m in mats:
        _check_trs(m, vt, "CI+S+-", tol)
    H, _, _, mapper = _build_aiii_s_minus(mats, energies, e_i, block_split, v_t, tol)
    ops = [SymmetryOp("SLS", tiled("z", n, outer=True)),
           SymmetryOp("TRS", np.kron(np.eye(2), vt)),
           SymmetryOp("PHS", np.kron(SIGMA_Y, vt))]
    return H, ops, 0.0, mapper


def _build_aiii_dagger(mats, energies, e_i, block_split, v_t, tol):
    h1 = _chiral_block(mats[0], "AIII†", tol)
    h2 = _chiral_block(mats[1], "AIII†", tol)
    n = h1.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h1, h2, zero)

    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        if _chirality(psi, n) != -1:
            raise ValueError("AIII† carries over zero modes of negative chirality only")
        return psi.copy() if source == 0 else np.r_[psi[n:], psi[:n]]

    return H, [SymmetryOp("SLS", tiled("z", n, outer=True))], 0.0, mapper


def _build_aiii_s_plus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "AIII+S+", tol)
    n = h.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h, -h.conj().T, zero)
    ops = [SymmetryOp("CS", np.eye(2 * n)), SymmetryOp("SLS", tiled("z", n, outer=True))]
    return H, ops, 0.0, lambda psi, source=0: np.asarray(psi, dtype=complex).copy()


def _conj_positive(n, twist=None):
    """Map (ψ+, 0) -> (twist ψ+*, 0) and keep (0, ψ-)."""
    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        if _chirality(psi, n) == 1:
            top = psi[:n].conj() if twist is None else twist @ psi[:n].conj()
            return np.r_[top, np.zeros(n, dtype=complex)]
        return psi.copy()
    return mapper


def _build_d_s_plus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "D+S+", tol)
    n = h.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h, h.T, zero)
    sz = tiled("z", n, outer=True)
    ops = [SymmetryOp("PHS", sz), SymmetryOp("SLS", sz), SymmetryOp("TRS†", np.eye(2 * n))]
    return H, ops, 0.0, _conj_positive(n)


def _build_c_s_plus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "C+S+", tol)
    n = h.shape[0]
    zero = np.zeros((n, n))
    sy = tiled("y", n // 2)
    H = _block(zero, h, sy @ h.T @ sy, zero)
    ops = [SymmetryOp("PHS", np.kron(SIGMA_Z, sy)),
           SymmetryOp("TRS†", np.kron(np.eye(2), sy)),
           SymmetryOp("SLS", tiled("z", n, outer=True))]
    return H, ops, 0.0, _conj_positive(n, sy)


def _build_ai_s_minus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "AI+S-", tol)
    n = h.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h, h.conj(), zero)
    ops = [SymmetryOp("TRS", tiled("x", n, outer=True)),
           SymmetryOp("PHS†", tiled("y", n, outer=True)),
           SymmetryOp("SLS", tiled("z", n, outer=True))]

    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        if _chirality(psi, n) != -1:
            raise ValueError("AI+S- carries over zero modes of negative chirality only")
        return psi.copy()

    return H, ops, 0.0, mapper


def _build_ai_s_plus(mats, energies, e_i, block_split, v_t, tol):
    h1 = _chiral_block(mats[0], "AI+S+", tol, real=True).real
    h2 = _chiral_block(mats[1], "AI+S+", tol, real=True).real
    n = h1.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h1, h2, zero).astype(complex)
    ops = [SymmetryOp("TRS", np.eye(2 * n)), SymmetryOp("SLS", tiled("z", n, outer=True))]

    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        if _chirality(psi, n) != -1:
            raise ValueError("AI+S+ carries over zero modes of negative chirality only")
        return psi.copy() if source == 0 else np.r_[psi[n:], psi[:n]]

    return H, ops, 0.0, mapper


def _build_bdi_s_plus_plus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "BDI+S++", tol, real=True).real
    n = h.shape[0]
    zero = np.zeros((n, n))
    H = _block(zero, h, -h.T, zero).astype(complex)
    ops = [SymmetryOp("TRS", np.eye(2 * n)), SymmetryOp("PHS", np.eye(2 * n)),
           SymmetryOp("SLS", tiled("z", n, outer=True))]
    return H, ops, 0.0, lambda psi, source=0: np.asarray(psi, dtype=complex).copy()


def _build_ci_s_plus_plus(mats, energies, e_i, block_split, v_t, tol):
    h = _chiral_block(mats[0], "CI+S++", tol, real=True).real
    n = h.shape[0]
    zero = np.zeros((n, n))
    sy = tiled("y", n // 2)
    H = _block(zero, h, -sy @ h.T @ sy, zero)
    ops = [SymmetryOp("TRS", np.eye(2 * n)),
           SymmetryOp("PHS", np.kron(np.eye(2), sy)),
           SymmetryOp("SLS", tiled("z", n, outer=True))]

    def mapper(psi, source=0):
        psi = np.asarray(psi, dtype=complex)
        if _chirality(psi, n) == 1:
            return np.r_[sy @ psi[:n], np.zeros(n, dtype=complex)]
        return psi.copy()

    return H, ops, 0.0, mapper


_BUILDERS = {
    "AIII": _build_aiii,
    "AIII+S-": _build_aiii_s_minus,
    "BDI+S-+": _build_bdi_s_minus_plus,
    "CI+S-+": _build_ci_s_minus_plus,
    "CI": _build_ci,
    "BDI†": _build_bdi_dagger,
    "CI+S+-": _build_ci_s_plus_minus,
    "AIII†": _build_aiii_dagger,
    "AIII+S+": _build_aiii_s_plus,
    "D+S+": _build_d_s_plus,
    "C+S+": _build_c_s_plus,
    "AI+S-": _build_ai_s_minus,
    "AI+S+": _build_ai_s_plus,
    "BDI+S++": _build_bdi_s_plus_plus,
    "CI+S++": _build_ci_s_plus_plus,
}

__all__ = ["RECIPES", "Construction", "construct_from_hermitian", "ai_sigma_x_basis",
           "SIGMA_X", "SIGMA_Y", "SIGMA_Z"]
