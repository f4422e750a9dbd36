"""Symmetry operations on (non-Hermitian) matrices and Hermitization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI = {"0": SIGMA_0, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

# kind -> (matrix operation applied to H, sign of the right-hand side)
RELATIONS = {
    "TRS": ("conj", 1),
    "PHS": ("transpose", -1),
    "TRS†": ("transpose", 1),
    "PHS†": ("conj", -1),
    "CS": ("dagger", -1),
    "SLS": ("identity", -1),
}
ANTIUNITARY = ("TRS", "PHS", "TRS†", "PHS†")

_ALIASES = {
    "TRS+": "TRS", "T+": "TRS",
    "PHS-": "PHS", "P-": "PHS",
    "TRSDAG": "TRS†", "TRS^DAGGER": "TRS†", "P+": "TRS†",
    "PHSDAG": "PHS†", "PHS^DAGGER": "PHS†", "T-": "PHS†",
    "C": "CS", "S": "SLS",
}


def canonical_kind(kind: str) -> str:
    """Normalize a symmetry kind name, accepting ASCII aliases such as ``TRSdag``."""
    if kind in RELATIONS:
        return kind
    key = kind.strip().upper().replace("_", "")
    if key in _ALIASES:
        return _ALIASES[key]
    for name in RELATIONS:
        if key == name.upper():
            return name
    raise ValueError(f"unknown symmetry kind {kind!r}")


def apply_relation(matrix: np.ndarray, operation: str) -> np.ndarray:
    if operation == "conj":
        return matrix.conj()
    if operation == "transpose":
        return matrix.T
    if operation == "dagger":
        return matrix.conj().T
    return matrix


def tiled(pauli: np.ndarray | str, copies: int, outer: bool = False) -> np.ndarray:
    """Kronecker product of a 2x2 matrix with an identity of size ``copies``.

    With ``outer=False`` the result is ``1_copies ⊗ pauli`` (site-major, spin-minor
    ordering); with ``outer=True`` it is ``pauli ⊗ 1_copies`` (block structure).
    """
    p = PAULI[pauli] if isinstance(pauli, str) else np.asarray(pauli, dtype=complex)
    ident = np.eye(copies, dtype=complex)
    return np.kron(p, ident) if outer else np.kron(ident, p)


@dataclass(frozen=True)
class SymmetryOp:
    """A symmetry relation ``U op(H) U† = ±H`` with a fixed unitary.

    Parameters
    ----------
    kind : str
        One of ``TRS, PHS, TRS†, PHS†, CS, SLS``.
    unitary : ndarray
        The unitary matrix ``U``.
    sign : int, optional
        ``U U*`` for the antiunitary kinds. Computed when omitted.
    """

    kind: str
    unitary: np.ndarray = field(repr=False)
    sign: int | None = None
    tol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        u = np.asarray(self.unitary, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("unitary must be a square matrix")
        object.__setattr__(self, "unitary", u)
        n = u.shape[0]
        ident = np.eye(n)
        if np.linalg.norm(u.conj().T @ u - ident) > self.tol * max(1.0, np.sqrt(n)):
            raise ValueError(f"{kind}: matrix is not unitary")
        if kind in ANTIUNITARY:
            uu = u @ u.conj()
            if np.linalg.norm(uu - ident) <= self.tol * np.sqrt(n):
                computed = 1
            elif np.linalg.norm(uu + ident) <= self.tol * np.sqrt(n):
                computed = -1
            else:
                raise ValueError(f"{kind}: U U* is not ±1")
            if self.sign is not None and self.sign != computed:
                raise ValueError(f"{kind}: declared sign {self.sign} but U U* = {computed}")
            object.__setattr__(self, "sign", computed)
        else:
            if np.linalg.norm(u @ u - ident) > self.tol * np.sqrt(n):
                raise ValueError(f"{kind}: U^2 must equal 1")
            object.__setattr__(self, "sign", None)

    @property
    def antiunitary(self) -> bool:
        return self.kind in ANTIUNITARY

    def transform(self, H: np.ndarray) -> np.ndarray:
        operation, _ = RELATIONS[self.kind]
        u = self.unitary
        return u @ apply_relation(H, operation) @ u.conj().T

    def target(self, H: np.ndarray) -> np.ndarray:
        return RELATIONS[self.kind][1] * H


def verify(H, op: SymmetryOp) -> float:
    """Relative Frobenius residual of the symmetry relation of ``op`` on ``H``.

    Returns 0 when the relation holds exactly. For the zero matrix the
    absolute residual is returned (which is also 0).
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if op.unitary.shape != H.shape:
        raise ValueError(f"dimension mismatch: U is {op.unitary.shape}, H is {H.shape}")
    diff = np.linalg.norm(op.transform(H) - op.target(H))
    scale = np.linalg.norm(H)
    return float(diff / scale) if scale > 0 else float(diff)


@dataclass(frozen=True)
class HermitizedPair:
    """Doubled Hermitian matrix ``[[0, H-E], [H†-E*, 0]]`` with its chiral operator."""

    original: np.ndarray = field(repr=False)
    energy: complex
    matrix: np.ndarray = field(repr=False)
    chirality: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def zero_modes(self, threshold: float = 1e-8):
        """Zero modes of the doubled matrix, returned as ``(right, left)`` vectors.

        ``right`` solves ``(H - E) φ = 0`` and ``left`` solves ``(H - E)† φ = 0``.
        Returns ``None`` when the smallest singular value of ``H - E`` exceeds
        ``threshold * ‖H‖``.
        """
        n = self.original.shape[0]
        shifted = self.original - self.energy * np.eye(n)
        u, s, vh = np.linalg.svd(shifted)
        scale = max(np.linalg.norm(self.original, 2), 1e-300)
        if s[-1] > threshold * scale:
            return None
        return vh[-1].conj(), u[:, -1]


def hermitize(H, E: complex = 0.0) -> HermitizedPair:
    """Map ``H`` at reference energy ``E`` onto a chiral Hermitian matrix of twice the size."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    n = H.shape[0]
    shifted = H - E * np.eye(n)
    doubled = np.zeros((2 * n, 2 * n), dtype=complex)
    doubled[:n, n:] = shifted
    doubled[n:, :n] = shifted.conj().T
    chirality = np.diag(np.concatenate([np.ones(n), -np.ones(n)])).astype(complex)
    return HermitizedPair(H, complex(E), doubled, chirality)


def compose(first: SymmetryOp, second: SymmetryOp):
    """Symmetry obtained by applying ``second`` and then ``first``.

    Returns ``(kind, unitary)``; ``kind`` is ``None`` for the combinations that
    give pseudo-Hermiticity or a commuting unitary, which lie outside the table.
    """
    op_a, s_a = RELATIONS[first.kind]
    op_b, s_b = RELATIONS[second.kind]
    inner = second.unitary.conj() if op_a in ("conj", "transpose") else second.unitary
    unitary = first.unitary @ inner
    op = _COMPOSE[(op_a, op_b)]
    sign = s_a * s_b
    for kind, (rel, rel_sign) in RELATIONS.items():
        if rel == op and rel_sign == sign:
            return kind, unitary
    return None, unitary


_GROUP = ("identity", "conj", "transpose", "dagger")
# conj and transpose generate a Klein four-group with dagger = conj∘transpose
_COMPOSE = {}
for _a in _GROUP:
    for _b in _GROUP:
        bits_a = (_a in ("conj", "dagger"), _a in ("transpose", "dagger"))
        bits_b = (_b in ("conj", "dagger"), _b in ("transpose", "dagger"))
        bits = (bits_a[0] != bits_b[0], bits_a[1] != bits_b[1])
        _COMPOSE[(_a, _b)] = {(False, False): "identity", (True, False): "conj",
                              (False, True): "transpose", (True, True): "dagger"}[bits]


def project_onto(H: np.ndarray, ops, sweeps: int = 4) -> np.ndarray:
    """Symmetrize ``H`` so that every relation in ``ops`` holds.

    Each relation defines an involution; averaging ``H`` with its image is a
    projection. For commuting involutions a few sweeps reach the common fixed space.
    """
    out = np.asarray(H, dtype=complex)
    for _ in range(sweeps):
        for op in ops:
            out = 0.5 * (out + op.target(op.transform(out)))
    return out
