"""The 38-fold non-Hermitian symmetry classes and their Hermitian counterparts."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .ops import ANTIUNITARY, SymmetryOp, compose, verify

ENERGY_KINDS = ("generic-complex", "real", "imaginary", "zero")
HERMITIAN_CLASSES = ("A", "AI", "AII", "AIII", "BDI", "CII", "D", "DIII", "C", "CI")

# database column -> symmetry kind
COLUMN_KIND = {"T+": "TRS", "P-": "PHS", "P+": "TRS†", "T-": "PHS†"}
KIND_COLUMN = {v: k for k, v in COLUMN_KIND.items()}



@dataclass(frozen=True)
class ClassRecord:
    """One row of the non-Hermitian class table.

    ``signs`` maps each antiunitary kind present to its sign; ``chiral`` and
    ``sublattice`` flag CS and SLS; ``cs_commutation`` is ``+1``/``-1`` when both
    CS and SLS are present.
    """

    name: str
    n_antiunitary: int
    signs: dict
    chiral: bool
    sublattice: bool
    cs_commutation: int | None
    hermitian_counterpart: str
    remark: str

    @property
    def kinds(self) -> set:
        out = set(self.signs)
        if self.chiral:
            out.add("CS")
        if self.sublattice:
            out.add("SLS")
        return out

    @property
    def energy_kind(self) -> str:
        return energy_kind_for(self.kinds)

    @property
    def even_dimension(self) -> int:
        """Required divisor of the Hermitian matrix dimension (1, 2 or 4)."""
        return {"": 1, "*": 2, "**": 4}[self.remark]

    def signature(self) -> tuple:
        return _signature(self.signs, self.chiral, self.sublattice, self.cs_commutation)

    def as_row(self) -> dict:
        row = {"name": self.name, "N": self.n_antiunitary}
        for col, kind in COLUMN_KIND.items():
            row[col] = self.signs.get(kind)
        row["C"] = self.chiral
        row["S"] = self.sublattice
        row["[C,S]"] = {1: "+", -1: "-", None: None}[self.cs_commutation]
        row["HSC"] = self.hermitian_counterpart
        row["remark"] = self.remark
        return row


@dataclass(frozen=True)
class SymmetryClassTag:
    """Class label together with the kind of reference energy preserving it."""

    name: str
    energy_kind: str

    def __post_init__(self):
        name = canonical_name(self.name)
        object.__setattr__(self, "name", name)
        if self.energy_kind not in ENERGY_KINDS:
            raise ValueError(f"unknown energy kind {self.energy_kind!r}")
        expected = class_record(name).energy_kind
        if self.energy_kind != expected:
            raise ValueError(f"class {name} is preserved at {expected} energies, not {self.energy_kind}")

    @classmethod
    def of(cls, name: str) -> "SymmetryClassTag":
        record = class_record(name)
        return cls(record.name, record.energy_kind)

    def preserved_at(self, E: complex) -> bool:
        return energy_matches(self.energy_kind, E)


def _signature(signs, chiral, sublattice, commutation):
    return (tuple(signs.get(k) for k in ANTIUNITARY), bool(chiral), bool(sublattice),
            commutation if (chiral and sublattice) else None)


def energy_kind_for(kinds) -> str:
    """Set of reference energies that preserves all listed symmetry kinds."""
    kinds = set(kinds)
    needs_real = "TRS" in kinds
    needs_imag = bool(kinds & {"PHS†", "CS"})
    if kinds & {"PHS", "SLS"} or (needs_real and needs_imag):
        return "zero"
    if needs_real:
        return "real"
    if needs_imag:
        return "imaginary"
    return "generic-complex"


def energy_matches(kind: str, E: complex, tol: float = 1e-12) -> bool:
    E = complex(E)
    scale = tol * max(1.0, abs(E))
    real = abs(E.imag) <= scale
    imag = abs(E.real) <= scale
    return {"generic-complex": True, "real": real, "imaginary": imag,
            "zero": real and imag}[kind]


def canonical_name(name: str) -> str:
    """Normalize class labels such as ``AII^dagger`` or ``BDI + S_{-+}``."""
    key = re.sub(r"\\?\^?(dagger|dag|†)", "†", name.strip(), flags=re.IGNORECASE)
    key = re.sub(r"[\s$_{}^]|\\mathcal", "", key).upper()
    if key in _database():
        return key
    raise KeyError(f"unknown symmetry class {name!r}")


@lru_cache(maxsize=None)
def _database() -> dict:
    text = resources.files("andloc.symmetry").joinpath("classes.json").read_text(encoding="utf-8")
    table = json.loads(text)
    cols = table["columns"]
    out = {}
    for raw in table["rows"]:
        row = dict(zip(cols, raw))
        signs = {COLUMN_KIND[c]: row[c] for c in COLUMN_KIND if row[c] is not None}
        commutation = {"+": 1, "-": -1, None: None}[row["[C,S]"]]
        out[row["name"]] = ClassRecord(row["name"], row["N"], signs, row["C"], row["S"],
                                       commutation, row["HSC"], row["remark"])
    return out


def all_classes() -> list:
    """All 38 class records in table order."""
    return list(_database().values())


def class_record(name: str) -> ClassRecord:
    db = _database()
    if name in db:
        return db[name]
    return db[canonical_name(name)]


def export_table() -> dict:
    """Machine-readable class table, one dict per row with the table's columns."""
    return {"columns": ["name", "N", "T+", "P-", "P+", "T-", "C", "S", "[C,S]", "HSC", "remark"],
            "rows": [rec.as_row() for rec in all_classes()]}


def inverse_table() -> dict:
    """Hermitian class -> list of non-Hermitian classes realizing it."""
    out = {h: [] for h in HERMITIAN_CLASSES}
    for rec in all_classes():
        out[rec.hermitian_counterpart].append(rec.name)
    return out


def lookup(signs: dict, chiral: bool, sublattice: bool, commutation: int | None = None) -> list:
    """Class records matching a symmetry signature (commutation may be left open)."""
    out = []
    for rec in all_classes():
        if rec.signs != signs or rec.chiral != chiral or rec.sublattice != sublattice:
            continue
        if commutation is not None and rec.cs_commutation is not None \
                and rec.cs_commutation != commutation:
            continue
        out.append(rec)
    return out


def reduce_class(name: str, E: complex, tol: float = 1e-12) -> ClassRecord:
    """Class of the symmetries of ``name`` that survive at reference energy ``E``.

    TRS needs real E, PHS and SLS need E = 0, PHS† and CS need imaginary E;
    TRS† survives at any E. PHS† alone is identified with TRS of the same sign
    (multiplying H by i exchanges the two). The correspondence for reduced
    classes is conjectural.
    """
    rec = class_record(name)
    E = complex(E)
    scale = tol * max(1.0, abs(E))
    is_real = abs(E.imag) <= scale
    is_imag = abs(E.real) <= scale
    keep = {"TRS": is_real, "PHS": is_real and is_imag, "TRS†": True,
            "PHS†": is_imag}
    signs = {k: s for k, s in rec.signs.items() if keep[k]}
    chiral = rec.chiral and is_imag
    sublattice = rec.sublattice and is_real and is_imag
    if not chiral and not sublattice and set(signs) == {"PHS†"}:
        signs = {"TRS": signs["PHS†"]}
    if "TRS" in signs and "TRS†" in signs and not chiral:
        raise ValueError(f"class {rec.name} at E={E} keeps TRS and TRS† only "
                         "(pseudo-Hermitian), which has no entry in the table")
    matches = lookup(signs, chiral, sublattice, rec.cs_commutation)
    if len(matches) != 1:
        raise ValueError(f"class {rec.name} at E={E} does not reduce to a unique class")
    return matches[0]


def counterpart(cls, E: complex | None = None) -> str:
    """Hermitian symmetry class realizing the transitions of a non-Hermitian class.

    Parameters
    ----------
    cls : str or SymmetryClassTag
    E : complex, optional
        Reference energy. When it breaks some symmetries, the class is first
        reduced (see :func:`reduce_class`).
    """
    name = cls.name if isinstance(cls, SymmetryClassTag) else cls
    rec = class_record(name)
    if E is None or energy_matches(rec.energy_kind, E):
        return rec.hermitian_counterpart
    return reduce_class(rec.name, E).hermitian_counterpart


def _normalize_involution(u: np.ndarray) -> np.ndarray | None:
    """Rescale ``u`` so that ``u @ u = 1`` when ``u @ u`` is a multiple of 1."""
    sq = u @ u
    c = sq[0, 0]
    n = u.shape[0]
    if abs(c) < 1e-12 or np.linalg.norm(sq - c * np.eye(n)) > 1e-10 * np.sqrt(n):
        return None
    return u / np.sqrt(c)


def close_symmetries(ops, H=None, tol: float = 1e-10) -> dict:
    """Complete a set of symmetry operations under composition.

    Returns a dict kind -> SymmetryOp. Products giving pseudo-Hermiticity or
    commuting unitaries are dropped. When ``H`` is given, derived operations are
    re-verified against it.
    """
    found = {}
    for op in ops:
        found.setdefault(op.kind, op)
    changed = True
    while changed:
        changed = False
        current = list(found.values())
        for a in current:
            for b in current:
                if a is b:
                    continue
                kind, u = compose(a, b)
                if kind is None or kind in found:
                    continue
                if kind in ("CS", "SLS"):
                    u = _normalize_involution(u)
                    if u is None:
                        continue
                try:
                    derived = SymmetryOp(kind, u, tol=1e-9)
                except ValueError:
                    continue
                if H is not None and verify(H, derived) > tol:
                    continue
                found[kind] = derived
                changed = True
    return found


def commutation_sign(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> int | None:
    scale = max(np.linalg.norm(a @ b), 1e-300)
    if np.linalg.norm(a @ b - b @ a) <= tol * scale:
        return 1
    if np.linalg.norm(a @ b + b @ a) <= tol * scale:
        return -1
    return None


def classify(H, candidates=(), tol: float = 1e-10) -> SymmetryClassTag:
    """Finest class consistent with the candidate operations that hold for ``H``.

    Operations with residual at or above ``tol`` are discarded. The remaining
    set is closed under composition; the CS/SLS commutation flag is computed
    from the unitaries when both are present.

    Raises
    ------
    ValueError
        When the symmetry content matches no class or more than one.
    """
    H = np.asarray(H, dtype=complex)
    holding = [op for op in candidates if verify(H, op) < tol]
    found = close_symmetries(holding, H, tol)
    signs = {k: found[k].sign for k in ANTIUNITARY if k in found}
    chiral = "CS" in found
    sublattice = "SLS" in found
    commutation = None
    if chiral and sublattice:
        commutation = commutation_sign(found["CS"].unitary, found["SLS"].unitary)
    if "TRS" in signs and "TRS†" in signs and not chiral:
        raise ValueError("TRS with TRS† and no CS is pseudo-Hermitian; not in the table")
    matches = lookup(signs, chiral, sublattice, commutation)
    if not matches:
        raise ValueError(f"no class matches symmetries {sorted(found)} with signs {signs}")
    if len(matches) > 1:
        names = ", ".join(m.name for m in matches)
        raise ValueError(f"ambiguous classification: {names}")
    return SymmetryClassTag.of(matches[0].name)
