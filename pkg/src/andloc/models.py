"""Disordered O(1) and SU(2) tight-binding models on square and cubic lattices.

A model realization is generated lazily, slice by slice, from counter-based
random streams. Slice ``n`` holds the transverse cross-section at longitudinal
coordinate ``n``; its data are drawn in chunks of :data:`CHUNK_SLICES` slices,
each chunk from its own ``PCG64`` generator seeded by
``SeedSequence([seed, stream, chunk])``. The realization is therefore a pure
function of the seed, independent of the order in which slices are requested.

Matrix ordering is site-major and spin-minor; sites within a slice are indexed
``m = x + L*y``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .symmetry import SymmetryClassTag, SymmetryOp, tiled

CHUNK_SLICES = 256
DENSE_CAP = 8192

# stream identifiers of the random generator
_STREAM_SITE = 1
_STREAM_TRANSVERSE = 2
_STREAM_LONGITUDINAL = 3

SU2_CLASSES = ("AII", "AII†", "CII†", "DIII")


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of a strip or a closed lattice.

    Parameters
    ----------
    dim : int
        Spatial dimension (1, 2 or 3). One dimension is the chain used for
        analytic checks.
    L : int
        Transverse edge length (sites).
    L_z : int, optional
        Number of slices. For the closed geometry it defaults to ``L``.
    boundary : {"periodic", "open"}
        Transverse boundary condition.
    geometry : {"transfer", "closed"}
        ``closed`` wraps the longitudinal direction periodically as well.
    """

    dim: int
    L: int
    L_z: int | None = None
    boundary: str = "periodic"
    geometry: str = "transfer"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.dim > 1 and self.L < 2:
            raise ValueError("transverse size L must be at least 2")
        if self.L < 1:
            raise ValueError("L must be positive")
        if self.boundary not in ("periodic", "open"):
            raise ValueError("boundary must be 'periodic' or 'open'")
        if self.geometry not in ("transfer", "closed"):
            raise ValueError("geometry must be 'transfer' or 'closed'")
        if self.L_z is None:
            object.__setattr__(self, "L_z", self.L if self.geometry == "closed" else 1)
        if self.L_z < 1:
            raise ValueError("L_z must be at least 1")

    @property
    def sites_per_slice(self) -> int:
        return self.L ** (self.dim - 1)

    def slice_dim(self, n_orb: int) -> int:
        return self.sites_per_slice * n_orb

    @property
    def n_sites(self) -> int:
        return self.sites_per_slice * self.L_z

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Forward transverse neighbour of each slice site, ``-1`` across an open edge.

        Shape ``(sites_per_slice, dim - 1)``.
        """
        m_count = self.sites_per_slice
        d_t = self.dim - 1
        out = np.full((m_count, d_t), -1, dtype=np.int64)
        if d_t == 0:
            return out
        coords = np.array(np.unravel_index(np.arange(m_count), (self.L,) * d_t, order="F")).T
        for k in range(d_t):
            shifted = coords.copy()
            shifted[:, k] += 1
            inside = shifted[:, k] < self.L
            shifted[:, k] %= self.L
            idx = np.ravel_multi_index(shifted.T, (self.L,) * d_t, order="F")
            if self.boundary == "periodic":
                out[:, k] = idx
            else:
                out[inside, k] = idx[inside]
        return out

    @cached_property
    def site_parity(self) -> np.ndarray:
        """``(-1)^(x+y)`` of each slice site (bipartite sublattice sign)."""
        m_count = self.sites_per_slice
        if self.dim == 1:
            return np.ones(1)
        coords = np.unravel_index(np.arange(m_count), (self.L,) * (self.dim - 1), order="F")
        return np.where(np.sum(coords, axis=0) % 2 == 0, 1.0, -1.0)

    def is_bipartite(self) -> bool:
        transverse_ok = self.dim == 1 or self.boundary == "open" or self.L % 2 == 0
        longitudinal_ok = self.geometry == "transfer" or self.L_z % 2 == 0
        return transverse_ok and longitudinal_ok


@dataclass(frozen=True)
class DisorderSpec:
    """Widths of the uniform on-site distributions.

    ``W`` is used by the O(1) model; ``W_r`` and ``W_i`` by the SU(2) model.
    Each width is the full width of a distribution centred at zero.
    """

    W: float = 0.0
    W_r: float = 0.0
    W_i: float = 0.0

    def __post_init__(self):
        for name in ("W", "W_r", "W_i"):
            value = float(getattr(self, name))
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class SliceBlock:
    """Random data of consecutive slices.

    Attributes
    ----------
    onsite : (S, N) complex
        Diagonal of each slice Hamiltonian.
    offdiag : (S, nnz) complex
        Values of the intra-slice hoppings, aligned with ``ModelInstance.pattern``.
    forward, backward : (S, M, o, o) complex
        Longitudinal hopping blocks ``<n|H|n+1>`` and ``<n+1|H|n>`` per site.
    """

    start: int
    onsite: np.ndarray
    offdiag: np.ndarray
    forward: np.ndarray
    backward: np.ndarray

    def __len__(self):
        return self.onsite.shape[0]


def su2_matrices(alpha, beta, gamma) -> np.ndarray:
    """SU(2) matrices ``[[e^{iα}cosβ, e^{iγ}sinβ], [-e^{-iγ}sinβ, e^{-iα}cosβ]]``."""
    c, s = np.cos(beta), np.sin(beta)
    out = np.empty(np.shape(alpha) + (2, 2), dtype=complex)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cg, sg = np.cos(gamma), np.sin(gamma)
    out.real[..., 0, 0] = ca * c
    out.imag[..., 0, 0] = sa * c
    out.real[..., 0, 1] = cg * s
    out.imag[..., 0, 1] = sg * s
    out.real[..., 1, 0] = -cg * s
    out.imag[..., 1, 0] = sg * s
    out.real[..., 1, 1] = ca * c
    out.imag[..., 1, 1] = -sa * c
    return out


def sample_beta(rng: np.random.Generator, size) -> np.ndarray:
    """Angles on [0, π/2] with density sin(2β), by inverse transform."""
    return 0.5 * np.arccos(1.0 - 2.0 * rng.random(size))


def _reverse_hopping(forward: np.ndarray, class_name: str) -> np.ndarray:
    """Hopping ``R(j, i)`` from ``R(i, j)`` under the reciprocity rule of the class."""
    dagger = np.conj(np.swapaxes(forward, -1, -2))
    if class_name == "DIII":
        flip = np.array([1.0, -1.0])
        return -dagger * flip[:, None] * flip[None, :]
    return dagger


def _generator(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, chunk])))


@dataclass(frozen=True)
class ModelInstance:
    """One disorder realization, generated lazily from its seed.

    Parameters
    ----------
    lattice, disorder : LatticeSpec, DisorderSpec
    class_tag : SymmetryClassTag
    seed : int
    model : {"o1", "su2", "clean"}
    hopping : float
        Hopping amplitude of the clean model.
    gauge_phase : float
        Longitudinal hoppings are multiplied by ``e^{iθ}`` forward and
        ``e^{-iθ}`` backward (a gauge transformation).
    """

    lattice: LatticeSpec
    disorder: DisorderSpec
    class_tag: SymmetryClassTag
    seed: int
    model: str
    hopping: float = 1.0
    gauge_phase: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @property
    def n_orb(self) -> int:
        return 2 if self.model == "su2" else 1

    @property
    def slice_dim(self) -> int:
        return self.lattice.slice_dim(self.n_orb)

    def with_gauge_phase(self, theta: float) -> "ModelInstance":
        return dataclasses.replace(self, gauge_phase=float(theta), _cache={})

    @cached_property
    def pattern(self):
        """Intra-slice sparsity pattern ``(rows, cols, bond, direction, a, b, reverse)``.

        Entries are sorted by row; ``reverse`` marks the ``<j|H|i>`` half of a bond.
        """
        lat = self.lattice
        o = self.n_orb
        nb = lat.neighbors
        m_idx, k_idx = np.nonzero(nb >= 0)
        j_idx = nb[m_idx, k_idx]
        a, b = np.meshgrid(np.arange(o), np.arange(o), indexing="ij")
        a, b = a.ravel(), b.ravel()
        n_bonds = m_idx.size
        m_e = np.repeat(m_idx, o * o)
        k_e = np.repeat(k_idx, o * o)
        j_e = np.repeat(j_idx, o * o)
        a_e = np.tile(a, n_bonds)
        b_e = np.tile(b, n_bonds)
        rows = np.r_[m_e * o + a_e, j_e * o + a_e]
        cols = np.r_[j_e * o + b_e, m_e * o + b_e]
        site = np.r_[m_e, m_e]
        direction = np.r_[k_e, k_e]
        aa = np.r_[a_e, a_e]
        bb = np.r_[b_e, b_e]
        reverse = np.r_[np.zeros(m_e.size, bool), np.ones(m_e.size, bool)]
        order = np.lexsort((cols, rows))
        return tuple(arr[order] for arr in (rows, cols, site, direction, aa, bb, reverse))

    @cached_property
    def indptr(self) -> np.ndarray:
        rows = self.pattern[0]
        return np.searchsorted(rows, np.arange(self.slice_dim + 1)).astype(np.int64)

    # ------------------------------------------------------------------ sampling
    def _chunk(self, c: int) -> SliceBlock:
        cache = self._cache
        if c in cache:
            return cache[c]
        block = self._generate_chunk(c)
        if len(cache) >= 4:
            cache.pop(next(iter(cache)))
        cache[c] = block
        return block

    def _generate_chunk(self, c: int) -> SliceBlock:
        lat = self.lattice
        S = CHUNK_SLICES
        M = lat.sites_per_slice
        d_t = lat.dim - 1
        o = self.n_orb
        if self.model == "clean":
            onsite = np.zeros((S, M * o), dtype=complex)
            t = complex(self.hopping)
            trans_f = np.full((S, M, d_t, 1, 1), t)
            trans_b = trans_f.copy()
            long_f = np.full((S, M, 1, 1), t)
            long_b = long_f.copy()
        elif self.model == "o1":
            rng = _generator(self.seed, _STREAM_SITE, c)
            W = self.disorder.W
            onsite = (W * (rng.random((S, M)) - 0.5)).astype(complex)
            rng = _generator(self.seed, _STREAM_TRANSVERSE, c)
            signs = 1.0 - 2.0 * rng.integers(0, 2, size=(2, S, M, d_t), dtype=np.int8)
            trans_f = signs[0].reshape(S, M, d_t, 1, 1).astype(complex)
            trans_b = signs[1].reshape(S, M, d_t, 1, 1).astype(complex)
            rng = _generator(self.seed, _STREAM_LONGITUDINAL, c)
            signs = 1.0 - 2.0 * rng.integers(0, 2, size=(2, S, M), dtype=np.int8)
            long_f = signs[0].reshape(S, M, 1, 1).astype(complex)
            long_b = signs[1].reshape(S, M, 1, 1).astype(complex)
        else:
            name = self.class_tag.name
            rng = _generator(self.seed, _STREAM_SITE, c)
            omega_r = self.disorder.W_r * (rng.random((S, M)) - 0.5)
            omega_i = self.disorder.W_i * (rng.random((S, M)) - 0.5)
            up = omega_r + 1j * omega_i
            down = {"AII": np.conj(up), "DIII": -up}.get(name, up)
            onsite = np.stack([up, down], axis=-1).reshape(S, M * 2)
            rng = _generator(self.seed, _STREAM_TRANSVERSE, c)
            shape = (S, M, d_t)
            trans_f = su2_matrices(2 * np.pi * rng.random(shape), sample_beta(rng, shape),
                                   2 * np.pi * rng.random(shape))
            trans_b = _reverse_hopping(trans_f, name)
            rng = _generator(self.seed, _STREAM_LONGITUDINAL, c)
            shape = (S, M)
            long_f = su2_matrices(2 * np.pi * rng.random(shape), sample_beta(rng, shape),
                                  2 * np.pi * rng.random(shape))
            long_b = _reverse_hopping(long_f, name)
        rows, cols, site, direction, aa, bb, reverse = self.pattern
        offdiag = np.where(reverse, trans_b[:, site, direction, aa, bb],
                           trans_f[:, site, direction, aa, bb])
        if self.gauge_phase:
            phase = np.exp(1j * self.gauge_phase)
            long_f = long_f * phase
            long_b = long_b * np.conj(phase)
        return SliceBlock(c * S, onsite, offdiag, long_f, long_b)

    def slices(self, start: int, count: int) -> SliceBlock:
        """Data of slices ``start .. start + count - 1``."""
        if start < 0 or count < 0:
            raise ValueError("slice indices must be non-negative")
        first, last = start // CHUNK_SLICES, (start + count - 1) // CHUNK_SLICES
        parts = [self._chunk(c) for c in range(first, last + 1)] if count else []
        if len(parts) == 1:
            p = parts[0]
            lo = start - p.start
            sel = slice(lo, lo + count)
            return SliceBlock(start, p.onsite[sel], p.offdiag[sel], p.forward[sel], p.backward[sel])
        lo = start - first * CHUNK_SLICES
        sel = slice(lo, lo + count)

        def cat(name):
            return np.concatenate([getattr(p, name) for p in parts])[sel]

        if not parts:
            empty = self._chunk(0)
            return SliceBlock(start, empty.onsite[:0], empty.offdiag[:0], empty.forward[:0],
                              empty.backward[:0])
        return SliceBlock(start, cat("onsite"), cat("offdiag"), cat("forward"), cat("backward"))

    # ------------------------------------------------------------ dense views
    def slice_hamiltonian(self, n: int) -> np.ndarray:
        """Dense intra-slice Hamiltonian ``H_n``."""
        blk = self.slices(n, 1)
        H = np.diag(blk.onsite[0])
        rows, cols = self.pattern[:2]
        np.add.at(H, (rows, cols), blk.offdiag[0])
        return H

    def _block_diag(self, blocks: np.ndarray) -> np.ndarray:
        M, o = blocks.shape[0], blocks.shape[1]
        out = np.zeros((M * o, M * o), dtype=complex)
        for m in range(M):
            out[m * o:(m + 1) * o, m * o:(m + 1) * o] = blocks[m]
        return out

    def hopping_forward(self, n: int) -> np.ndarray:
        """Dense ``<n|H|n+1>``."""
        return self._block_diag(self.slices(n, 1).forward[0])

    def hopping_backward(self, n: int) -> np.ndarray:
        """Dense ``<n+1|H|n>``."""
        return self._block_diag(self.slices(n, 1).backward[0])

    def site_energies(self, count: int | None = None) -> np.ndarray:
        count = self.lattice.L_z if count is None else count
        return self.slices(0, count).onsite

    def assemble(self, start: int = 0, count: int | None = None, periodic: bool | None = None,
                 sparse: bool = False, cap: int = DENSE_CAP):
        """Hamiltonian of ``count`` consecutive slices.

        With ``periodic`` the last slice couples back to the first through the
        longitudinal hopping of the last slice.
        """
        count = self.lattice.L_z if count is None else int(count)
        if periodic is None:
            periodic = self.lattice.geometry == "closed"
        N = self.slice_dim
        total = N * count
        if not sparse and total > cap:
            raise ValueError(f"dimension {total} exceeds the dense cap {cap}")
        blk = self.slices(start, count)
        rows, cols = self.pattern[:2]
        o = self.n_orb
        M = self.lattice.sites_per_slice
        offsets = (np.arange(count) * N)[:, None]
        r_list = [np.arange(total), (offsets + rows).ravel()]
        c_list = [np.arange(total), (offsets + cols).ravel()]
        v_list = [blk.onsite.ravel(), blk.offdiag.ravel()]
        a, b = np.meshgrid(np.arange(o), np.arange(o), indexing="ij")
        loc_r = (np.arange(M)[:, None, None] * o + a).ravel()
        loc_c = (np.arange(M)[:, None, None] * o + b).ravel()
        n_bonds = count if periodic else count - 1
        for n in range(n_bonds):
            here, there = n * N, ((n + 1) % count) * N
            r_list += [here + loc_r, there + loc_r]
            c_list += [there + loc_c, here + loc_c]
            v_list += [blk.forward[n].ravel(), blk.backward[n].ravel()]
        mat = sp.coo_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                            shape=(total, total)).tocsr()
        mat.sum_duplicates()
        return mat if sparse else mat.toarray()

    def symmetry_ops(self, count: int | None = None) -> list:
        """Defining symmetry operations of the class on an assembled matrix of ``count`` slices."""
        count = self.lattice.L_z if count is None else count
        sites = self.lattice.sites_per_slice * count
        name = self.class_tag.name
        if self.model in ("o1", "clean"):
            return [SymmetryOp("TRS", np.eye(sites))]
        sy = tiled("y", sites)
        if name == "AII":
            return [SymmetryOp("TRS", sy)]
        if name == "AII†":
            return [SymmetryOp("TRS†", sy)]
        if name == "DIII":
            return [SymmetryOp("TRS", sy), SymmetryOp("PHS", tiled("x", sites))]
        parity = np.tile(self.lattice.site_parity, count)
        parity = parity * np.repeat(np.where(np.arange(count) % 2 == 0, 1.0, -1.0),
                                    self.lattice.sites_per_slice)
        return [SymmetryOp("TRS†", sy), SymmetryOp("PHS†", np.kron(np.diag(parity), tiled("y", 1)))]


def _check_lattice(lattice: LatticeSpec):
    if not isinstance(lattice, LatticeSpec):
        raise TypeError("lattice must be a LatticeSpec")


def build_o1(lattice: LatticeSpec, W: float, seed: int) -> ModelInstance:
    """O(1) model: uniform on-site energies and independent ±1 directed hoppings."""
    _check_lattice(lattice)
    return ModelInstance(lattice, DisorderSpec(W=W), SymmetryClassTag.of("AI"), int(seed), "o1")


def build_su2(lattice: LatticeSpec, disorder: DisorderSpec, cls, seed: int) -> ModelInstance:
    """SU(2) model in class AII, AII†, CII† or DIII.

    Hoppings are random SU(2) matrices with Haar-distributed angles; the
    reverse hopping is ``R(i,j)†`` (AII, AII†, CII†) or ``-σ_z R(i,j)† σ_z``
    (DIII). Spin-up on-site energies are ``ω_r + iω_i``; spin-down ones are the
    conjugate (AII), equal (AII†, CII†) or opposite (DIII).
    """
    _check_lattice(lattice)
    tag = cls if isinstance(cls, SymmetryClassTag) else SymmetryClassTag.of(cls)
    if tag.name not in SU2_CLASSES:
        raise ValueError(f"SU(2) model supports classes {SU2_CLASSES}, not {tag.name}")
    if tag.name in ("CII†", "DIII"):
        if disorder.W_r != 0:
            raise ValueError(f"class {tag.name} requires W_r = 0")
        if not disorder.W_i > 0:
            raise ValueError(f"class {tag.name} requires W_i > 0")
    if tag.name == "CII†" and not lattice.is_bipartite():
        raise ValueError("class CII† needs a bipartite lattice (even L with periodic boundaries)")
    return ModelInstance(lattice, disorder, tag, int(seed), "su2")


def build_clean(lattice: LatticeSpec, hopping: float = 1.0) -> ModelInstance:
    """Disorder-free lattice with uniform real hopping (analytic reference)."""
    _check_lattice(lattice)
    return ModelInstance(lattice, DisorderSpec(), SymmetryClassTag.of("AI"), 0, "clean",
                         hopping=float(hopping))


def assemble_full(model: ModelInstance, sparse: bool = False, cap: int = DENSE_CAP):
    """Full Hamiltonian of a closed-periodic model (periodic in every direction)."""
    if model.lattice.geometry != "closed":
        raise ValueError("assemble_full needs the closed geometry; use ModelInstance.assemble for strips")
    return model.assemble(0, model.lattice.L_z, periodic=True, sparse=sparse, cap=cap)


@dataclass(frozen=True)
class ModelFamily:
    """A model at fixed class, dimension and energy-independent settings, indexed by (W, L).

    For the SU(2) classes the disorder width ``W`` is mapped to
    ``W_r = W_i = W`` (AII, AII†) or ``W_r = 0, W_i = W`` (CII†, DIII).
    """

    cls: str
    dim: int
    boundary: str = "periodic"

    def __post_init__(self):
        tag = SymmetryClassTag.of(self.cls)
        if tag.name != "AI" and tag.name not in SU2_CLASSES:
            raise ValueError(f"no lattice model for class {self.cls}")
        object.__setattr__(self, "cls", tag.name)

    def disorder(self, W: float) -> DisorderSpec:
        if self.cls == "AI":
            return DisorderSpec(W=W)
        if self.cls in ("CII†", "DIII"):
            return DisorderSpec(W_i=W)
        return DisorderSpec(W_r=W, W_i=W)

    def build(self, W: float, L: int, seed: int, geometry: str = "transfer",
              L_z: int | None = None) -> ModelInstance:
        lattice = LatticeSpec(self.dim, L, L_z, self.boundary, geometry)
        if self.cls == "AI":
            return build_o1(lattice, W, seed)
        return build_su2(lattice, self.disorder(W), self.cls, seed)

