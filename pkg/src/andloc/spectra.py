"""Dense spectra, density of states, participation ratios and random-matrix ensembles."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment, minimize
from scipy.special import gammainc, gammaln

from .models import DENSE_CAP, DisorderSpec, LatticeSpec, assemble_full, build_o1, build_su2

REAL_THRESHOLD = 1e-10


@dataclass
class SpectrumResult:
    """Eigenvalues with optional right eigenvectors (columns, unit 2-norm) and IPRs."""

    eigenvalues: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)
    ipr: np.ndarray | None = field(default=None, repr=False)
    source: str = ""
    max_residual: float = 0.0
    trace_error: float = 0.0

    def __len__(self):
        return self.eigenvalues.size

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else 0.0

    def real_count(self, threshold: float = REAL_THRESHOLD) -> int:
        """Eigenvalues with ``|Im E| < threshold × spectral radius``."""
        cut = threshold * max(self.spectral_radius(), 1e-300)
        return int(np.sum(np.abs(self.eigenvalues.imag) < cut))


def diagonalize(H, want_vectors: bool = False, cap: int = DENSE_CAP, source: str = "",
                check: bool = True) -> SpectrumResult:
    """Full spectrum of a dense matrix by the Schur-based LAPACK eigensolver.

    With ``want_vectors`` the right eigenvectors are normalized and their IPRs
    computed; each must satisfy ``‖Hψ − Eψ‖ < 1e-8 ‖H‖``.

    Raises
    ------
    ValueError
        When the dimension exceeds ``cap``.
    numpy.linalg.LinAlgError
        When the eigensolver fails or an eigenpair misses the residual bound.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    n = H.shape[0]
    if n > cap:
        raise ValueError(f"dimension {n} exceeds the dense cap {cap}")
    if want_vectors:
        vals, vecs = scipy.linalg.eig(H, check_finite=True)
        vecs = vecs / np.linalg.norm(vecs, axis=0)[None, :]
    else:
        vals = scipy.linalg.eigvals(H, check_finite=True)
        vecs = None
    scale = max(np.linalg.norm(H, 2) if n <= 2048 else np.linalg.norm(H), 1e-300)
    trace_error = abs(vals.sum() - np.trace(H)) / max(scale * n, 1e-300) if n else 0.0
    result = SpectrumResult(np.asarray(vals, dtype=complex), vecs, None, source, 0.0, float(trace_error))
    if vecs is not None:
        res = np.linalg.norm(H @ vecs - vecs * vals[None, :], axis=0)
        result.max_residual = float(res.max() / scale) if n else 0.0
        if check and result.max_residual >= 1e-8:
            raise np.linalg.LinAlgError(f"eigenpair residual {result.max_residual:.3g} exceeds 1e-8 ‖H‖")
        result.ipr = ipr(vecs)
    return result


def ipr(psi) -> np.ndarray | float:
    """Inverse participation ratio ``Σ|ψ|⁴ / (Σ|ψ|²)²`` of a vector or of each column."""
    psi = np.asarray(psi)
    p = np.abs(psi) ** 2
    norm = p.sum(axis=0)
    if np.any(norm == 0):
        raise ValueError("zero vector has no participation ratio")
    out = (p ** 2).sum(axis=0) / norm ** 2
    return float(out) if np.ndim(out) == 0 else out


def site_ipr(psi, n_orb: int) -> np.ndarray | float:
    """IPR over lattice sites, summing ``|ψ|²`` over the ``n_orb`` orbitals of each site."""
    psi = np.asarray(psi)
    p = np.abs(psi) ** 2
    p = p.reshape((p.shape[0] // n_orb, n_orb) + p.shape[1:]).sum(axis=1)
    norm = p.sum(axis=0)
    out = (p ** 2).sum(axis=0) / norm ** 2
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------------ histograms
@dataclass
class DosHistogram:
    """Averaged density of states.

    ``mass`` is the fraction of eigenvalues per bin (summing to one);
    ``density`` divides it by the bin width (or area).
    """

    axis: str
    edges: object
    mass: np.ndarray
    density: np.ndarray
    n_samples: int

    def central_bin(self) -> int:
        """Index of the bin containing ``Im E = 0`` (imag-part axis)."""
        return int(np.clip(np.searchsorted(self.edges, 0.0, side="right") - 1, 0, self.mass.size - 1))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.axis == "imag":
            w.writerow(["bin_lo", "bin_hi", "density"])
            for lo, hi, d in zip(self.edges[:-1], self.edges[1:], self.density):
                w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d))])
        else:
            ex, ey = self.edges
            w.writerow(["re_lo", "re_hi", "im_lo", "im_hi", "density"])
            for i in range(ex.size - 1):
                for j in range(ey.size - 1):
                    w.writerow([repr(float(ex[i])), repr(float(ex[i + 1])), repr(float(ey[j])),
                                repr(float(ey[j + 1])), repr(float(self.density[i, j]))])
        return buf.getvalue()


def _fd_width(values: np.ndarray) -> float:
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    if iqr <= 0 or values.size < 2:
        return 0.0
    return 2.0 * iqr / values.size ** (1.0 / 3.0)


def _symmetric_edges(values: np.ndarray, bins) -> np.ndarray:
    """Bin edges symmetric about zero with an odd number of bins (zero is a bin centre)."""
    extent = float(np.max(np.abs(values))) if values.size else 0.0
    if isinstance(bins, (list, tuple, np.ndarray)):
        return np.asarray(bins, dtype=float)
    if bins is None:
        width = _fd_width(values)
        if width <= 0 or extent == 0:
            half = max(extent, 1.0)
            return np.array([-half, half])
        n_half = int(math.ceil(extent / width - 0.5))
    else:
        n_half = max(int(bins) // 2, 0)
        if extent == 0:
            return np.linspace(-1.0, 1.0, 2 * n_half + 2)
        width = extent / (n_half + 0.5)
    width = extent / (n_half + 0.5) if extent > 0 else width
    edges = (np.arange(-n_half, n_half + 2) - 0.5) * width
    edges[0] = min(edges[0], -extent)
    edges[-1] = max(edges[-1], extent)
    return edges


def dos_hist(spectra, axis: str = "imag", bins=None) -> DosHistogram:
    """Density of states averaged over samples.

    Parameters
    ----------
    spectra : sequence of SpectrumResult or arrays of eigenvalues
    axis : {"imag", "complex"}
        Histogram of ``Im E`` or two-dimensional histogram over the complex plane.
    bins : int, sequence or None
        Number of bins or explicit edges; ``None`` uses the Freedman–Diaconis
        width (for ``imag`` the bins are symmetric about zero with one bin
        centred on the real axis).
    """
    samples = [np.asarray(s.eigenvalues if isinstance(s, SpectrumResult) else s, dtype=complex)
               for s in spectra]
    samples = [s for s in samples if s.size]
    if not samples:
        raise ValueError("no eigenvalues to histogram")
    allv = np.concatenate(samples)
    if axis == "imag":
        edges = _symmetric_edges(allv.imag, bins)
        mass = np.zeros(edges.size - 1)
        for s in samples:
            counts, _ = np.histogram(s.imag, bins=edges)
            mass += counts / s.size
        mass /= len(samples)
        density = mass / np.diff(edges)
        return DosHistogram("imag", edges, mass, density, len(samples))
    if axis == "complex":
        if bins is None:
            ex = np.histogram_bin_edges(allv.real, bins="fd")
            ey = _symmetric_edges(allv.imag, None)
        else:
            ex = np.histogram_bin_edges(allv.real, bins=bins)
            ey = np.histogram_bin_edges(allv.imag, bins=bins)
        mass = np.zeros((ex.size - 1, ey.size - 1))
        for s in samples:
            counts, _, _ = np.histogram2d(s.real, s.imag, bins=(ex, ey))
            mass += counts / s.size
        mass /= len(samples)
        density = mass / np.outer(np.diff(ex), np.diff(ey))
        return DosHistogram("complex", (ex, ey), mass, density, len(samples))
    raise ValueError("axis must be 'imag' or 'complex'")


# ------------------------------------------------------------------ ensembles
GINIBRE = ("GinUE", "GinOE", "GinSE")


def ginibre(ensemble: str, N: int, seed) -> np.ndarray:
    """Gaussian non-Hermitian random matrix with unit-variance entries.

    ``GinSE`` returns a ``2N × 2N`` matrix ``[[X, Y], [-Y*, X*]]`` satisfying
    ``σ_y H* σ_y = H`` with ``σ_y ⊗ 1``.
    """
    if ensemble not in GINIBRE:
        raise ValueError(f"ensemble must be one of {GINIBRE}")
    if int(N) < 1:
        raise ValueError("N must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = int(N)

    def complex_gaussian(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)

    if ensemble == "GinUE":
        return complex_gaussian((N, N))
    if ensemble == "GinOE":
        return rng.standard_normal((N, N))
    X, Y = complex_gaussian((N, N)), complex_gaussian((N, N))
    return np.block([[X, Y], [-Y.conj(), X.conj()]])


def expected_real_count_ginoe(N: int) -> float:
    """Large-N mean number of real eigenvalues of an N × N real Gaussian matrix."""
    return math.sqrt(2.0 * N / math.pi)


def conjugation_pairing_residual(eigenvalues) -> float:
    """Largest distance between the spectrum and its complex conjugate, relative to the radius.

    The spectrum and its conjugate are matched by a minimum-cost assignment.
    """
    e = np.asarray(eigenvalues, dtype=complex)
    if e.size == 0:
        return 0.0
    cost = np.abs(e[:, None] - e.conj()[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max() / max(np.abs(e).max(), 1e-300))


# ------------------------------------------------------------------ splittings
@dataclass
class SplittingStats:
    """Displacements ``s = |Im E|`` of perturbed levels from the real axis.

    ``beta`` and ``A`` fit ``P(s) ∝ s^β exp(-A s²)`` on ``s ≤ cutoff``;
    ``exact_real_fraction`` counts levels that stay on the real axis.
    """

    cls: str
    s: np.ndarray = field(repr=False)
    beta: float
    A: float
    cutoff: float
    discarded: int
    exact_real_fraction: float
    edges: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)


def fit_small_s_exponent(s, quantile: float = 0.5):
    """Maximum-likelihood ``(β, A)`` of ``s^β exp(-A s²)`` truncated to ``s ≤`` the given quantile.

    Returns ``(beta, A, cutoff)``.
    """
    s = np.asarray(s, dtype=float)
    s = s[s > 0]
    cutoff = float(np.quantile(s, quantile))
    x = s[s <= cutoff] / cutoff
    n = x.size
    sum_log, sum_sq = np.log(x).sum(), (x ** 2).sum()

    def neg_loglik(params):
        beta, log_a = params
        a = math.exp(log_a)
        k = (beta + 1.0) / 2.0
        if k <= 0:
            return np.inf
        # ∫_0^1 x^β e^{-a x²} dx = a^{-k} Γ(k) P(k, a) / 2
        log_z = -k * log_a + gammaln(k) + math.log(max(gammainc(k, a), 1e-300)) - math.log(2.0)
        return -(beta * sum_log - a * sum_sq - n * log_z)

    best = None
    for beta0 in (0.5, 1.5, 2.5):
        res = minimize(neg_loglik, x0=[beta0, 0.0], method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    beta, log_a = best.x
    return float(beta), float(math.exp(log_a) / cutoff ** 2), cutoff


def _hermitian_base(cls: str, dim: int, L: int, W: float, seed: int) -> tuple:
    """Disordered Hermitian matrix in class AII (SU(2) model) or AI (σ_x-invariant form)."""
    lattice = LatticeSpec(dim, L, boundary="periodic", geometry="closed")
    if cls == "AII":
        model = build_su2(lattice, DisorderSpec(W_r=W, W_i=0.0), "AII", seed)
        H = assemble_full(model)
        return 0.5 * (H + H.conj().T)
    # real symmetric Anderson matrix on two copies of the lattice, rotated so that
    # time reversal acts as σ_x on each site pair
    base = assemble_full(build_o1(lattice, W, seed))
    n = base.shape[0]
    rng = np.random.default_rng([seed, 0xA1])
    sym = np.zeros((2 * n, 2 * n))
    sym[:n, :n] = 0.5 * (base + base.T).real
    sym[n:, n:] = 0.5 * (base + base.T).real
    coupling = rng.uniform(-0.5, 0.5, size=(n, n))
    sym[:n, n:] = 0.5 * (coupling + coupling.T)
    sym[n:, :n] = sym[:n, n:].T
    perm = np.arange(2 * n).reshape(2, n).T.ravel()
    sym = sym[np.ix_(perm, perm)]
    rot = np.kron(np.eye(n), np.array([[1, 1j], [1, -1j]]) / math.sqrt(2.0))
    return rot @ sym @ rot.conj().T


def splitting_stats(cls: str = "AII", samples: int = 200, dim: int = 2, L: int = 6, W: float = 2.0,
                    strength: float = 0.02, seed: int = 0, quantile: float = 0.5,
                    min_count: int = 1000) -> SplittingStats:
    """Statistics of level displacements caused by a weak non-Hermitian potential.

    A disordered Hermitian matrix of class ``cls`` is perturbed by
    ``i diag(w) ⊗ σ_z`` with ``w`` uniform in ``[-strength/2, strength/2]``,
    which preserves time reversal. Perturbed levels are matched to unperturbed
    ones by nearest distance; matches farther than half the local level
    spacing are discarded.

    Raises
    ------
    ValueError
        When fewer than ``min_count`` displacements are collected.
    """
    if cls not in ("AII", "AI"):
        raise ValueError("splitting statistics are defined for classes AII and AI")
    values, discarded, real = [], 0, 0
    total = 0
    for k in range(samples):
        H = _hermitian_base(cls, dim, L, W, int(np.random.SeedSequence([seed, k]).generate_state(1)[0]))
        m = H.shape[0] // 2
        rng = np.random.default_rng([seed, k, 0x5EED])
        w = strength * (rng.random(m) - 0.5)
        V = 1j * np.kron(np.diag(w), np.diag([1.0, -1.0]))
        base = np.linalg.eigvalsh(H)
        if cls == "AII":
            levels = base[::2]
        else:
            levels = base
        pert = scipy.linalg.eigvals(H + V)
        radius = max(np.abs(pert).max(), 1e-300)
        gaps = np.diff(levels)
        local = np.minimum(np.r_[np.inf, gaps], np.r_[gaps, np.inf])
        local = np.where(np.isfinite(local), local, np.nanmax(np.r_[gaps, 1.0]))
        for e in pert:
            if e.imag < -REAL_THRESHOLD * radius:
                continue
            j = int(np.argmin(np.abs(levels - e.real)))
            if abs(e - levels[j]) > 0.5 * local[j]:
                discarded += 1
                continue
            s = abs(e.imag)
            total += 1
            if s < REAL_THRESHOLD * radius:
                real += 1
                s = 0.0
            values.append(s)
    s = np.array(values)
    if s.size < min_count:
        raise ValueError(f"only {s.size} splittings collected; need at least {min_count}")
    positive = s[s > 0]
    beta, A, cutoff = fit_small_s_exponent(positive, quantile) if positive.size > 10 else (math.nan, math.nan, 0.0)
    top = max(float(s.max()), 1e-300)
    edges = np.linspace(0.0, top, 41)
    counts, _ = np.histogram(s, bins=edges)
    density = counts / (s.size * np.diff(edges))
    return SplittingStats(cls, s, beta, A, cutoff, discarded, real / max(total, 1), edges, density)


# ------------------------------------------------------------------ IPR table
def ipr_overlay(spectra) -> np.ndarray:
    """Rows ``(Re E, Im E, 1/I)`` for every eigenvalue of spectra carrying eigenvectors."""
    if isinstance(spectra, SpectrumResult):
        spectra = [spectra]
    rows = []
    for sp in spectra:
        if sp.ipr is None:
            raise ValueError("spectrum has no eigenvectors; diagonalize with want_vectors=True")
        rows.append(np.column_stack([sp.eigenvalues.real, sp.eigenvalues.imag, 1.0 / sp.ipr]))
    return np.vstack(rows) if rows else np.zeros((0, 3))


def spectrum_csv_text(spectra) -> str:
    """CSV with header ``re,im,ipr`` (``ipr`` empty when vectors are absent)."""
    if isinstance(spectra, SpectrumResult):
        spectra = [spectra]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "ipr"])
    for sp in spectra:
        iprs = sp.ipr if sp.ipr is not None else [None] * len(sp)
        for e, i in zip(sp.eigenvalues, iprs):
            w.writerow([repr(float(e.real)), repr(float(e.imag)), "" if i is None else repr(float(i))])
    return buf.getvalue()
