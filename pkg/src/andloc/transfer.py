"""Lyapunov exponents of quasi-one-dimensional transfer-matrix products.

The Schrödinger equation of slice ``n``,
``F_n ψ_{n+1} + H_n ψ_n + B_{n-1} ψ_{n-1} = E ψ_n`` with ``F_n = <n|H|n+1>``
and ``B_{n-1} = <n|H|n-1>``, is iterated on a set of orthonormalized column
vectors. The logarithms of the R diagonal of periodic QR decompositions give
the Lyapunov spectrum.

The compiled kernel is used when available; setting ``ANDLOC_PURE_PYTHON=1``
selects the numpy implementation.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import _fallback
from .dataset import ScalingDataset, ScanRow
from .models import CHUNK_SLICES, ModelFamily, ModelInstance

if os.environ.get("ANDLOC_PURE_PYTHON") == "1":
    _kernel = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _kernel
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _kernel = _fallback
        BACKEND = "python"

_BACKENDS = {"python": _fallback}
if BACKEND == "compiled":
    _BACKENDS["compiled"] = _kernel

MAX_SEGMENTS = 2048


def available_backends() -> list:
    return list(_BACKENDS)


@dataclass(frozen=True)
class TransferConfig:
    """Settings of one transfer-matrix propagation.

    Parameters
    ----------
    energy : complex
    qr_interval : int
        Slices between re-orthogonalizations.
    target_rel_error : float
        Stop once ``se_gamma / gamma_min`` falls below this value.
    max_slices : int
        Cap on the number of slices.
    block_count : int
        Number of contiguous blocks for the error estimate.
    seed : int
        Seed of the random initial vectors.
    min_slices : int
        No convergence test before this many slices.
    spectrum : {"full", "half"}
        ``full`` propagates ``2N`` vectors (the whole spectrum); ``half``
        propagates ``N`` vectors, giving the ``N`` largest exponents.
    warmup : int
        Slices propagated before accumulation starts.
    """

    energy: complex = 0.0
    qr_interval: int = 8
    target_rel_error: float = 1e-3
    max_slices: int = 1_000_000
    block_count: int = 16
    seed: int = 0
    min_slices: int = 10_000
    spectrum: str = "full"
    warmup: int = 0

    def __post_init__(self):
        object.__setattr__(self, "energy", complex(self.energy))
        if self.qr_interval < 1:
            raise ValueError("qr_interval must be at least 1")
        if not 0 < self.target_rel_error < 1:
            raise ValueError("target_rel_error must lie in (0, 1)")
        if self.max_slices < 1:
            raise ValueError("max_slices must be positive")
        if self.block_count < 8:
            raise ValueError("block_count must be at least 8")
        if self.min_slices < 1:
            raise ValueError("min_slices must be positive")
        if self.spectrum not in ("full", "half"):
            raise ValueError("spectrum must be 'full' or 'half'")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["energy"] = [self.energy.real, self.energy.imag]
        return out


@dataclass(frozen=True)
class LyapunovResult:
    """Smallest positive Lyapunov exponent and derived lengths.

    ``exponents`` and ``errors`` hold the whole propagated spectrum in
    decreasing order with block standard errors.
    """

    gamma_min: float
    se_gamma: float
    xi: float
    lambda_: float
    L: int
    slices_used: int
    converged: bool
    exponents: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)
    diagnostic: str = ""

    @property
    def sigma_lambda(self) -> float:
        """Standard error of Λ propagated from that of ``gamma_min``."""
        if not self.gamma_min > 0:
            return math.inf
        return self.lambda_ * self.se_gamma / self.gamma_min


def _inverse_forward(model: ModelInstance, forward: np.ndarray) -> np.ndarray:
    """Inverse of each per-site forward hopping block."""
    if forward.shape[-1] == 1:
        if np.any(np.abs(forward) < 1e-12):
            raise np.linalg.LinAlgError("singular inter-slice hopping")
        return 1.0 / forward
    det = np.linalg.det(forward)
    if np.any(np.abs(det) < 1e-12):
        raise np.linalg.LinAlgError("singular inter-slice hopping")
    if model.model == "su2":
        return np.ascontiguousarray(np.conj(np.swapaxes(forward, -1, -2)) / det[..., None, None])
    return np.linalg.inv(forward)


def slice_transfer(model: ModelInstance, n: int, E: complex) -> np.ndarray:
    """Dense transfer matrix mapping ``(ψ_n, ψ_{n-1})`` to ``(ψ_{n+1}, ψ_n)``.

    Requires ``n ≥ 1`` because the backward hopping of slice ``n - 1`` enters.
    """
    if n < 1:
        raise ValueError("slice index must be at least 1")
    N = model.slice_dim
    blk = model.slices(n - 1, 2)
    finv = model._block_diag(_inverse_forward(model, blk.forward[1]))
    back = model._block_diag(blk.backward[0])
    H = model.slice_hamiltonian(n)
    T = np.zeros((2 * N, 2 * N), dtype=complex)
    T[:N, :N] = finv @ (complex(E) * np.eye(N) - H)
    T[:N, N:] = -finv @ back
    T[N:, :N] = np.eye(N)
    return T


def _initial_state(rows: int, cols: int, seed: int, model_seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, model_seed, 0x7A])))
    raw = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(raw)
    q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
    return np.ascontiguousarray(q)


class _Segments:
    """Per-segment sums of log|R_kk| and slice counts, merged pairwise when too many."""

    def __init__(self, width: int):
        self.logs = []
        self.counts = []
        self.width = width

    def add(self, logs: np.ndarray, count: int):
        self.logs.append(logs.copy())
        self.counts.append(count)
        if len(self.logs) > MAX_SEGMENTS:
            self.logs = [self.logs[i] + self.logs[i + 1] if i + 1 < len(self.logs) else self.logs[i]
                         for i in range(0, len(self.logs), 2)]
            self.counts = [self.counts[i] + self.counts[i + 1] if i + 1 < len(self.counts)
                           else self.counts[i] for i in range(0, len(self.counts), 2)]

    def statistics(self, block_count: int):
        """Mean exponents and their block standard errors."""
        logs = np.array(self.logs)
        counts = np.array(self.counts, dtype=float)
        total = counts.sum()
        mean = logs.sum(axis=0) / total
        if len(counts) < block_count:
            return mean, np.full_like(mean, np.inf)
        groups = np.array_split(np.arange(len(counts)), block_count)
        block = np.array([logs[g].sum(axis=0) / counts[g].sum() for g in groups])
        se = block.std(axis=0, ddof=1) / math.sqrt(block_count)
        return mean, se


def select_gamma_min(exponents: np.ndarray, errors: np.ndarray, margin: float = 3.0):
    """Index of the smallest exponent exceeding ``margin`` times its error, or ``None``."""
    positive = np.nonzero(exponents > margin * errors)[0]
    positive = positive[exponents[positive] > 0]
    if positive.size == 0:
        return None
    return int(positive[np.argmin(exponents[positive])])


def propagate(model: ModelInstance, config: TransferConfig, backend: str | None = None,
              progress=None) -> LyapunovResult:
    """Lyapunov spectrum of the strip ``model`` at ``config.energy``.

    Slices ``1 .. slices_used`` are propagated (slice 0 only supplies the
    backward hopping of the first step).
    """
    kernel = _kernel if backend is None else _BACKENDS[backend]
    N = model.slice_dim
    K = 2 * N if config.spectrum == "full" else N
    state = _initial_state(2 * N, K, config.seed, model.seed)
    tau = np.zeros(K, dtype=complex)
    work = np.zeros(kernel.workspace_size(2 * N, K), dtype=complex)
    rows, cols = model.pattern[:2]
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    indptr = np.ascontiguousarray(model.indptr, dtype=np.int64)
    segments = _Segments(K)
    energy = config.energy
    top_first = 1
    since_qr = 0
    done = 0
    total = config.warmup + config.max_slices
    n = 1
    next_check = max(config.min_slices, 1)
    converged = False
    status = 0
    logacc = np.zeros(K)
    with threadpool_limits(limits=1):
        while done < total:
            in_chunk = CHUNK_SLICES - (n % CHUNK_SLICES)
            count = min(in_chunk, total - done)
            if done < config.warmup:
                count = min(count, config.warmup - done)
            blk = model.slices(n - 1, count + 1)
            finv = _inverse_forward(model, blk.forward[1:])
            logacc[:] = 0.0
            top_first, since_qr, _, status = kernel.advance(
                state, top_first, np.ascontiguousarray(blk.onsite[1:]),
                np.ascontiguousarray(blk.offdiag[1:]), cols, indptr,
                np.ascontiguousarray(finv), np.ascontiguousarray(blk.backward[:-1]),
                energy, config.qr_interval, since_qr, logacc, tau, work)
            if status != 0:
                break
            done += count
            n += count
            if done <= config.warmup:
                continue
            segments.add(logacc, count)
            used = done - config.warmup
            if used >= next_check or done >= total:
                mean, se = segments.statistics(config.block_count)
                k = select_gamma_min(mean, se)
                if progress is not None:
                    progress(used, mean, se)
                if k is not None and se[k] / mean[k] < config.target_rel_error:
                    converged = True
                    break
                next_check = max(int(used * 1.25), used + CHUNK_SLICES)
    used = max(done - config.warmup, 0)
    if status != 0 or not segments.logs:
        nan = np.full(K, np.nan)
        return LyapunovResult(math.nan, math.nan, math.nan, math.nan, model.lattice.L, used, False,
                              nan, nan, f"propagation failed (status {status})")
    mean, se = segments.statistics(config.block_count)
    order = np.argsort(-mean, kind="stable")
    mean, se = mean[order], se[order]
    k = select_gamma_min(mean, se)
    L = model.lattice.L
    if k is None:
        return LyapunovResult(math.nan, math.nan, math.nan, math.nan, L, used, False, mean, se,
                              "no exponent is positive beyond three standard errors")
    gamma, err = float(mean[k]), float(se[k])
    xi = 1.0 / gamma
    diagnostic = "" if converged else "maximum number of slices reached before the target error"
    return LyapunovResult(gamma, err, xi, xi / L, L, used, converged, mean, se, diagnostic)


def _derive_seed(master_seed: int, *coords: int) -> int:
    return int(np.random.SeedSequence([master_seed, *coords]).generate_state(1, np.uint64)[0])


def _scan_task(args):
    family, W, L, seed, config = args
    model = family.build(W, L, seed, L_z=config.max_slices + config.warmup + 1)
    cfg = TransferConfig(**{**config.__dict__, "seed": seed})
    return propagate(model, cfg)


def scan_tasks(family: ModelFamily, W_grid, L_list, config: TransferConfig, master_seed: int = 0):
    """Independent (W, L) tasks with seeds derived from grid coordinates."""
    tasks = []
    for iL, L in enumerate(L_list):
        for iW, W in enumerate(W_grid):
            seed = _derive_seed(master_seed, iW, iL)
            tasks.append((family, float(W), int(L), seed, config))
    return tasks


def lambda_scan(family: ModelFamily, W_grid, L_list, config: TransferConfig, master_seed: int = 0,
                workers: int = 1, verbose: bool = False) -> ScalingDataset:
    """Λ for every (W, L) of a grid, sorted by L then W.

    Each point uses a fresh realization whose seed depends on the master seed
    and the grid indices only, so results do not depend on ``workers``.
    """
    W_grid, L_list = list(W_grid), list(L_list)
    if not W_grid or not L_list:
        raise ValueError("W grid and L list must be non-empty")
    tasks = scan_tasks(family, W_grid, L_list, config, master_seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_task, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_scan_task(t))
            if verbose:
                r = results[-1]
                print(f"W={t[1]} L={t[2]} lambda={r.lambda_:.5f}±{r.sigma_lambda:.5f} "
                      f"slices={r.slices_used}", file=sys.stderr)
    rows = []
    for (fam, W, L, seed, cfg), res in zip(tasks, results):
        lam = res.lambda_ if math.isfinite(res.lambda_) else math.nan
        rows.append(ScanRow(W, L, lam, res.sigma_lambda, res.slices_used,
                            bool(res.converged and math.isfinite(lam))))
    return ScalingDataset(family.cls, family.dim, config.energy, rows).sort()


@dataclass(frozen=True)
class Crossing:
    """Result of :func:`find_crossing`.

    ``intervals`` lists the W brackets in which Λ(L_max) − Λ(L_min) changes
    sign significantly; ``estimates`` the linearly interpolated zero in each.
    """

    intervals: tuple
    estimates: tuple
    L_pair: tuple

    @property
    def found(self) -> bool:
        return bool(self.intervals)

    @property
    def interval(self):
        return self.intervals[0] if self.intervals else None

    def describe(self) -> str:
        if not self.found:
            return "no AT found"
        return "; ".join(f"W_c in [{lo:.4g}, {hi:.4g}] (~{w:.4g})"
                         for (lo, hi), w in zip(self.intervals, self.estimates))


def find_crossing(dataset: ScalingDataset, sizes: tuple | None = None,
                  significance: float = 2.0) -> Crossing:
    """Brackets where the curves of the smallest and largest L cross.

    Parameters
    ----------
    dataset : ScalingDataset
        Scan with at least two sizes sharing at least two W values.
    sizes : tuple, optional
        The ``(L_small, L_large)`` pair; defaults to the extreme sizes.
    significance : float
        Differences Λ(L_large) − Λ(L_small) smaller than this many combined
        standard errors carry no sign and are skipped. Zero keeps every point.

    Returns
    -------
    Crossing
        One bracket per sign change between consecutive significant points.
    """
    by_size = {}
    for r in dataset.rows:
        if math.isfinite(r.lam):
            sigma = r.sigma if math.isfinite(r.sigma) else math.inf
            by_size.setdefault(r.L, {})[r.W] = (r.lam, sigma)
    if sizes is None:
        if len(by_size) < 2:
            raise ValueError("need at least two system sizes")
        sizes = (min(by_size), max(by_size))
    small, large = by_size[sizes[0]], by_size[sizes[1]]
    common = sorted(set(small) & set(large))
    if len(common) < 2:
        raise ValueError("the two sizes share fewer than two W values")
    points = []
    for w in common:
        d = large[w][0] - small[w][0]
        err = math.hypot(large[w][1], small[w][1])
        if abs(d) > significance * err or (significance == 0 and d == 0):
            points.append((w, d))
    intervals, estimates = [], []
    for (w0, d0), (w1, d1) in zip(points, points[1:]):
        if d0 == 0:
            if not intervals or intervals[-1] != (w0, w0):
                intervals.append((w0, w0))
                estimates.append(w0)
        elif d1 == 0:
            intervals.append((w1, w1))
            estimates.append(w1)
        elif d0 * d1 < 0:
            intervals.append((w0, w1))
            estimates.append(w0 + (w1 - w0) * d0 / (d0 - d1))
    return Crossing(tuple(intervals), tuple(estimates), tuple(sizes))
