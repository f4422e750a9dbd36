"""End-to-end acceptance checks; each prints one PASS/FAIL line.

The long transfer-matrix scans are cached on disk by ``acceptance_support``
(delete ``tests/.acceptance_cache`` to recompute them).
"""

import csv
import json
import math
import time
import zlib
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from andloc.cli import parse_config, run
from andloc.models import LatticeSpec, ModelFamily, assemble_full, build_clean, sample_beta, su2_matrices
from andloc.spectra import (
    diagonalize,
    dos_hist,
    expected_real_count_ginoe,
    ginibre,
    splitting_stats,
)
from andloc.symmetry import (
    canonical_name,
    class_record,
    counterpart,
    hermitize,
    inverse_table,
    random_class_matrix,
    verify,
)
from andloc.fss import confidence, fit
from andloc.transfer import TransferConfig, find_crossing, propagate

from acceptance_support import cached_scan
from synthetic import TRUE, noisy_points

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def verdict(capsys):
    """Print ``PASS``/``FAIL`` with details, then assert."""

    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail

    return emit


def _lam_at(data, W):
    return {r.L: (r.lam, r.sigma) for r in data.rows if r.W == W}


# ---------------------------------------------------------------- 1
def test_criterion_1_clean_chain(verdict):
    model = build_clean(LatticeSpec(1, 1, L_z=100_002))
    cfg = TransferConfig(energy=3.0, max_slices=100_000, min_slices=100_000)
    propagate(model, TransferConfig(energy=3.0, max_slices=1000, min_slices=1000))
    t0 = time.perf_counter()
    res = propagate(model, cfg)
    elapsed = time.perf_counter() - t0
    err = abs(res.gamma_min - math.acosh(1.5))
    verdict("criterion 1 (clean 1D chain)", err < 1e-3 and elapsed < 1.0,
            f"gamma={res.gamma_min:.6f} |gamma-arccosh(1.5)|={err:.2e} (<1e-3), runtime {elapsed:.3f}s (<1s)")


# ---------------------------------------------------------------- 2
def test_criterion_2_critical_amplitude_3d_aii(verdict):
    data = cached_scan("aii3d")
    lam = _lam_at(data, 6.32)
    values = [v for v, _ in lam.values()]
    within = all(abs(v - 0.936) <= 0.05 for v in values)
    spread = max(values) - min(values)
    crossing = find_crossing(data)
    inside = crossing.found and all(6.1 <= lo and hi <= 6.5 for lo, hi in crossing.intervals)
    detail = ", ".join(f"L={L}: {v:.4f}±{s:.4f}" for L, (v, s) in sorted(lam.items()))
    verdict("criterion 2 (3D AII critical amplitude)", within and spread < 0.06 and inside,
            f"{detail}; within 0.936±0.05: {within}; spread {spread:.4f} (<0.06); {crossing.describe()}")


# ---------------------------------------------------------------- 3
def test_criterion_3_superuniversality(verdict):
    cii, diii = cached_scan("cii2d"), cached_scan("diii2d")
    c1, c2 = find_crossing(cii), find_crossing(diii)
    overlap = c1.found and c2.found and c1.interval[0] <= c2.interval[1] and c2.interval[0] <= c1.interval[1]
    a, b = _lam_at(cii, 6.19), _lam_at(diii, 6.19)
    agree, near = True, True
    parts = []
    for L in sorted(a):
        (x, sx), (y, sy) = a[L], b[L]
        agree &= abs(x - y) <= 3 * math.hypot(sx, sy)
        near &= abs(x - 1.852) <= 0.1 and abs(y - 1.852) <= 0.1
        parts.append(f"L={L}: {x:.4f} vs {y:.4f}")
    verdict("criterion 3 (CII† vs DIII)", overlap and agree and near,
            f"crossings {c1.describe()} / {c2.describe()}; {'; '.join(parts)}; "
            f"agree within 3σ: {agree}; each within 1.852±0.1: {near}")


# ---------------------------------------------------------------- 4
def test_criterion_4_fss_round_trip(verdict):
    rng = np.random.default_rng(2024)
    single = fit(noisy_points(rng), "2,3,0,0")
    wc_err = abs(single.W_c - TRUE["W_c"]) / TRUE["W_c"]
    nu_err = abs(single.nu - TRUE["nu"]) / TRUE["nu"]

    chi2 = [fit(noisy_points(rng), "2,3,0,0").chi2 for _ in range(100)]
    dof = single.dof
    chi2_ok = abs(np.mean(chi2) - dof) <= 0.15 * dof

    trials = 500
    hits = {"W_c": 0, "nu": 0}
    for k in range(trials):
        points = noisy_points(np.random.default_rng([7, k]))
        result = fit(points, "2,3,0,0")
        ci = confidence(result, points, n_resamples=200, seed=k)
        for name in hits:
            lo, hi = ci[name]
            hits[name] += lo <= TRUE[name] <= hi
    coverage = {k: v / trials for k, v in hits.items()}
    cover_ok = all(abs(c - 0.95) <= 0.03 for c in coverage.values())
    ok = wc_err <= 1e-3 and nu_err <= 0.02 and chi2_ok and cover_ok
    verdict("criterion 4 (FSS round trip)", ok,
            f"W_c rel err {wc_err:.2e} (<=1e-3), nu rel err {nu_err:.2e} (<=0.02); "
            f"<chi2>={np.mean(chi2):.2f} vs dof {dof} (±15%); coverage W_c {coverage['W_c']:.3f}, "
            f"nu {coverage['nu']:.3f} (0.95±0.03)")


# ---------------------------------------------------------------- 5
def test_criterion_5_hermitization(verdict):
    worst_sv = worst_herm = 0.0
    chiral_exact = True
    for cls in ("A", "AI", "AII", "AIII", "AII†", "CII†", "DIII"):
        rng = np.random.default_rng([5, zlib.crc32(cls.encode())])
        for _ in range(100):
            H, _ = random_class_matrix(cls, 16, rng)
            norm = np.linalg.norm(H, 2)
            for E0 in np.linalg.eigvals(H):
                s_min = np.linalg.svd(H - E0 * np.eye(16), compute_uv=False)[-1]
                worst_sv = max(worst_sv, s_min / norm)
                pair = hermitize(H, E0)
                Ht = pair.matrix
                worst_herm = max(worst_herm, np.abs(Ht - Ht.conj().T).max() / max(1.0, np.abs(Ht).max()))
                chiral_exact &= bool(np.abs(pair.chirality @ Ht @ pair.chirality + Ht).max() <= 1e-12)
    with open(FIXTURES / "class_table.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    matches = sum(counterpart(class_record(r["nhsc"]).name) == r["HSC"] for r in rows)
    groups = json.loads((FIXTURES / "counterpart_groups.json").read_text(encoding="utf-8"))
    inverse = inverse_table()
    inverse_ok = all(sorted(inverse[h]) == sorted(canonical_name(m) for m, _ in members)
                     for h, members in groups.items())
    ok = worst_sv < 1e-8 and worst_herm < 1e-12 and chiral_exact and matches == 38 and len(rows) == 38 and inverse_ok
    verdict("criterion 5 (Hermitization)", ok,
            f"max sigma_min/||H|| {worst_sv:.1e} (<1e-8); Hermiticity {worst_herm:.1e} (<1e-12); "
            f"chiral: {chiral_exact}; table {matches}/{len(rows)}; inverse table: {inverse_ok}")


# ---------------------------------------------------------------- 6
def test_criterion_6_model_builds(verdict):
    worst = {}
    for cls in ("AI", "AII", "AII†", "CII†", "DIII"):
        family = ModelFamily(cls, 2)
        residual = 0.0
        for seed in range(1000):
            model = family.build(4.0, 4, seed, geometry="closed")
            H = assemble_full(model)
            residual = max(residual, max(verify(H, op) for op in model.symmetry_ops()))
        worst[cls] = residual
    rng = np.random.default_rng(6)
    shape = (100_000,)
    R = su2_matrices(2 * np.pi * rng.random(shape), sample_beta(rng, shape), 2 * np.pi * rng.random(shape))
    unitarity = float(np.abs(np.conj(np.swapaxes(R, -1, -2)) @ R - np.eye(2)).max())
    beta = sample_beta(np.random.default_rng(66), 100_000)
    ks = stats.kstest(beta, lambda b: np.sin(np.clip(b, 0, np.pi / 2)) ** 2).statistic
    ok = max(worst.values()) < 1e-12 and unitarity < 1e-14 and ks < 0.01
    verdict("criterion 6 (model builds)", ok,
            "relations " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
            + f" (<1e-12); SU(2) unitarity {unitarity:.1e} (<1e-14); beta KS {ks:.4f} (<0.01)")


# ---------------------------------------------------------------- 7
def test_criterion_7_spectra(verdict):
    t0 = time.perf_counter()
    ai = [diagonalize(np.asarray(ModelFamily("AI", 3).build(20.0, 10, seed, geometry="closed").assemble()))
          for seed in range(200)]
    h = dos_hist(ai)
    peak_ratio = h.density[h.central_bin()] / np.median(h.density[h.density > 0])

    aii = [diagonalize(np.asarray(ModelFamily("AII", 2).build(1.0, 24, seed, geometry="closed").assemble()))
           for seed in range(20)]
    g = dos_hist(aii)
    depletion = g.density[g.central_bin()] / g.density.max()

    ginse_real = diagonalize(ginibre("GinSE", 500, 1)).real_count()
    counts = [diagonalize(ginibre("GinOE", 1000, [2, k])).real_count() for k in range(100)]
    expected = expected_real_count_ginoe(1000)
    ginoe_dev = abs(np.mean(counts) - expected) / expected

    split = splitting_stats("AII", samples=200, dim=2, L=6, W=2.0, strength=0.02, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (peak_ratio > 5 and depletion < 0.3 and ginse_real == 0 and ginoe_dev <= 0.15 and abs(split.beta - 2) <= 0.3
          and elapsed <= 20 * 60)
    verdict("criterion 7 (DoS and spectra)", ok,
            f"AI peak/median {peak_ratio:.1f} (>5); AII centre/max {depletion:.3f} (<0.3); "
            f"GinSE real {ginse_real} (=0); GinOE mean real {np.mean(counts):.2f} vs {expected:.2f} "
            f"({ginoe_dev:.1%}, <=15%); beta {split.beta:.3f} (2±0.3); runtime {elapsed / 60:.1f} min (<=20)")


# ---------------------------------------------------------------- 8
PIPELINES = {
    "scan": """
task = "lambda-scan"
seed = 8
[model]
class = "AII"
dim = 2
L = [4, 6, 8]
W = { start = 3.0, stop = 5.0, num = 5 }
energy = [0.0, 0.5]
[transfer]
max_slices = 4096
min_slices = 4096
target_rel_error = 0.5
spectrum = "half"
[fss]
orders = ["1,1,0,0", "1,2,0,0"]
window = 1.0
resamples = 16
""",
    "spectra": """
task = "spectra"
seed = 9
[model]
class = "AII†"
dim = 2
L = [4, 6]
W = [2.0, 3.0]
[spectra]
samples = 4
""",
    "ginibre": """
task = "ginibre"
seed = 10
[ginibre]
ensemble = "GinOE"
N = 60
samples = 8
""",
}


def test_criterion_8_determinism(verdict, tmp_path):
    identical = {}
    for name, text in PIPELINES.items():
        config = parse_config(text)
        seen = []
        for label, workers in (("w1", 1), ("w1-again", 1), ("w4", 4), ("w8", 8)):
            out = tmp_path / name / label
            manifest = run(config, out_dir=out, workers=workers)
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}
            seen.append((files, manifest["outputs"], manifest["config_digest"]))
        identical[name] = all(s == seen[0] for s in seen[1:])
    verdict("criterion 8 (determinism)", all(identical.values()),
            ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in identical.items())
            + " across reruns and workers {1, 4, 8}")
