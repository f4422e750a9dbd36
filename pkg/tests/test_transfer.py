import math

import numpy as np
import pytest

from andloc.dataset import ScalingDataset, ScanRow
from andloc.models import DisorderSpec, LatticeSpec, ModelFamily, build_clean, build_o1, build_su2
from andloc.transfer import (
    BACKEND,
    TransferConfig,
    _initial_state,
    _inverse_forward,
    available_backends,
    find_crossing,
    lambda_scan,
    propagate,
    select_gamma_min,
    slice_transfer,
)

BACKENDS = available_backends()


def _fixed(slices, **kw):
    """Configuration that runs exactly ``slices`` slices."""
    return TransferConfig(max_slices=slices, min_slices=slices, **kw)


# ---------------------------------------------------------------- configuration
@pytest.mark.parametrize("kw", [dict(qr_interval=0), dict(target_rel_error=0.0), dict(target_rel_error=1.0),
                                dict(block_count=7), dict(max_slices=0), dict(spectrum="quarter")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TransferConfig(**kw)


def test_config_energy_is_complex():
    assert TransferConfig(energy=1).energy == complex(1, 0)


# ---------------------------------------------------------------- slice transfer
def test_clean_chain_transfer_matrix():
    model = build_clean(LatticeSpec(1, 1, L_z=10))
    T = slice_transfer(model, 3, 3.0)
    np.testing.assert_array_equal(T, [[3, -1], [1, 0]])
    assert np.linalg.det(T) == pytest.approx(1.0)


def test_slice_transfer_needs_previous_slice():
    with pytest.raises(ValueError):
        slice_transfer(build_clean(LatticeSpec(1, 1)), 0, 0.0)


def test_o1_forward_blocks_are_involutions():
    model = build_o1(LatticeSpec(3, 4), 10.0, seed=3)
    forward = model.slices(0, 10).forward
    np.testing.assert_array_equal(_inverse_forward(model, forward), forward)


@pytest.mark.parametrize("cls", ["AII", "DIII"])
def test_su2_inverse_forward(cls):
    d = DisorderSpec(W_i=2.0) if cls == "DIII" else DisorderSpec(W_r=2.0, W_i=2.0)
    model = build_su2(LatticeSpec(2, 4), d, cls, seed=3)
    forward = model.slices(0, 5).forward
    inv = _inverse_forward(model, forward)
    np.testing.assert_allclose(inv @ forward, np.broadcast_to(np.eye(2), forward.shape), atol=1e-14)


@pytest.mark.parametrize("builder", ["o1", "su2"])
def test_transfer_reproduces_strip_solutions(builder):
    """Vectors generated by the transfer matrices solve the strip equations slice by slice."""
    if builder == "o1":
        model = build_o1(LatticeSpec(3, 3), 4.0, seed=8)
    else:
        model = build_su2(LatticeSpec(2, 4), DisorderSpec(W_r=2.0, W_i=1.0), "AII", seed=8)
    E = 0.3 + 0.2j
    N = model.slice_dim
    count = 7
    rng = np.random.default_rng(0)
    psi = [rng.standard_normal(N) + 1j * rng.standard_normal(N) for _ in range(2)]
    for n in range(1, count - 1):
        nxt = slice_transfer(model, n, E) @ np.r_[psi[n], psi[n - 1]]
        np.testing.assert_allclose(nxt[N:], psi[n])
        psi.append(nxt[:N])
    H = model.assemble(0, count, periodic=False)
    vec = np.concatenate(psi)
    residual = (H @ vec - E * vec)[N:(count - 1) * N]
    assert np.linalg.norm(residual) < 1e-10 * np.linalg.norm(vec)


# ---------------------------------------------------------------- kernel against a dense product
@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("qr_interval", [1, 2, 3])
@pytest.mark.parametrize("builder", ["o1", "su2"])
def test_kernel_matches_dense_product(backend, qr_interval, builder):
    if builder == "o1":
        model = build_o1(LatticeSpec(2, 4), 3.0, seed=21)
    else:
        model = build_su2(LatticeSpec(2, 3), DisorderSpec(W_i=2.0), "DIII", seed=21)
    E = 0.1 - 0.4j
    slices = 4
    cfg = _fixed(slices, energy=E, qr_interval=qr_interval, seed=5)
    res = propagate(model, cfg, backend=backend)
    N = model.slice_dim
    product = np.eye(2 * N, dtype=complex)
    for n in range(1, slices + 1):
        product = slice_transfer(model, n, E) @ product
    state = _initial_state(2 * N, 2 * N, cfg.seed, model.seed)
    r = np.linalg.qr(product @ state, mode="r")
    expected = np.sort(np.log(np.abs(np.diag(r))) / slices)[::-1]
    np.testing.assert_allclose(res.exponents, expected, atol=1e-11)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")
@pytest.mark.parametrize("spectrum", ["full", "half"])
def test_backends_agree(spectrum):
    model = build_su2(LatticeSpec(2, 4), DisorderSpec(W_r=3.0, W_i=3.0), "AII", seed=4)
    cfg = _fixed(20_000, energy=0.2j, spectrum=spectrum)
    a = propagate(model, cfg, backend="compiled")
    b = propagate(model, cfg, backend="python")
    np.testing.assert_allclose(a.exponents, b.exponents, rtol=1e-10, atol=1e-12)
    assert a.gamma_min == pytest.approx(b.gamma_min, rel=1e-10)


def test_default_backend_reported():
    assert BACKEND in BACKENDS


# ---------------------------------------------------------------- physics checks
def test_clean_chain_outside_band():
    model = build_clean(LatticeSpec(1, 1, L_z=10**5 + 2))
    res = propagate(model, _fixed(10**5, energy=3.0))
    assert res.gamma_min == pytest.approx(math.acosh(1.5), abs=1e-3)
    assert res.xi == pytest.approx(1 / math.acosh(1.5), abs=2e-3)
    assert res.lambda_ == res.xi / res.L


def test_clean_chain_inside_band_reports_no_positive_exponent():
    model = build_clean(LatticeSpec(1, 1))
    res = propagate(model, _fixed(20_000, energy=1.0))
    assert not res.converged
    assert math.isnan(res.gamma_min)
    assert "positive" in res.diagnostic


def test_exponent_count_and_hermitian_pairing():
    # Hermitian limit: class AII† with W_i = 0 at real energy
    model = build_su2(LatticeSpec(2, 4), DisorderSpec(W_r=3.0, W_i=0.0), "AII†", seed=9)
    res = propagate(model, _fixed(100_000, energy=0.0))
    assert res.exponents.size == 2 * model.slice_dim
    pairs = res.exponents + res.exponents[::-1]
    assert np.max(np.abs(pairs)) < 1e-3 * np.max(np.abs(res.exponents))


def test_half_spectrum_matches_upper_half_of_full():
    model = build_su2(LatticeSpec(2, 4), DisorderSpec(W_r=4.0, W_i=4.0), "AII", seed=2)
    full = propagate(model, _fixed(40_000, spectrum="full"))
    half = propagate(model, _fixed(40_000, spectrum="half"))
    assert half.exponents.size == model.slice_dim
    err = np.hypot(full.errors[:model.slice_dim], half.errors)
    assert np.all(np.abs(full.exponents[:model.slice_dim] - half.exponents) < 4 * err)


def test_gauge_invariance():
    model = build_o1(LatticeSpec(3, 4), 12.0, seed=6)
    cfg = _fixed(20_000, energy=0.5j)
    plain = propagate(model, cfg)
    twisted = propagate(model.with_gauge_phase(1.1), cfg)
    err = np.hypot(plain.errors, twisted.errors)
    assert np.all(np.abs(twisted.exponents - plain.exponents) < 3 * err)


def test_qr_interval_independence():
    model = build_su2(LatticeSpec(3, 4), DisorderSpec(W_r=6.0, W_i=6.0), "AII", seed=5)
    results = [propagate(model, _fixed(20_000, qr_interval=q)) for q in (4, 8, 16)]
    for other in results[1:]:
        err = math.hypot(results[0].se_gamma, other.se_gamma)
        assert abs(other.gamma_min - results[0].gamma_min) < 3 * err


def test_conjugate_energy_symmetry_for_real_ensemble():
    model = build_o1(LatticeSpec(3, 4), 15.0, seed=10)
    a = propagate(model, _fixed(40_000, energy=0.3 + 0.5j, seed=1))
    b = propagate(model, _fixed(40_000, energy=0.3 - 0.5j, seed=2))
    assert abs(a.lambda_ - b.lambda_) < 3 * math.hypot(a.sigma_lambda, b.sigma_lambda)


def test_error_bars_are_honest():
    gammas, ses = [], []
    for k in range(50):
        model = build_o1(LatticeSpec(2, 4), 6.0, seed=1000 + k)
        res = propagate(model, _fixed(8192, energy=0.0, block_count=16))
        gammas.append(res.gamma_min)
        ses.append(res.se_gamma)
    ratio = np.std(gammas, ddof=1) / np.mean(ses)
    assert 0.7 < ratio < 1.3


def test_convergence_stops_at_target():
    model = build_o1(LatticeSpec(2, 4), 8.0, seed=3)
    cfg = TransferConfig(energy=0.0, target_rel_error=0.01, max_slices=500_000, min_slices=2048)
    res = propagate(model, cfg)
    assert res.converged
    assert res.se_gamma / res.gamma_min < 0.01
    assert res.slices_used < 500_000


def test_not_converged_when_cap_reached():
    model = build_o1(LatticeSpec(2, 4), 8.0, seed=3)
    res = propagate(model, TransferConfig(target_rel_error=1e-6, max_slices=4096, min_slices=2048))
    assert not res.converged
    assert res.slices_used == 4096
    assert res.diagnostic


def test_warmup_slices_are_not_counted():
    model = build_o1(LatticeSpec(2, 4), 8.0, seed=3)
    res = propagate(model, TransferConfig(max_slices=4096, min_slices=4096, warmup=512))
    assert res.slices_used == 4096


def test_select_gamma_min_margin():
    exps = np.array([2.0, 1.0, 0.01, -0.01])
    errs = np.array([0.01, 0.01, 0.01, 0.01])
    assert select_gamma_min(exps, errs) == 1
    assert select_gamma_min(np.array([-1.0]), np.array([0.1])) is None


def test_o1_critical_lambda_at_l8():
    """3D O(1), E = 0, W = 21.54, L = 8: Λ ≈ 0.269 ± 0.03."""
    model = ModelFamily("AI", 3).build(21.54, 8, seed=77, L_z=100_001)
    res = propagate(model, TransferConfig(energy=0.0, max_slices=100_000, min_slices=100_000,
                                          spectrum="half"))
    assert res.lambda_ == pytest.approx(0.269, abs=0.03)


# ---------------------------------------------------------------- scans and crossings
def test_single_point_scan_has_one_row_per_size():
    family = ModelFamily("AI", 2)
    data = lambda_scan(family, [5.0], [4, 6], _fixed(4096), master_seed=1)
    assert len(data) == 2
    assert [r.L for r in data.rows] == [4, 6]


def test_scan_is_sorted_and_independent_of_workers():
    family = ModelFamily("AII", 2)
    cfg = _fixed(2048)
    a = lambda_scan(family, [4.0, 2.0], [6, 4], cfg, master_seed=3, workers=1)
    b = lambda_scan(family, [4.0, 2.0], [6, 4], cfg, master_seed=3, workers=2)
    assert [(r.L, r.W) for r in a.rows] == [(4, 2.0), (4, 4.0), (6, 2.0), (6, 4.0)]
    assert a.to_csv_text() == b.to_csv_text()


def test_duplicate_points_with_different_seeds_agree():
    family = ModelFamily("AI", 3)
    cfg = _fixed(30_000, spectrum="half")
    a = lambda_scan(family, [16.0], [4], cfg, master_seed=1).rows[0]
    b = lambda_scan(family, [16.0], [4], cfg, master_seed=2).rows[0]
    assert a.lam != b.lam
    assert abs(a.lam - b.lam) < 3 * math.hypot(a.sigma, b.sigma)


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        lambda_scan(ModelFamily("AI", 2), [], [4], _fixed(100))


def _synthetic(values):
    rows = [ScanRow(W, L, lam, 0.01, 1000, True) for (W, L), lam in values.items()]
    return ScalingDataset("AII", 3, 0.0, rows).sort()


def test_find_crossing_single_flip():
    Ws = np.linspace(5.0, 7.0, 9)
    values = {}
    for L in (4, 8):
        for W in Ws:
            values[(float(W), L)] = 1.0 - 0.1 * (W - 6.2) * math.log(L)
    crossing = find_crossing(_synthetic(values))
    assert crossing.found and len(crossing.intervals) == 1
    lo, hi = crossing.interval
    assert lo <= 6.2 <= hi
    assert crossing.estimates[0] == pytest.approx(6.2)


def test_find_crossing_none():
    values = {(W, L): 1.0 + 0.1 * L for W in (1.0, 2.0, 3.0) for L in (4, 8)}
    crossing = find_crossing(_synthetic(values))
    assert not crossing.found
    assert crossing.describe() == "no AT found"


def test_find_crossing_ignores_insignificant_flips():
    rows = [ScanRow(1.0, 4, 1.00, 0.05, 1000, True), ScanRow(1.0, 8, 1.01, 0.05, 1000, True),
            ScanRow(2.0, 4, 0.80, 0.05, 1000, True), ScanRow(2.0, 8, 0.79, 0.05, 1000, True),
            ScanRow(3.0, 4, 0.60, 0.01, 1000, True), ScanRow(3.0, 8, 0.40, 0.01, 1000, True)]
    data = ScalingDataset("AII", 2, 0.0, rows).sort()
    assert not find_crossing(data).found
    raw = find_crossing(data, significance=0.0)
    assert raw.intervals == ((1.0, 2.0),)


def test_find_crossing_needs_two_sizes():
    with pytest.raises(ValueError):
        find_crossing(_synthetic({(1.0, 4): 1.0, (2.0, 4): 0.9}))


def test_2d_aii_real_energy_has_no_crossing():
    family = ModelFamily("AII", 2)
    data = lambda_scan(family, [2.0, 4.0, 6.0, 8.0], [8, 16], _fixed(20_000, spectrum="half"), master_seed=5)
    assert not find_crossing(data).found


def test_2d_aii_complex_energy_upper_crossing():
    """Metallic window followed by a crossing into the insulator below W = 3."""
    family = ModelFamily("AII", 2)
    cfg = _fixed(40_000, energy=0.01j, spectrum="half")
    data = lambda_scan(family, [0.7, 1.5, 2.62, 3.0], [8, 16], cfg, master_seed=7)
    lam = {(r.W, r.L): (r.lam, r.sigma) for r in data.rows}
    (a, sa), (b, sb) = lam[(0.7, 8)], lam[(0.7, 16)]
    assert b - a > 3 * math.hypot(sa, sb)
    crossing = find_crossing(data)
    assert len(crossing.intervals) == 1
    lo, hi = crossing.interval
    assert 1.5 <= lo and hi <= 3.0
