"""Disk cache and shared settings for the long acceptance runs."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from andloc.dataset import ScalingDataset
from andloc.models import ModelFamily
from andloc.transfer import TransferConfig, lambda_scan

CACHE_DIR = Path(os.environ.get("ANDLOC_ACCEPTANCE_CACHE", Path(__file__).parent / ".acceptance_cache"))

LONG_SLICES = 1_000_000

SCANS = {
    "aii3d": dict(cls="AII", dim=3, W_grid=[6.1, 6.32, 6.5], L_list=[4, 6, 8], master_seed=2024),
    "cii2d": dict(cls="CII†", dim=2, W_grid=[5.9, 6.19, 6.5], L_list=[8, 16, 24], master_seed=2025),
    "diii2d": dict(cls="DIII", dim=2, W_grid=[5.9, 6.19, 6.5], L_list=[8, 16, 24], master_seed=2026),
}


def long_config() -> TransferConfig:
    """Fixed-length propagation of ``LONG_SLICES`` slices."""
    return TransferConfig(energy=0.0, qr_interval=8, target_rel_error=1e-3, max_slices=LONG_SLICES,
                          min_slices=LONG_SLICES, block_count=16, spectrum="half")


def _key(name: str, spec: dict, config: TransferConfig) -> str:
    payload = json.dumps({"name": name, "spec": spec, "config": config.as_dict()}, sort_keys=True,
                         ensure_ascii=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def cached_scan(name: str, verbose: bool = False) -> ScalingDataset:
    """Run (or load) the named long scan."""
    spec = SCANS[name]
    config = long_config()
    path = CACHE_DIR / f"{name}-{_key(name, spec, config)}.csv"
    if path.exists():
        return ScalingDataset.read_csv(path)
    family = ModelFamily(spec["cls"], spec["dim"])
    data = lambda_scan(family, spec["W_grid"], spec["L_list"], config, master_seed=spec["master_seed"],
                       verbose=verbose)
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    data.write_csv(tmp)
    tmp.replace(path)
    return data


if __name__ == "__main__":
    import sys

    for scan in sys.argv[1:] or list(SCANS):
        print(scan, file=sys.stderr)
        print(cached_scan(scan, verbose=True).to_csv_text())
