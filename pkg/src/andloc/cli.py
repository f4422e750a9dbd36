"""Command-line interface: configured runs, fits, classification and report rows."""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from . import __version__
from .dataset import ScalingDataset
from .fss import ExpansionOrder, confidence, fit, report_row
from .models import ModelFamily
from .spectra import (GINIBRE, conjugation_pairing_residual, diagonalize, dos_hist,
                      expected_real_count_ginoe, ginibre, spectrum_csv_text, splitting_stats)
from .symmetry import SymmetryOp, classify, counterpart, reduce_class, verify
from .transfer import TransferConfig, _derive_seed, find_crossing, lambda_scan

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

TASKS = ("lambda-scan", "fss-fit", "spectra", "ginibre", "splitting", "classify")
REQUIRED_BLOCKS = {
    "lambda-scan": ("model", "transfer"),
    "fss-fit": ("fss",),
    "spectra": ("model", "spectra"),
    "ginibre": ("ginibre",),
    "splitting": ("splitting",),
    "classify": ("classify",),
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


class NumericalFailure(RuntimeError):
    """A task failed for numerical reasons."""


# ------------------------------------------------------------------ config
def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}.{key}: missing")
    return block[key]


def _as_int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}")
    return value


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _energy(value, where: str) -> list:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value), 0.0]
    if isinstance(value, list) and len(value) == 2:
        return [_as_float(value[0], where), _as_float(value[1], where)]
    raise ConfigError(f"{where}: expected a number or [re, im]")


def _W_grid(value, where: str) -> list:
    if isinstance(value, dict):
        start = _as_float(_require(value, "start", where), f"{where}.start")
        stop = _as_float(_require(value, "stop", where), f"{where}.stop")
        num = _as_int(_require(value, "num", where), f"{where}.num", 1)
        return [float(w) for w in np.linspace(start, stop, num)]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list or {{start, stop, num}}")
    grid = [_as_float(w, where) for w in value]
    if any(w < 0 for w in grid):
        raise ConfigError(f"{where}: disorder strengths must be non-negative")
    return grid


def _model_block(raw: dict) -> dict:
    where = "model"
    cls = _require(raw, "class", where)
    dim = _as_int(_require(raw, "dim", where), f"{where}.dim", 1)
    L = raw.get("L", [])
    L = [L] if isinstance(L, int) else L
    if not isinstance(L, list) or not L:
        raise ConfigError(f"{where}.L: expected a non-empty list of sizes")
    L = [_as_int(x, f"{where}.L", 2) for x in L]
    boundary = raw.get("boundary", "periodic")
    if boundary not in ("periodic", "open"):
        raise ConfigError(f"{where}.boundary: expected 'periodic' or 'open'")
    try:
        family = ModelFamily(str(cls), dim, boundary)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{where}.class: {exc}") from None
    return {"class": family.cls, "dim": dim, "L": L, "W": _W_grid(_require(raw, "W", where), f"{where}.W"),
            "energy": _energy(raw.get("energy", 0.0), f"{where}.energy"), "boundary": boundary}


def _transfer_block(raw: dict) -> dict:
    defaults = TransferConfig()
    out = {}
    for key in ("qr_interval", "max_slices", "block_count", "min_slices", "warmup"):
        out[key] = _as_int(raw.get(key, getattr(defaults, key)), f"transfer.{key}")
    out["target_rel_error"] = _as_float(raw.get("target_rel_error", defaults.target_rel_error),
                                        "transfer.target_rel_error")
    out["spectrum"] = str(raw.get("spectrum", defaults.spectrum))
    unknown = set(raw) - set(out)
    if unknown:
        raise ConfigError(f"transfer: unknown fields {sorted(unknown)}")
    try:
        TransferConfig(**out)
    except ValueError as exc:
        raise ConfigError(f"transfer: {exc}") from None
    return out


def _orders(value, where: str) -> list:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a list of orders such as \"2,3,0,0\"")
    out = []
    for item in value:
        try:
            order = ExpansionOrder.parse(item if isinstance(item, str) else ",".join(map(str, item)))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        out.append(f"{order.m1},{order.n1},{order.m2},{order.n2}")
    return out


def _fss_block(raw: dict, needs_data: bool) -> dict:
    out = {"orders": _orders(raw.get("orders", ["2,3,0,0"]), "fss.orders"),
           "window": _as_float(raw.get("window", 0.3), "fss.window"),
           "L_min": _as_int(raw.get("L_min", 2), "fss.L_min", 2),
           "L_max": _as_int(raw.get("L_max", 1_000_000), "fss.L_max", 2),
           "resamples": _as_int(raw.get("resamples", 200), "fss.resamples", 0)}
    if "W_c_guess" in raw:
        out["W_c_guess"] = _as_float(raw["W_c_guess"], "fss.W_c_guess")
    if needs_data:
        out["data"] = str(_require(raw, "data", "fss"))
    return out


def _spectra_block(raw: dict) -> dict:
    axis = raw.get("axis", "imag")
    if axis not in ("imag", "complex"):
        raise ConfigError("spectra.axis: expected 'imag' or 'complex'")
    bins = raw.get("bins", 0)
    return {"samples": _as_int(raw.get("samples", 10), "spectra.samples", 1),
            "vectors": bool(raw.get("vectors", True)), "axis": axis,
            "bins": _as_int(bins, "spectra.bins", 0)}


def _ginibre_block(raw: dict) -> dict:
    ensemble = _require(raw, "ensemble", "ginibre")
    if ensemble not in GINIBRE:
        raise ConfigError(f"ginibre.ensemble: expected one of {list(GINIBRE)}")
    return {"ensemble": ensemble, "N": _as_int(_require(raw, "N", "ginibre"), "ginibre.N", 1),
            "samples": _as_int(raw.get("samples", 10), "ginibre.samples", 1)}


def _splitting_block(raw: dict) -> dict:
    cls = raw.get("class", "AII")
    if cls not in ("AII", "AI"):
        raise ConfigError("splitting.class: expected 'AII' or 'AI'")
    return {"class": cls, "samples": _as_int(raw.get("samples", 200), "splitting.samples", 1),
            "dim": _as_int(raw.get("dim", 2), "splitting.dim", 1),
            "L": _as_int(raw.get("L", 6), "splitting.L", 2),
            "W": _as_float(raw.get("W", 2.0), "splitting.W"),
            "strength": _as_float(raw.get("strength", 0.02), "splitting.strength"),
            "min_count": _as_int(raw.get("min_count", 1000), "splitting.min_count", 1)}


def _classify_block(raw: dict) -> dict:
    out = {"matrix": str(_require(raw, "matrix", "classify")), "ops": str(_require(raw, "ops", "classify"))}
    if "energy" in raw:
        out["energy"] = _energy(raw["energy"], "classify.energy")
    return out


def canonicalize(raw: dict) -> dict:
    """Validated configuration with defaults filled in.

    Raises
    ------
    ConfigError
        With a field-level message.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    task = _require(raw, "task", "config")
    if task not in TASKS:
        raise ConfigError(f"config.task: expected one of {list(TASKS)}, got {task!r}")
    if "seed" not in raw:
        raise ConfigError("config.seed: missing (a seed is mandatory)")
    seed = _as_int(raw["seed"], "config.seed", 0)
    workers = _as_int(raw.get("workers", 1), "config.workers", 1)
    for block in REQUIRED_BLOCKS[task]:
        if not isinstance(raw.get(block), dict):
            raise ConfigError(f"{block}: block required for task {task}")
    out = {"task": task, "seed": seed, "workers": workers}
    if "name" in raw:
        out["name"] = str(raw["name"])
    if "model" in raw:
        out["model"] = _model_block(raw["model"])
    if "transfer" in raw:
        out["transfer"] = _transfer_block(raw["transfer"])
    if "fss" in raw:
        out["fss"] = _fss_block(raw["fss"], task == "fss-fit")
    if task == "spectra":
        out["spectra"] = _spectra_block(raw["spectra"])
    if task == "ginibre":
        out["ginibre"] = _ginibre_block(raw["ginibre"])
    if task == "splitting":
        out["splitting"] = _splitting_block(raw["splitting"])
    if task == "classify":
        out["classify"] = _classify_block(raw["classify"])
    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected a table")
    out["output"] = {"dir": str(output.get("dir", "andloc-out"))}
    return out


def parse_config(text: str) -> dict:
    """Parse and canonicalize TOML text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}") from None
    return canonicalize(raw)


def serialize_config(config: dict) -> str:
    """TOML text of a canonical configuration."""
    return tomli_w.dumps(config)


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical configuration (output directory excluded)."""
    payload = {k: v for k, v in config.items() if k not in ("output", "workers")}
    text = json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ------------------------------------------------------------------ presets
def preset_names() -> list:
    folder = resources.files("andloc") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    path = resources.files("andloc") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text(encoding="utf-8")


def load_config(source: str) -> tuple:
    """Configuration from a file path or a preset name; returns ``(config, base_dir)``."""
    path = Path(source)
    if path.is_file():
        return parse_config(path.read_text(encoding="utf-8")), path.parent
    name = source[len("preset:"):] if source.startswith("preset:") else source
    if name in preset_names():
        return parse_config(preset_text(name)), Path.cwd()
    raise ConfigError(f"config: no file or preset named {source!r}")


# ------------------------------------------------------------------ tasks
def _write(out_dir: Path, name: str, text: str, inventory: dict):
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    inventory[name] = hashlib.sha256(text.encode()).hexdigest()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fit_all(data: ScalingDataset, fss_cfg: dict, seed: int, workers: int, out_dir: Path,
             inventory: dict, tasks: list, meta: dict):
    points = [p for p in data.points() if fss_cfg["L_min"] <= p.L <= fss_cfg["L_max"]]
    rows = []
    for k, text in enumerate(fss_cfg["orders"]):
        order = ExpansionOrder.parse(text)
        label = "fit-{}{}{}{}".format(order.m1, order.n1, order.m2, order.n2)
        task = {"task": label, "seed": _derive_seed(seed, 7, k), "status": "ok"}
        try:
            result = fit(points, order, window=fss_cfg["window"], W_c_guess=fss_cfg.get("W_c_guess"))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                confidence(result, points, n_resamples=fss_cfg["resamples"], seed=task["seed"],
                           workers=workers)
            report = json.loads(result.to_json(meta))
            _write(out_dir, f"{label}.json", _json_text(report), inventory)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rows.append(report_row(report))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            task["status"] = f"failed: {exc}"
        tasks.append(task)
    if rows:
        _write(out_dir, "report.txt", "\n".join(rows) + "\n", inventory)


def _task_lambda_scan(config, out_dir, inventory, tasks, workers, progress):
    m, t = config["model"], config["transfer"]
    family = ModelFamily(m["class"], m["dim"], m["boundary"])
    tcfg = TransferConfig(energy=complex(*m["energy"]), **t)
    data = lambda_scan(family, m["W"], m["L"], tcfg, master_seed=config["seed"], workers=workers,
                       verbose=progress)
    for iL, L in enumerate(m["L"]):
        for iW, W in enumerate(m["W"]):
            row = next(r for r in data.rows if r.L == L and r.W == W)
            tasks.append({"task": f"lambda W={W!r} L={L}", "seed": _derive_seed(config["seed"], iW, iL),
                          "status": "ok" if row.converged else "not converged"})
    _write(out_dir, "lambda.csv", data.to_csv_text(), inventory)
    if len(data.sizes()) >= 2 and len(m["W"]) >= 2:
        crossing = find_crossing(data)
        _write(out_dir, "crossing.json", _json_text({
            "L_pair": list(crossing.L_pair), "intervals": [list(i) for i in crossing.intervals],
            "estimates": list(crossing.estimates), "description": crossing.describe()}), inventory)
    if "fss" in config:
        meta = {"class": data.cls, "dim": data.dim, "energy": list(m["energy"])}
        _fit_all(data, config["fss"], config["seed"], workers, out_dir, inventory, tasks, meta)


def _task_fss_fit(config, out_dir, inventory, tasks, workers, base_dir):
    path = Path(config["fss"]["data"])
    path = path if path.is_absolute() else base_dir / path
    try:
        data = ScalingDataset.read_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"fss.data: {exc}") from None
    meta = {"class": data.cls, "dim": data.dim, "energy": [data.energy.real, data.energy.imag]}
    _fit_all(data, config["fss"], config["seed"], workers, out_dir, inventory, tasks, meta)


def _spectrum_sample(args):
    cls, dim, L, boundary, W, seed, vectors = args
    family = ModelFamily(cls, dim, boundary)
    H = family.build(W, L, seed, geometry="closed").assemble()
    return diagonalize(np.asarray(H), want_vectors=vectors, source=f"{cls} W={W} L={L} seed={seed}")


def _ordered_map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _task_spectra(config, out_dir, inventory, tasks, workers):
    m, s = config["model"], config["spectra"]
    items = []
    for iL, L in enumerate(m["L"]):
        for iW, W in enumerate(m["W"]):
            for k in range(s["samples"]):
                seed = _derive_seed(config["seed"], iW, iL, k)
                items.append((m["class"], m["dim"], L, m["boundary"], W, seed, s["vectors"]))
                tasks.append({"task": f"spectrum W={W!r} L={L} sample={k}", "seed": seed, "status": "ok"})
    spectra = _ordered_map(_spectrum_sample, items, workers)
    _write(out_dir, "spectrum.csv", spectrum_csv_text(spectra), inventory)
    hist = dos_hist(spectra, axis=s["axis"], bins=s["bins"] or None)
    _write(out_dir, "dos.csv", hist.to_csv_text(), inventory)


def _ginibre_sample(args):
    ensemble, N, seed = args
    return diagonalize(ginibre(ensemble, N, seed), source=f"{ensemble} N={N} seed={seed}")


def _task_ginibre(config, out_dir, inventory, tasks, workers):
    g = config["ginibre"]
    items = []
    for k in range(g["samples"]):
        seed = _derive_seed(config["seed"], k)
        items.append((g["ensemble"], g["N"], seed))
        tasks.append({"task": f"{g['ensemble']} sample={k}", "seed": seed, "status": "ok"})
    spectra = _ordered_map(_ginibre_sample, items, workers)
    counts = [sp.real_count() for sp in spectra]
    summary = {"ensemble": g["ensemble"], "N": g["N"], "samples": g["samples"], "real_counts": counts,
               "mean_real_count": float(np.mean(counts)),
               "max_conjugation_residual": max(conjugation_pairing_residual(sp.eigenvalues) for sp in spectra)}
    if g["ensemble"] == "GinOE":
        summary["expected_real_count"] = expected_real_count_ginoe(g["N"])
    _write(out_dir, "spectrum.csv", spectrum_csv_text(spectra), inventory)
    _write(out_dir, "dos.csv", dos_hist(spectra).to_csv_text(), inventory)
    _write(out_dir, "summary.json", _json_text(summary), inventory)


def _task_splitting(config, out_dir, inventory, tasks, workers):
    s = config["splitting"]
    stats = splitting_stats(s["class"], samples=s["samples"], dim=s["dim"], L=s["L"], W=s["W"],
                            strength=s["strength"], seed=config["seed"], min_count=s["min_count"])
    tasks.append({"task": f"splitting {s['class']}", "seed": config["seed"], "status": "ok"})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "density"])
    for lo, hi, d in zip(stats.edges[:-1], stats.edges[1:], stats.density):
        w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d))])
    _write(out_dir, "splitting.csv", buf.getvalue(), inventory)
    _write(out_dir, "summary.json", _json_text({
        "class": s["class"], "count": int(stats.s.size), "beta": stats.beta, "A": stats.A,
        "cutoff": stats.cutoff, "discarded": stats.discarded,
        "exact_real_fraction": stats.exact_real_fraction}), inventory)


def read_matrix_csv(path) -> np.ndarray:
    """Square complex matrix from a CSV of entries such as ``0.5-1j``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [[complex(x.strip().replace(" ", "")) for x in row] for row in csv.reader(fh) if row]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"matrix: {exc}") from None
    H = np.array(rows, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigError("matrix: not square")
    return H


def _complex_entry(x):
    if isinstance(x, list) and len(x) == 2:
        return complex(x[0], x[1])
    if isinstance(x, str):
        return complex(x.replace(" ", ""))
    return complex(x)


def read_ops_json(path) -> list:
    """Symmetry operations from ``[{"kind": ..., "unitary": [[...]]}, ...]``.

    Entries are numbers, ``[re, im]`` pairs or strings such as ``"1j"``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"ops: {exc}") from None
    if isinstance(raw, dict):
        raw = raw.get("ops", [])
    ops = []
    for i, item in enumerate(raw):
        try:
            u = np.array([[_complex_entry(x) for x in row] for row in item["unitary"]], dtype=complex)
            ops.append(SymmetryOp(item["kind"], u, item.get("sign")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"ops[{i}]: {exc}") from None
    return ops


def classify_matrix(H: np.ndarray, ops: list, energy: complex | None = None) -> dict:
    """Class of ``H`` among candidate operations, residuals and Hermitized counterpart."""
    for op in ops:
        if op.unitary.shape != H.shape:
            raise ConfigError(f"ops: {op.kind} unitary has shape {op.unitary.shape}, matrix {H.shape}")
    tag = classify(H, ops)
    out = {"class": tag.name, "energy_kind": tag.energy_kind,
           "residuals": [{"kind": op.kind, "sign": op.sign, "residual": verify(H, op)} for op in ops]}
    if energy is not None:
        reduced = reduce_class(tag.name, energy)
        out["energy"] = [energy.real, energy.imag]
        out["reduced_class"] = reduced.name
        out["counterpart"] = counterpart(reduced.name, energy)
    else:
        out["counterpart"] = counterpart(tag.name)
    return out


def _task_classify(config, out_dir, inventory, tasks, base_dir):
    c = config["classify"]

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    H = read_matrix_csv(resolve(c["matrix"]))
    ops = read_ops_json(resolve(c["ops"]))
    energy = complex(*c["energy"]) if "energy" in c else None
    result = classify_matrix(H, ops, energy)
    tasks.append({"task": "classify", "seed": config["seed"], "status": "ok"})
    _write(out_dir, "classification.json", _json_text(result), inventory)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(config: dict, out_dir=None, workers: int | None = None, base_dir=None, progress: bool = False) -> dict:
    """Execute a canonical configuration; returns the manifest (also written as ``manifest.json``).

    Numeric outputs depend only on the configuration (not on ``workers``).
    Failures inside a task are recorded in the manifest and re-raised as
    :class:`NumericalFailure` after the manifest is written.
    """
    config = copy.deepcopy(config)
    workers = int(workers or config.get("workers", 1))
    out_dir = Path(out_dir or config["output"]["dir"])
    base_dir = Path(base_dir or Path.cwd())
    out_dir.mkdir(parents=True, exist_ok=True)
    inventory, tasks = {}, []
    manifest = {"config_digest": config_digest(config), "version": __version__, "task": config["task"],
                "seed": config["seed"], "workers": workers, "started": _now()}
    _write(out_dir, "config.toml", serialize_config(config), inventory)
    failure = None
    try:
        task = config["task"]
        if task == "lambda-scan":
            _task_lambda_scan(config, out_dir, inventory, tasks, workers, progress)
        elif task == "fss-fit":
            _task_fss_fit(config, out_dir, inventory, tasks, workers, base_dir)
        elif task == "spectra":
            _task_spectra(config, out_dir, inventory, tasks, workers)
        elif task == "ginibre":
            _task_ginibre(config, out_dir, inventory, tasks, workers)
        elif task == "splitting":
            _task_splitting(config, out_dir, inventory, tasks, workers)
        elif task == "classify":
            _task_classify(config, out_dir, inventory, tasks, base_dir)
    except ConfigError:
        raise
    except (Exception, KeyboardInterrupt) as exc:
        failure = f"{type(exc).__name__}: {exc}"
        status = "cancelled" if isinstance(exc, KeyboardInterrupt) else f"failed: {failure}"
        tasks.append({"task": config["task"], "seed": config["seed"], "status": status})
        unexpected = exc
    else:
        unexpected = None
    manifest.update({"finished": _now(), "tasks": tasks, "outputs": dict(sorted(inventory.items())),
                     "status": "ok" if failure is None and all(t["status"] in ("ok", "not converged")
                                                               for t in tasks) else "failed"})
    (out_dir / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
    numeric = (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)
    if unexpected is not None and not isinstance(unexpected, numeric):
        raise unexpected
    if failure is not None or manifest["status"] != "ok":
        raise NumericalFailure(failure or "one or more tasks failed; see manifest.json")
    return manifest


# ------------------------------------------------------------------ commands
def _cmd_run(args) -> int:
    config, base_dir = load_config(args.config)
    manifest = run(config, out_dir=args.out, workers=args.workers, base_dir=base_dir, progress=args.verbose)
    out_dir = Path(args.out or config["output"]["dir"])
    report = out_dir / "report.txt"
    if report.exists():
        sys.stdout.write(report.read_text(encoding="utf-8"))
    print(f"wrote {len(manifest['outputs'])} files to {out_dir}", file=sys.stderr)
    return EXIT_OK


def _cmd_fit(args) -> int:
    try:
        data = ScalingDataset.read_csv(args.data)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"data: {exc}") from None
    orders = _orders([o for o in args.orders.split(";") if o], "--orders")
    points = [p for p in data.points() if args.L_min <= p.L <= args.L_max]
    meta = {"class": data.cls, "dim": data.dim, "energy": [data.energy.real, data.energy.imag]}
    reports = []
    for text in orders:
        try:
            result = fit(points, ExpansionOrder.parse(text), window=args.window, W_c_guess=args.W_c_guess)
        except ValueError as exc:
            raise NumericalFailure(str(exc)) from None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            confidence(result, points, n_resamples=args.resamples, seed=args.seed, workers=args.workers)
        reports.append(json.loads(result.to_json(meta)))
    payload = reports[0] if len(reports) == 1 else reports
    text = _json_text(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for rep in reports:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            print(report_row(rep), file=sys.stderr if not args.out else sys.stdout)
        for w in rep.get("warnings", []):
            print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def _cmd_classify(args) -> int:
    H = read_matrix_csv(args.matrix)
    ops = read_ops_json(args.ops)
    energy = None
    if args.energy is not None:
        try:
            energy = complex(args.energy.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"--energy: cannot parse {args.energy!r}") from None
    try:
        result = classify_matrix(H, ops, energy)
    except ConfigError:
        raise
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None
    sys.stdout.write(_json_text(result))
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        payload = json.loads(Path(args.fit).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"fit report: {exc}") from None
    reports = payload if isinstance(payload, list) else [payload]
    for rep in reports:
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                row = report_row(rep)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0] if exc.args else exc)) from None
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        print(row)
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(preset_text(args.name))
    else:
        for name in preset_names():
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="andloc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"andloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a TOML run configuration or a preset")
    p.add_argument("config", help="path to a TOML file or a preset name")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--verbose", action="store_true", help="progress on standard error")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("fit", help="finite-size-scaling fit of a Λ CSV")
    p.add_argument("data")
    p.add_argument("--orders", default="2,3,0,0", help="m1,n1,m2,n2; several separated by ';'")
    p.add_argument("--window", type=float, default=0.3)
    p.add_argument("--L-min", dest="L_min", type=int, default=2)
    p.add_argument("--L-max", dest="L_max", type=int, default=1_000_000)
    p.add_argument("--W-c-guess", dest="W_c_guess", type=float, default=None)
    p.add_argument("--resamples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="JSON output path (default: standard output)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("classify", help="symmetry class of a matrix")
    p.add_argument("matrix")
    p.add_argument("--ops", required=True)
    p.add_argument("--energy", default=None, help="reference energy, e.g. 0.5j")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("report", help="table row of a fit report")
    p.add_argument("fit")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("presets", help="list presets or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
