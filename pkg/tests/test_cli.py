import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andloc import cli
from andloc.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    canonicalize,
    config_digest,
    load_config,
    main,
    parse_config,
    preset_names,
    preset_text,
    run,
    serialize_config,
)
from andloc.dataset import ScalingDataset

from synthetic import noisy_points

SCAN = """
task = "lambda-scan"
seed = 11

[model]
class = "AI"
dim = 2
L = [4]
W = [5.0]
energy = 0.0

[transfer]
max_slices = 2048
min_slices = 2048
"""

SCAN_WITH_FIT = """
task = "lambda-scan"
seed = 5

[model]
class = "AII"
dim = 2
L = [4, 6, 8]
W = {{ start = 3.0, stop = 5.0, num = 5 }}
energy = [0.0, 0.5]

[transfer]
max_slices = 4096
min_slices = 4096
target_rel_error = 0.5
spectrum = "half"

[fss]
orders = ["1,1,0,0", "1,2,0,0"]
window = 1.0
resamples = 8
{extra}
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _outputs(folder):
    return {p.name: p.read_bytes() for p in sorted(Path(folder).iterdir()) if p.name != "manifest.json"}


# ---------------------------------------------------------------- configuration
def test_minimal_scan(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, SCAN)), "--out", str(out)]) == EXIT_OK
    data = ScalingDataset.read_csv(out / "lambda.csv")
    assert len(data) == 1
    assert (out / "lambda.csv").read_text().splitlines()[0] == \
        "class,dim,E_re,E_im,W,L,lambda,sigma_lambda,slices,converged"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 11
    assert set(manifest["outputs"]) == {"config.toml", "lambda.csv"}
    assert manifest["config_digest"] == config_digest(parse_config(SCAN))


def test_seed_is_mandatory():
    with pytest.raises(ConfigError, match="seed"):
        parse_config(SCAN.replace("seed = 11", ""))


@pytest.mark.parametrize("old,new,field", [
    ('task = "lambda-scan"', 'task = "dance"', "config.task"),
    ('class = "AI"', 'class = "Q"', "model"),
    ("L = [4]", "L = [1]", "model.L"),
    ("max_slices = 2048", "max_slices = -3", "transfer"),
    ("min_slices = 2048", "min_slices = 2048\nbogus = 1", "transfer"),
    ("[transfer]", "[transfers]", "transfer"),
])
def test_config_errors_name_the_field(old, new, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(SCAN.replace(old, new))


def test_toml_syntax_error():
    with pytest.raises(ConfigError, match="TOML"):
        parse_config("task = ")


def test_defaults_are_filled():
    config = parse_config(SCAN)
    assert config["output"] == {"dir": "andloc-out"}
    assert config["workers"] == 1
    assert config["model"]["energy"] == [0.0, 0.0]


def test_W_range_expands():
    config = parse_config(SCAN_WITH_FIT.format(extra=""))
    assert config["model"]["W"] == [3.0, 3.5, 4.0, 4.5, 5.0]


_blocks = st.fixed_dictionaries({
    "task": st.just("lambda-scan"),
    "seed": st.integers(0, 2 ** 40),
    "workers": st.integers(1, 8),
    "model": st.fixed_dictionaries({
        "class": st.sampled_from(["AI", "AII", "AII†", "DIII"]),
        "dim": st.sampled_from([2, 3]),
        "L": st.lists(st.sampled_from([4, 6, 8, 10]), min_size=1, max_size=3, unique=True),
        "W": st.lists(st.floats(0.5, 30, allow_nan=False), min_size=1, max_size=4),
        "energy": st.one_of(st.floats(-2, 2), st.tuples(st.floats(-2, 2), st.floats(-2, 2)).map(list)),
    }),
    "transfer": st.fixed_dictionaries({
        "qr_interval": st.integers(1, 16),
        "max_slices": st.integers(100, 10 ** 6),
        "spectrum": st.sampled_from(["full", "half"]),
    }),
    "fss": st.fixed_dictionaries({"orders": st.lists(st.sampled_from(["2,3,0,0", "3,3,0,1"]), min_size=1,
                                                     max_size=2, unique=True),
                                  "resamples": st.integers(0, 500)}),
    "output": st.fixed_dictionaries({"dir": st.text("abc-_", min_size=1, max_size=8)}),
})


@settings(max_examples=60, deadline=None)
@given(_blocks)
def test_config_round_trip_is_fixed_point(raw):
    raw["transfer"]["min_slices"] = min(100, raw["transfer"]["max_slices"])
    config = canonicalize(raw)
    text = serialize_config(config)
    again = parse_config(text)
    assert again == config
    assert serialize_config(again) == text
    assert config_digest(again) == config_digest(config)


@pytest.mark.parametrize("name", preset_names())
def test_presets_load_and_round_trip(name):
    config, _ = load_config(name)
    assert parse_config(serialize_config(config)) == config
    assert config["output"]["dir"] == f"{name}-out"
    assert preset_text(name).startswith("#")


def test_presets_cover_table_rows():
    assert len(preset_names()) >= 9
    assert load_config("preset:table1-desk")[0]["model"]["class"] == "AII"


def test_unknown_config_source():
    assert main(["run", "no-such-preset"]) == EXIT_CONFIG


def test_presets_command(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "table1-desk" in capsys.readouterr().out.split()
    assert main(["presets", "table1-desk"]) == EXIT_OK
    assert 'task = "lambda-scan"' in capsys.readouterr().out


def test_argument_errors_exit_with_config_code():
    assert main(["run"]) == EXIT_CONFIG
    assert main(["unknown-command"]) == EXIT_CONFIG


# ---------------------------------------------------------------- running
def test_scan_with_fit_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, SCAN_WITH_FIT.format(extra=""))), "--out", str(out)]) == EXIT_OK
    names = set(_outputs(out))
    assert {"lambda.csv", "crossing.json", "fit-1100.json", "fit-1200.json", "report.txt"} <= names
    rows = (out / "report.txt").read_text().splitlines()
    assert len(rows) == 2 and rows[0].startswith("AII | 0.5i | 4-8 | (1,1,0,0)")
    assert capsys.readouterr().out.splitlines() == rows


def test_determinism_across_reruns_and_workers(tmp_path):
    config = parse_config(SCAN_WITH_FIT.format(extra=""))
    outs = {}
    for label, workers in (("a", 1), ("b", 1), ("c", 4)):
        run(config, out_dir=tmp_path / label, workers=workers)
        outs[label] = _outputs(tmp_path / label)
    assert outs["a"] == outs["b"] == outs["c"]
    manifests = [json.loads((tmp_path / k / "manifest.json").read_text()) for k in "ac"]
    assert manifests[0]["outputs"] == manifests[1]["outputs"]
    assert manifests[0]["config_digest"] == manifests[1]["config_digest"]


def test_fit_failure_is_numerical(tmp_path):
    text = SCAN_WITH_FIT.format(extra="").replace("L = [4, 6, 8]", "L = [4, 6]")
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_NUMERICAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert any(t["status"].startswith("failed") for t in manifest["tasks"])
    assert (out / "lambda.csv").exists()


def test_splitting_shortfall_is_numerical(tmp_path):
    text = 'task = "splitting"\nseed = 1\n[splitting]\nsamples = 1\nL = 4\nmin_count = 100000\n'
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_NUMERICAL
    assert json.loads((out / "manifest.json").read_text())["status"] == "failed"


def test_spectra_task(tmp_path):
    text = ('task = "spectra"\nseed = 2\n[model]\nclass = "AII"\ndim = 2\nL = [4]\nW = [1.0]\n'
            '[spectra]\nsamples = 3\n')
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_OK
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "re,im,ipr" and len(lines) == 1 + 3 * 32
    assert (out / "dos.csv").read_text().startswith("bin_lo,bin_hi,density")


def test_ginibre_task(tmp_path):
    text = 'task = "ginibre"\nseed = 3\n[ginibre]\nensemble = "GinSE"\nN = 20\nsamples = 2\n'
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["real_counts"] == [0, 0]


def test_fss_fit_task_and_fit_command(tmp_path, capsys):
    points = noisy_points(np.random.default_rng(0))
    header = "class,dim,E_re,E_im,W,L,lambda,sigma_lambda,slices,converged"
    rows = [f"AII,3,0.0,0.0,{p.W!r},{p.L},{p.lam!r},{p.sigma!r},1000,1" for p in points]
    data = _write(tmp_path, "\n".join([header] + rows) + "\n", "data.csv")
    text = 'task = "fss-fit"\nseed = 4\n[fss]\ndata = "data.csv"\norders = ["2,3,0,0"]\nresamples = 20\n'
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "fit-2300.json").read_text())
    assert report["W_c"] == pytest.approx(6.32, rel=1e-3)
    capsys.readouterr()

    fit_json = tmp_path / "fit.json"
    assert main(["fit", str(data), "--orders", "2,3,0,0", "--resamples", "20", "--out", str(fit_json)]) == EXIT_OK
    row = capsys.readouterr().out.strip()
    assert row.startswith("AII | 0 | 4-12 | (2,3,0,0)")
    assert main(["report", str(fit_json)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == row

    assert main(["fit", str(data), "--L-max", "6"]) == EXIT_NUMERICAL
    assert main(["fit", str(tmp_path / "missing.csv")]) == EXIT_CONFIG


def test_report_rejects_incomplete_json(tmp_path):
    path = _write(tmp_path, json.dumps({"order": [2, 3, 0, 0]}), "fit.json")
    assert main(["report", str(path)]) == EXIT_CONFIG


def _classify_files(tmp_path):
    H = np.array([[0.3, 1.2 - 0.4j], [0.7 + 2j, -0.1]])
    H = H + H.T  # complex symmetric: transpose symmetry with identity
    matrix = "\n".join(",".join(repr(complex(x)) for x in row) for row in H)
    ops = [{"kind": "TRS†", "unitary": [[1, 0], [0, 1]], "sign": 1}]
    return _write(tmp_path, matrix, "H.csv"), _write(tmp_path, json.dumps(ops), "ops.json")


def test_classify_command(tmp_path, capsys):
    matrix, ops = _classify_files(tmp_path)
    assert main(["classify", str(matrix), "--ops", str(ops)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["class"] == "AI†"
    assert result["residuals"][0]["residual"] < 1e-12


def test_classify_task(tmp_path):
    _classify_files(tmp_path)
    text = 'task = "classify"\nseed = 0\n[classify]\nmatrix = "H.csv"\nops = "ops.json"\n'
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, text)), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "classification.json").read_text())["class"] == "AI†"


def test_classify_shape_mismatch(tmp_path):
    matrix, _ = _classify_files(tmp_path)
    ops = _write(tmp_path, json.dumps([{"kind": "TRS", "unitary": [[1]], "sign": 1}]), "bad.json")
    assert main(["classify", str(matrix), "--ops", str(ops)]) == EXIT_CONFIG


def test_interrupt_leaves_partial_manifest(tmp_path, monkeypatch):
    def interrupted(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(cli, "lambda_scan", interrupted)
    out = tmp_path / "out"
    with pytest.raises(KeyboardInterrupt):
        run(parse_config(SCAN), out_dir=out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tasks"][-1]["status"] == "cancelled"
    assert "config.toml" in manifest["outputs"]
