import json
import os

import numpy as np
import pytest
import yaml

from paramrom import ConfigurationError
from paramrom.cache import CACHE_ENV, SnapshotCache, cache_dir, snapshot_key
from paramrom.cli import main
from paramrom.config import STUDIES, apply_overrides, load_config, parse_override

LOW = {"kind": "convergence-low", "name": "low", "settings": {"t_grids": [3, 5], "x_grids": [4, 6, 8], "t_samples": 5}}
HIGH = {
    "kind": "convergence-high",
    "name": "high",
    "settings": {"n_t": 3, "M_values": [40, 80, 120], "x_grids": [4, 6], "n_networks": 2,
                 "mc_samples": 50, "mc_repeats": 1, "mc_batch": 25},
}
REC = {
    "kind": "reconstruct",
    "name": "rec",
    "settings": {"n_t": 2, "mesh": 6, "reference_mesh": 8, "J": 20, "M": 80, "pixels": [3], "coverage": [1.0, 0.36],
                 "noise": [0.05], "weighted": [False, True], "max_iter": 5, "potential_grid": 20},
}


def _write(tmp_path, d, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(d))
    return str(path)


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_override():
    assert parse_override("settings.noise=[0.02, 0.05]") == (["settings", "noise"], [0.02, 0.05])
    assert parse_override("seed=3") == (["seed"], 3)
    with pytest.raises(ConfigurationError):
        parse_override("seed")
    d = apply_overrides({"settings": {"a": 1}}, ["settings.b=x", "n_jobs=2"])
    assert d == {"settings": {"a": 1, "b": "x"}, "n_jobs": 2}


def test_load_config_from_study_with_overrides():
    cfg = load_config(study="table2-desk", overrides=["settings.n_networks=2"], seed=9)
    assert cfg.kind == "convergence-high" and cfg.name == "table2-desk"
    assert cfg.settings.n_networks == 2 and cfg.settings.M_values == [200, 400, 1000, 2000]
    assert cfg.seed == 9


def test_unknown_study_lists_names():
    with pytest.raises(ConfigurationError) as exc:
        load_config(study="table9")
    for name in STUDIES:
        assert name in str(exc.value)


@pytest.mark.parametrize(
    "override",
    ["settings.bogus=1", "settings.M=10", "settings.coverage=[1.5]", "settings.noise=[0.0]", "seed=-1", "extra=1"],
)
def test_invalid_reconstruction_configs(override):
    with pytest.raises(ConfigurationError):
        load_config(study="exp4-desk", overrides=[override])


def test_kind_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        load_config(study="table1", kind="reconstruct")


def test_registered_studies_validate():
    for name in STUDIES:
        assert load_config(study=name).name == name


def test_snapshot_cache_hit_and_stale(tmp_path):
    cache = SnapshotCache(str(tmp_path))
    key = snapshot_key({"n": 5}, ["c"], "u", np.eye(2))
    assert key != snapshot_key({"n": 6}, ["c"], "u", np.eye(2))
    calls = []

    def compute():
        calls.append(1)
        return np.arange(6.0).reshape(2, 3)

    a = cache.get_or_compute(key, compute)
    b = cache.get_or_compute(key, compute)
    assert np.array_equal(a, b) and len(calls) == 1
    assert cache.stats() == {"hits": 1, "misses": 1, "rejected": 0}
    # corrupt the stored array: the digest no longer matches
    npy = [f for f in os.listdir(tmp_path) if f.endswith(".npy")][0]
    np.save(tmp_path / npy, np.zeros((2, 3)))
    c = cache.get_or_compute(key, compute)
    assert np.array_equal(c, a) and len(calls) == 2
    assert cache.rejected == 1


def test_cache_dir_precedence(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)
    assert cache_dir(None, "d") == "d"
    assert cache_dir("c", "d") == "c"
    monkeypatch.setenv(CACHE_ENV, "e")
    assert cache_dir("c", "d") == "e"


def _csv_bytes(out):
    files = {}
    for root, _, names in os.walk(out):
        if ".cache" in root:
            continue
        for n in names:
            if n.endswith(".csv"):
                p = os.path.join(root, n)
                files[os.path.relpath(p, out)] = open(p, "rb").read()
    return files


@pytest.mark.parametrize("cfg", [LOW, HIGH, REC], ids=["low", "high", "rec"])
def test_cli_runs_are_byte_identical(tmp_path, capsys, monkeypatch, cfg):
    monkeypatch.delenv(CACHE_ENV, raising=False)
    path = _write(tmp_path, cfg)
    outs = []
    for i in range(2):
        out = str(tmp_path / f"run{i}")
        code, stdout, err = _run([cfg["kind"], "--config", path, "--out", out, "--no-figures"], capsys)
        assert code == 0, err
        summary = json.loads(stdout)
        assert summary["kind"] == cfg["kind"]
        outs.append(out)
    a, b = _csv_bytes(outs[0]), _csv_bytes(outs[1])
    assert a and a == b
    m = [json.load(open(os.path.join(o, "manifest.json"))) for o in outs]
    assert m[0]["content_hash"] == m[1]["content_hash"]
    assert any(n.startswith("plot_") and n.endswith(".py") for n in os.listdir(outs[0]))


def test_manifest_reproduces_run(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)
    first = str(tmp_path / "a")
    code, _, err = _run(["convergence-low", "--config", _write(tmp_path, LOW), "--out", first, "--seed", "4"], capsys)
    assert code == 0, err
    manifest = json.load(open(os.path.join(first, "manifest.json")))
    assert manifest["config"]["seed"] == 4
    for key in ("package_version", "git_revision", "seeds", "outputs", "runtime_seconds", "snapshot_cache"):
        assert key in manifest
    assert manifest["outputs"]["figures"] == ["error_vs_h.png", "heatmap.png"]
    assert all(os.path.exists(os.path.join(first, p)) for p in manifest["outputs"]["figures"])
    second = str(tmp_path / "b")
    code, _, err = _run(["convergence-low", "--config", os.path.join(first, "manifest.json"), "--out", second], capsys)
    assert code == 0, err
    assert _csv_bytes(first) == _csv_bytes(second)
    # the second run reuses nothing, but a third into the same directory hits the cache
    code, _, _ = _run(["convergence-low", "--config", os.path.join(first, "manifest.json"), "--out", second], capsys)
    assert json.load(open(os.path.join(second, "manifest.json")))["snapshot_cache"]["hits"] > 0


def test_convergence_outputs(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)
    out = str(tmp_path / "o")
    code, _, err = _run(["convergence-low", "--config", _write(tmp_path, LOW), "--out", out, "--no-figures"], capsys)
    assert code == 0, err
    lines = open(os.path.join(out, "errors_table.csv")).read().splitlines()
    assert lines[0].split(",")[1:] == ["4x4", "6x6", "8x8"]
    assert len(lines) == 3
    values = [float(v) for v in lines[1].split(",")[1:]]
    assert all(np.isfinite(values)) and all(v > 0 for v in values)


def test_cli_config_error_record(tmp_path, capsys):
    code, _, err = _run(["reconstruct", "--study", "nope", "--out", str(tmp_path)], capsys)
    assert code == 2
    record = json.loads(err.strip().splitlines()[-1])
    assert record["error"] == "configuration" and "table1" in record["message"]
    code, _, err = _run(["reconstruct", "--study", "exp4-desk", "--set", "settings.noise=[0.0]", "--out", str(tmp_path)],
                        capsys)
    assert code == 2 and "weighted" in json.loads(err)["message"]
    code, _, err = _run(["reconstruct"], capsys)
    assert code == 2


def test_cli_io_error_record(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = _run(["convergence-low", "--config", _write(tmp_path, LOW), "--out", str(blocker / "sub")], capsys)
    assert code == 4
    assert json.loads(err)["error"] == "io"


def test_cli_studies(capsys):
    code, out, _ = _run(["studies"], capsys)
    assert code == 0
    assert "exp2-desk" in out and "table1-reduced" in out


def test_cli_verify(tmp_path, capsys):
    code, out, _ = _run(["verify", "--suite", "fem", "--suite", "measurement", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert all(line.startswith("PASS") for line in out.strip().splitlines())
    rows = open(tmp_path / "verify.csv").read().splitlines()
    assert rows[0] == "suite,check,passed,value,threshold"
    assert len(rows) == len(out.strip().splitlines()) + 1
