import json
import os

import numpy as np
import pytest

from holelab.cli import main
from holelab.io_utils import read_field, write_field


def run(args):
    return main(args)


def test_exponents_values(tmp_path, capsys):
    code = run(["exponents", "--d", "3", "--beta", "0.5",
                "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    payload = json.loads(out.split("exponents: ")[1])
    assert payload["delta"] == pytest.approx(0.8)
    assert payload["rate"] == pytest.approx(0.3)
    assert payload["k_exp"] == pytest.approx(0.4)
    assert payload["kappa"] == pytest.approx(0.2)
    with open(tmp_path / "exponents.json") as fh:
        assert json.load(fh)["delta"] == pytest.approx(0.8)


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"replicate": 0, "bogus_key": 1}))
    code = run(["sample", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2
    assert "bogus_key" in capsys.readouterr().err


def test_sample_byte_identical_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "spec": {"d": 3, "epsilon": 0.25, "process": "poisson", "lambda": 1.0,
                 "marks": {"kind": "pareto", "beta_eff": 0.5},
                 "domain": {"shape": "axis_cube", "half_width": 1.0},
                 "master_seed": 7},
        "replicate": 2}))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(["sample", "--config", str(cfg), "--out-dir", str(out1)]) == 0
    assert run(["sample", "--config", str(cfg), "--out-dir", str(out2)]) == 0
    a = (out1 / "configuration.csv").read_bytes()
    b = (out2 / "configuration.csv").read_bytes()
    assert a == b and len(a) > 100


def test_dry_run_writes_nothing(tmp_path, capsys):
    code = run(["partition", "--dry-run", "--out-dir", str(tmp_path / "x")])
    assert code == 0
    assert "would" in capsys.readouterr().out
    assert not (tmp_path / "x").exists()


def test_rates_degenerate_refused(tmp_path, capsys):
    # all-good regime: every bad-capacity sample is zero, the fit is refused
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "spec": {"d": 3, "epsilon": 0.125, "process": "lattice",
                 "marks": {"kind": "constant", "r": 1.0},
                 "domain": {"shape": "axis_cube", "half_width": 0.5},
                 "master_seed": 1},
        "quantity": "bad_capacity",
        "epsilon_grid": [1 / 8, 1 / 12, 1 / 16, 1 / 24],
        "replicates": 30,
        "delta": 0.8}))
    code = run(["rates", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2
    assert "positive" in capsys.readouterr().err


def test_partition_and_covering_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "spec": {"d": 3, "epsilon": 1 / 16, "process": "poisson", "lambda": 1.0,
                 "marks": {"kind": "pareto", "beta_eff": 0.5},
                 "domain": {"shape": "axis_cube", "half_width": 0.5},
                 "master_seed": 3}}))
    assert run(["partition", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    header = (tmp_path / "partition.csv").read_text().splitlines()[0]
    assert header == "index,class,rho,R"
    assert run(["covering", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    header = (tmp_path / "covering.csv").read_text().splitlines()[0]
    assert header.startswith("cell,anchor1")


def test_mecke_cli_small(tmp_path, capsys):
    code = run(["mecke", "--trials", "300", "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0 and "max |z|" in out
    assert (tmp_path / "mecke.csv").exists()


def test_field_binary_roundtrip(tmp_path):
    values = np.arange(27.0).reshape(3, 3, 3)
    path = str(tmp_path / "f.bin")
    write_field(path, values, 0.5)
    back, h = read_field(path)
    assert h == 0.5 and np.array_equal(back, values)
