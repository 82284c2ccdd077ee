import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ibmap import boundary_ops as bo
from ibmap import cli_io
from ibmap import scattering as sc
from ibmap.domain_model import Domain, build_boundary_grid
from ibmap.errors import ConfigurationError, MagicError, ShapeError, TruncationError, ValidationError


def write_config(tmp_path, **over):
    cfg = {"energy": 4.0, "alpha": math.pi / 2, "grid": {"n": 32, "n_r": 12, "n_theta": 48},
           "potential": {"kind": "gaussian_mixture", "amplitudes": [0.1], "centers": [[0.0, 0.0]],
                         "widths": [0.2]},
           "momenta": {"n_dirs": 4, "n_radii": 2}}
    cfg.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


# ---------------------------------------------------------- containers

def test_operator_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    cli_io.save_container(tmp_path / "a.ibm", "array", data, {"note": "x"})
    c = cli_io.load_container(tmp_path / "a.ibm")
    assert c.data.tobytes() == data.tobytes()
    assert c.kind == "array" and c.meta == {"note": "x"}


def test_impedance_map_round_trip(tmp_path):
    grid = build_boundary_grid(Domain(1.0), 16)
    M = bo.free_impedance_operator(1.0, 0.3, grid)
    cli_io.save(tmp_path / "m.ibm", M)
    back = cli_io.operator_from_container(cli_io.load_container(tmp_path / "m.ibm"))
    assert np.array_equal(back.kernel, M.kernel)
    assert back.delta_coeff == M.delta_coeff and back.alpha == M.alpha and back.energy == M.energy


def test_dataset_round_trip(tmp_path):
    ds = sc.ScatteringDataset(1.0, math.pi / 2)
    ds.add(sc.momentum_pair_real([1.0, 0.0], 1.0), 1e-3 - 2e-4j, 2.0, oracle=1.01e-3 - 2e-4j)
    cli_io.save(tmp_path / "d.ibm", ds)
    back = cli_io.dataset_from_container(cli_io.load_container(tmp_path / "d.ibm"))
    assert np.array_equal(back.to_array(), ds.to_array())
    assert back.entries[0]["oracle"] == ds.entries[0]["oracle"]


def test_bad_magic(tmp_path):
    p = tmp_path / "x.ibm"
    p.write_bytes(b"IBMX" + b"\0" * 16)
    with pytest.raises(MagicError):
        cli_io.load_container(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.ibm"
    cli_io.save_container(p, "array", np.ones((4, 4)))
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(TruncationError):
        cli_io.load_container(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "t.ibm"
    cli_io.save_container(p, "array", np.ones(3))
    p.write_bytes(p.read_bytes() + b"\0" * 8)
    with pytest.raises(ShapeError):
        cli_io.load_container(p)


def test_wrong_container_kind(tmp_path):
    cli_io.save_container(tmp_path / "a.ibm", "array", np.ones(3))
    with pytest.raises(ValidationError):
        cli_io.operator_from_container(cli_io.load_container(tmp_path / "a.ibm"))


# -------------------------------------------------------------- config

def test_unknown_config_keys_rejected():
    with pytest.raises(ConfigurationError):
        cli_io.RunConfig.from_dict({"energy": 1.0, "bogus": 1})
    with pytest.raises(ConfigurationError):
        cli_io.RunConfig.from_dict({"grid": {"n": 32, "m": 4}})


def test_config_defaults_and_types():
    cfg = cli_io.RunConfig.from_dict({"energy": 4})
    assert cfg["energy"] == 4 and cfg["grid"]["n"] == 128
    with pytest.raises(ConfigurationError):
        cli_io.RunConfig.from_dict({"energy": "4"})
    with pytest.raises(ConfigurationError):
        cli_io.RunConfig.from_dict({"route": "bogus"})


def test_report_rounding_is_three_digits():
    rep = cli_io.ReportDoc()
    rep.add("x", 1.23456e-7, 1e-6)
    assert rep.checks[0]["measured"] == 1.23e-7 and rep.verdict == "pass"
    rep.add("y", 2.0, 1.0)
    assert rep.verdict == "fail"


# ------------------------------------------------------------ commands

def test_exit_code_wellposedness(tmp_path):
    cfg = write_config(tmp_path, energy=0.0, potential={"kind": "zero"})
    assert cli_io.main(["--quiet", "simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_exit_code_unknown_suite(capsys):
    assert cli_io.main(["validate", "--suite", "bogus"]) == 2


def test_exit_code_bad_arguments():
    assert cli_io.main(["frobnicate"]) == 2


def test_exit_code_missing_file(tmp_path):
    assert cli_io.main(["simulate", "--config", str(tmp_path / "none.json")]) == 5


def test_simulate_zero_potential_matches_free_operator(tmp_path):
    cfg = write_config(tmp_path, potential={"kind": "zero"})
    assert cli_io.main(["--quiet", "simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    M = cli_io.operator_from_container(cli_io.load_container(tmp_path / "M_v.ibm"))
    M0 = bo.free_impedance_operator(4.0, math.pi / 2, M.grid)
    assert np.array_equal(M.kernel, M0.kernel)


def test_scatter_rejects_mismatched_alpha(tmp_path):
    cfg = write_config(tmp_path)
    assert cli_io.main(["--quiet", "simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    other = tmp_path / "other"
    other.mkdir()
    cfg2 = write_config(other, alpha=0.3)
    rc = cli_io.main(["--quiet", "scatter", "--config", str(cfg2), "--maps", str(tmp_path / "M_v.ibm"),
                      str(tmp_path / "M_v0.ibm"), "--out", str(other)])
    assert rc == 2


def test_pipeline_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path)
    base = ["--quiet"]
    assert cli_io.main(base + ["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rc = cli_io.main(base + ["scatter", "--config", str(cfg), "--maps", str(tmp_path / "M_v.ibm"),
                             str(tmp_path / "M_v0.ibm"), "--out", str(tmp_path), "--oracle"])
    assert rc == 0
    ds = cli_io.dataset_from_container(cli_io.load_container(tmp_path / "dataset.ibm"))
    assert len(ds) == 8 and all(e["oracle"] is not None for e in ds.entries)
    capsys.readouterr()
    cli_io.main(base + ["reconstruct", "--config", str(cfg), "--dataset", str(tmp_path / "dataset.ibm"),
                        "--out", str(tmp_path)])
    assert (tmp_path / "potential.ibm").exists()
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {c["name"] for c in rep["checks"]} == {"rel_l2", "support_localization"}


def test_greens_table_matches_library(tmp_path):
    from ibmap import greens
    t = cli_io.cmd_greens("free", 4.0, 2.0, 8)
    assert t.shape == (8, 3)
    assert complex(t[3, 1], t[3, 2]) == pytest.approx(greens.free_green_plus([t[3, 0], 0.0], 2.0), abs=1e-15)


def test_validate_is_deterministic_across_thread_counts(tmp_path):
    outs = []
    for n in ("1", "4"):
        env = dict(os.environ, IBM_THREADS=n)
        r = subprocess.run([sys.executable, "-m", "ibmap", "validate", "--suite", "symmetry"],
                           capture_output=True, env=env, check=True)
        outs.append(r.stdout)
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["verdict"] == "pass"


def test_bad_thread_setting(monkeypatch):
    monkeypatch.setenv("IBM_THREADS", "zero")
    assert cli_io.main(["validate", "--suite", "symmetry"]) == 2


def test_faddeev_table_matches_library():
    from ibmap import greens
    t = cli_io.cmd_greens("faddeev", 1.0, 2.0, 4)
    b = 1.0     # √max(0, -E) + 1
    k = greens.ComplexMomentum([math.sqrt(1.0 + b * b), 0.0], [0.0, b], 1.0)
    assert complex(t[2, 1], t[2, 2]) == pytest.approx(greens.faddeev_green([t[2, 0], 0.0], k), abs=1e-14)
