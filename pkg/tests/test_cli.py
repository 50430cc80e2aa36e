import datetime
import json
import subprocess
import sys

import numpy as np
import pytest

from holee import io as hio
from holee.cli import main, parse_node_spec
from holee.errors import ValidationError
from holee.factors import simplex_factor
from holee.volstruct import CoarseVolMatrix

DT = 0.25
H = 20


def write_curve(path, F0=None, dt=DT, H=H):
    F0 = np.full(H, 0.03) if F0 is None else F0
    path.write_text("T,F0\n" + "".join(f"{i * dt!r},{float(f)!r}\n" for i, f in enumerate(F0)))
    return path


def write_vol(path, sigma, mu=None, tenors=(0.0, 1.0, 5.0)):
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    mu = np.zeros(len(sigma)) if mu is None else mu
    path.write_text(hio.write_vol_csv(CoarseVolMatrix(tenors, sigma, mu)))
    return path


def write_cf(path, rows):
    path.write_text("T,amount\n" + "".join(f"{T},{a}\n" for T, a in rows))
    return path


@pytest.fixture
def bundle(tmp_path):
    vol = write_vol(tmp_path / "vol.csv", [[0.01, 0.004], [0.008, -0.003]])
    curve = write_curve(tmp_path / "curve.csv", 0.03 + 0.001 * np.arange(H) * DT)
    out = tmp_path / "model.json"
    assert main(["build", str(vol), str(curve), "--dt", str(DT), "--out", str(out)]) == 0
    return out


def test_build_zero_vol_flat_curve(tmp_path):
    vol = write_vol(tmp_path / "vol.csv", [[0.0], [0.0]])
    curve = write_curve(tmp_path / "c.csv")
    out = tmp_path / "m.json"
    assert main(["build", str(vol), str(curve), "--dt", "0.25", "--out", str(out)]) == 0
    b = json.loads(out.read_text())
    assert b["verification"]["max_error"] <= 1e-10 and b["drift_source"] == "stationary"
    assert np.all(np.array(b["mu"]) == 0)


def test_build_records_verification(bundle):
    b = json.loads(bundle.read_text())
    assert b["verification"]["max_error"] <= 1e-10
    assert b["verification"]["depth"] == H
    assert b["n"] == 2


def test_build_rejects_bad_csv_drift(tmp_path, capsys):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]], mu=[0.001, 0.002])
    curve = write_curve(tmp_path / "c.csv")
    assert main(["build", str(vol), str(curve), "--dt", "0.25", "--use-csv-drift"]) == 2
    assert "per-level errors" in capsys.readouterr().err


def test_build_curve_grid_mismatch(tmp_path):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]])
    curve = write_curve(tmp_path / "c.csv", dt=0.5, H=10)
    assert main(["build", str(vol), str(curve), "--dt", "0.25"]) == 2


def test_missing_file_is_io_error(tmp_path):
    curve = write_curve(tmp_path / "c.csv")
    assert main(["build", str(tmp_path / "nope.csv"), str(curve), "--dt", "0.25"]) == 3


def test_malformed_csv_line_numbers(tmp_path, capsys):
    vol = tmp_path / "vol.csv"
    vol.write_text("tenor,mu,sigma1\n0.0,0,0.01\n1.0,0,abc\n")
    assert main(["build", str(vol), str(write_curve(tmp_path / "c.csv")), "--dt", "0.25"]) == 2
    assert ":3:" in capsys.readouterr().err
    vol.write_text("tenor,sigma1\n0.0,0.01\n")
    assert main(["build", str(vol), str(tmp_path / "c.csv"), "--dt", "0.25"]) == 2
    assert "'mu'" in capsys.readouterr().err


def test_vol_anchor_row_must_match(tmp_path, capsys):
    vol = tmp_path / "vol.csv"
    vol.write_text("tenor,mu,sigma1\n0.0,0,0.02\n1.0,0,0.01\n5.0,0,0.01\n")
    assert main(["build", str(vol), str(write_curve(tmp_path / "c.csv")), "--dt", "0.25"]) == 2
    assert "anchor" in capsys.readouterr().err


def test_vol_csv_round_trip(tmp_path):
    c = CoarseVolMatrix([0.0, 1.0, 2.5], [[0.1 / 3, -0.02], [0.2 / 7, 0.0]], [1e-4, -3e-5])
    p = tmp_path / "v.csv"
    p.write_text(hio.write_vol_csv(c))
    back = hio.read_vol_csv(p)
    assert np.array_equal(back.sigma, c.sigma) and np.array_equal(back.mu, c.mu)


def test_config_file_and_override(tmp_path):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]])
    curve = write_curve(tmp_path / "c.csv")
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# engine settings\ndt = 0.25\ntol=1e-10\n")
    out = tmp_path / "m.json"
    assert main(["build", str(vol), str(curve), "--config", str(cfg), "--out", str(out)]) == 0
    cfg.write_text("dt = 0.3\n")  # off-grid tenors: invalid unless overridden
    assert main(["build", str(vol), str(curve), "--config", str(cfg)]) == 2
    assert main(["build", str(vol), str(curve), "--config", str(cfg), "--dt", "0.25", "--out", str(out)]) == 0
    cfg.write_text("dt\n")
    assert main(["build", str(vol), str(curve), "--config", str(cfg)]) == 2


def test_missing_required_setting(tmp_path, capsys):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]])
    assert main(["build", str(vol), str(write_curve(tmp_path / "c.csv"))]) == 2
    assert "--dt" in capsys.readouterr().err


def test_verify(bundle, tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", str(bundle), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["ok"] and rep["max_error"] <= 1e-10
    assert len(rep["level_errors"]) == rep["depth"]
    assert all(abs(sum(pi) - 1) < 1e-12 for pi in rep["kernels"][1]["pi"])
    assert max(rep["nas"].values()) <= 1e-12


def test_verify_flags_tampered_bundle(bundle):
    b = json.loads(bundle.read_text())
    b["mu"][3] += 1e-3
    bundle.write_text(json.dumps(b))
    assert main(["verify", str(bundle)]) == 2


def test_price_zero_curve_sums_amounts(tmp_path, capsys):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]])
    curve = write_curve(tmp_path / "c.csv", np.zeros(H))
    m = tmp_path / "m.json"
    assert main(["build", str(vol), str(curve), "--dt", "0.25", "--out", str(m)]) == 0
    cf = write_cf(tmp_path / "cf.csv", [(1.0, 5), (2.5, 5), (4.0, 105)])
    capsys.readouterr()
    assert main(["price", str(m), str(cf)]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    # zero initial curve, but the drift moves off-root nodes; at the root the sum is exact
    assert last.startswith("total,,,") and float(last.split(",")[-1]) == pytest.approx(115.0, abs=1e-12)


def test_sens_affine_reproduces_classical_duration(tmp_path, capsys):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.01]])
    curve = write_curve(tmp_path / "c.csv")
    m = tmp_path / "m.json"
    assert main(["build", str(vol), str(curve), "--dt", "0.25", "--out", str(m)]) == 0
    cf = write_cf(tmp_path / "cf.csv", [(1.0, 5), (3.0, 105)])
    capsys.readouterr()
    assert main(["sens", str(m), str(cf), "--node", "t=2:counts=1,1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["gen_durations"][0] == pytest.approx(0.01 * rep["duration"], rel=1e-10)
    assert rep["node"] == {"step": 2, "counts": [1, 1]}


def test_node_spec_parsing():
    assert parse_node_spec("t=3:counts=1,0,2", 2) == (3, (1, 0, 2))
    for bad in ("t=3:counts=1,1", "3:1,1,1", "t=3;counts=1,1,1", "t=2:counts=1,1,1", "t=x:counts=1"):
        with pytest.raises(ValidationError):
            parse_node_spec(bad, 2)


def test_node_outside_lattice(bundle, tmp_path):
    cf = write_cf(tmp_path / "cf.csv", [(4.5, 1)])
    assert main(["price", str(bundle), str(cf), "--node", "t=99:counts=33,33,33"]) == 2
    assert main(["price", str(bundle), str(cf), "--node", "t=2:counts=1,2"]) == 2


def test_hedge(bundle, tmp_path, capsys):
    target = write_cf(tmp_path / "t.csv", [(1.0, 4), (4.0, 104)])
    h1 = write_cf(tmp_path / "h1.csv", [(2.0, 100)])
    h2 = write_cf(tmp_path / "h2.csv", [(4.5, 100)])
    capsys.readouterr()
    assert main(["hedge", str(bundle), str(target), str(h1), str(h2)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "instrument,weight" and len(lines) == 3
    # the same instrument twice cannot span two factors
    assert main(["hedge", str(bundle), str(target), str(h1), str(h1)]) == 2


def test_limit_table(tmp_path, capsys):
    vol = write_vol(tmp_path / "vol.csv", [[0.01], [0.02]], tenors=(0.0, 1.0, 2.0))
    capsys.readouterr()
    assert main(["limit", str(vol), "--dt", "0.125", "--levels", "3", "--t", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "T,T2,dt,drift_err,mean_err,var_err"
    assert len(lines) == 1 + 3  # only the bucket starting after t


def history_text(rows):
    return "date,F_1,F_2\n" + "".join(f"{d},{a},{b}\n" for d, a, b in rows)


def test_calibrate_zero_increments(tmp_path):
    h = tmp_path / "h.csv"
    h.write_text(history_text([("2020-01-01", 0.03, 0.04), ("2020-01-08", 0.03, 0.04), ("2020-01-15", 0.03, 0.04)]))
    out = tmp_path / "v.csv"
    assert main(["calibrate", str(h), "--dt", "0.25", "--tenors", "0,1,2", "--factors", "1", "--out", str(out)]) == 0
    c = hio.read_vol_csv(out)
    assert np.all(c.sigma == 0)
    assert (tmp_path / "v.csv.report.json").exists()


def test_calibrate_selects_two_factors(tmp_path):
    A = np.array([[0.010, 0.004], [0.011, 0.001], [0.009, -0.002]])
    dw = np.tile(simplex_factor(2, 0.25).outcomes, (40, 1))
    levels = 0.03 + np.vstack([np.zeros(3), np.cumsum(dw @ A.T, axis=0)])
    dates = [datetime.date(2001, 1, 1) + datetime.timedelta(days=7 * i) for i in range(len(levels))]
    h = tmp_path / "h.csv"
    h.write_text(hio.write_history_csv(dates, levels))
    out = tmp_path / "v.csv"
    assert main(["calibrate", str(h), "--dt", "0.25", "--tenors", "0,1,2,5", "--theta", "0.99", "--out", str(out)]) == 0
    assert hio.read_vol_csv(out).n == 2


def test_calibrate_rejects_bad_history(tmp_path, capsys):
    h = tmp_path / "h.csv"
    h.write_text(history_text([("2020-01-01", 0.03, 0.04), ("2020-01-08", 0.03, 0.04), ("2020-01-16", 0.03, 0.04)]))
    assert main(["calibrate", str(h), "--dt", "0.25", "--tenors", "0,1,2", "--factors", "1"]) == 2
    assert "equally spaced" in capsys.readouterr().err
    h.write_text(history_text([("2020-01-01", 0.03, 0.04), ("01/08/2020", 0.03, 0.04)]))
    assert main(["calibrate", str(h), "--dt", "0.25", "--tenors", "0,1,2", "--factors", "1"]) == 2
    assert ":3:" in capsys.readouterr().err
    h.write_text("date,G_1\n2020-01-01,0.1\n")
    assert main(["calibrate", str(h), "--dt", "0.25", "--tenors", "0,1"]) == 2


def test_simulate_is_deterministic(bundle, tmp_path):
    a, b, c = (tmp_path / f"{x}.csv" for x in "abc")
    assert main(["simulate", str(bundle), "--steps", "50", "--seed", "7", "--out", str(a)]) == 0
    assert main(["simulate", str(bundle), "--steps", "50", "--seed", "7", "--out", str(b)]) == 0
    assert main(["simulate", str(bundle), "--steps", "50", "--seed", "8", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    dates, levels = hio.read_history_csv(a)
    assert levels.shape == (51, 2)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "holee", "verify", str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert r.returncode == 3 and "error:" in r.stderr
