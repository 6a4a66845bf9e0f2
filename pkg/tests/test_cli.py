import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ncfcavity.cli import main, parse_range
from ncfcavity.design import CavityDesign, save_design


def run(tmp_path, *args, out="out"):
    code = main([*args, "--out", str(tmp_path / out)])
    return code, tmp_path / out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ncfcavity", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("spectrum", "emit", "sweep", "metrics", "calibrate"):
        assert cmd in res.stdout


def test_parse_range():
    assert parse_range("60:90") == [60, 70, 80, 90]
    assert parse_range("100:400:150") == [100, 250, 400]
    assert parse_range("5,7") == [5, 7]


@pytest.mark.parametrize("args", [["sweep", "--range", "9:1"], ["spectrum", "--window", "640:600"], ["frobnicate"]])
def test_bad_arguments_exit_2(tmp_path, args):
    assert main([*args, "--out", str(tmp_path)]) == 2


def test_missing_design_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code, _ = run(tmp_path, "spectrum", "--design", str(missing))
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_design_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grating_period": 244.0, "slat_thickness": 10.0}))
    assert run(tmp_path, "spectrum", "--design", str(bad))[0] == 2


def test_spectrum_both_profiles(tmp_path):
    design = tmp_path / "default.json"
    save_design(CavityDesign(), design)
    code, out = run(tmp_path, "spectrum", "--design", str(design), "--window", "600:640", "--samples", "801")
    assert code == 0
    for tag in ("ypol", "xpol"):
        rows = read_csv(out / f"spectrum_{tag}.csv")
        assert list(rows[0]) == ["wavelength_nm", "R", "T", "re_r", "im_r", "re_t", "im_t"]
        fit = json.loads((out / f"fit_{tag}.json").read_text())
        assert fit["regime"] in ("Over", "Critical", "Under")
    assert json.loads((out / "fit_ypol.json").read_text())["lambda0_nm"] == pytest.approx(620, abs=0.5)
    assert json.loads((out / "fit_xpol.json").read_text())["lambda0_nm"] == pytest.approx(619, abs=0.5)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["exit_code"] == 0 and prov["seed"] == 0
    assert set(prov["versions"]) >= {"ncfcavity", "numpy", "scipy", "python"}
    assert "spectrum_ypol.csv" in prov["outputs"]


def test_off_band_window_exit_3(tmp_path):
    code, out = run(tmp_path, "spectrum", "--profile", "ypol", "--window", "560:580", "--samples", "401")
    assert code == 3
    assert (out / "spectrum_ypol.csv").exists()
    assert "error" in json.loads((out / "fit_ypol.json").read_text())


def test_noise_mode_is_seeded(tmp_path):
    args = ["spectrum", "--profile", "ypol", "--samples", "801", "--noise", "0.01", "--seed", "7"]
    a = run(tmp_path, *args, out="a")[1] / "spectrum_noisy_ypol.csv"
    b = run(tmp_path, *args, out="b")[1] / "spectrum_noisy_ypol.csv"
    assert a.read_bytes() == b.read_bytes()


def test_emit_symmetric_lossless_is_flat_half(tmp_path):
    code, out = run(
        tmp_path, "emit", "--profile", "ypol", "--lossless", "--unguided-ratio", "0",
        "--n-in", "150", "--n-out", "150", "--samples", "401",
    )
    assert code == 0
    eta = np.array([float(r["eta_left"]) for r in read_csv(out / "emission_ypol.csv")])
    np.testing.assert_allclose(eta, 0.5, atol=1e-9)


def test_emit_default_family(tmp_path):
    code, out = run(tmp_path, "emit", "--profile", "ypol", "--samples", "401")
    assert code == 0
    rows = read_csv(out / "emission_ypol.csv")
    best = max(rows, key=lambda r: float(r["purcell"]))
    assert float(best["wavelength_nm"]) == pytest.approx(620, abs=0.5)
    assert 0.5 < float(best["eta_left"]) < 1


def test_emit_oracle_mode(tmp_path):
    code, out = run(
        tmp_path, "emit", "--profile", "ypol", "--n-in", "40", "--n-out", "60",
        "--samples", "201", "--oracle", "--oracle-points", "3",
    )
    assert code == 0
    rows = read_csv(out / "oracle_ypol.csv")
    assert len(rows) >= 3
    assert max(float(r["rel_diff_purcell"]) for r in rows) < 1e-3


def test_sweep_singleton_and_lossless(tmp_path):
    code, out = run(tmp_path, "sweep", "--profile", "ypol", "--kind", "n_in", "--range", "150", "--fixed", "400")
    assert code == 0
    rows = read_csv(out / "sweep_n_in_ypol.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    meta = json.loads((out / "sweep_n_in_ypol.json").read_text())
    assert meta["n_rows"] == 1
    code, out = run(
        tmp_path, "sweep", "--profile", "ypol", "--kind", "n_in", "--range", "60:220:80", "--lossless", out="lossless"
    )
    assert code == 0
    eta = [float(r["eta"]) for r in read_csv(out / "sweep_n_in_ypol.csv")]
    assert eta == sorted(eta)


def test_metrics_from_synthetic_points(tmp_path):
    pts = tmp_path / "pts.csv"
    kappas = np.arange(50, 401, 50)
    pts.write_text("kappa_ghz,r0\n" + "".join(f"{k},{float((1 - 50 / k) ** 2)!r}\n" for k in kappas))
    code, out = run(tmp_path, "metrics", "--profile", "ypol", "--points", str(pts))
    assert code == 0
    m = json.loads((out / "metrics_ypol.json").read_text())
    assert m["kappa_sc_ghz"] == pytest.approx(25.0, rel=1e-9)
    assert m["q_sc"] == pytest.approx(299792458 / (m["lambda0_nm"] * 1e-9) / 25e9, rel=1e-9)
    assert m["one_pass_loss_pct"] * m["finesse_sc"] == pytest.approx(100 * np.pi)


def test_metrics_monotone_in_loss(tmp_path):
    base = run(tmp_path, "metrics", "--profile", "ypol", out="base")[1]
    more = run(tmp_path, "metrics", "--profile", "ypol", "--slat-loss-scale", "2", out="more")[1]
    a = json.loads((base / "metrics_ypol.json").read_text())
    b = json.loads((more / "metrics_ypol.json").read_text())
    assert a["kappa_sc_ghz"] == pytest.approx(25.0, rel=0.1)
    assert b["kappa_sc_ghz"] > a["kappa_sc_ghz"]
    assert b["q_sc"] < a["q_sc"]


def test_calibrate_and_reuse(tmp_path):
    code, out = run(tmp_path, "calibrate", "--profile", "ypol", "--family", "100:400:100")
    assert code == 0
    cal = json.loads((out / "calibration.json").read_text())["profiles"]["YPol"]
    assert cal["kappa_sc_ghz"] == pytest.approx(25.0, rel=0.02)
    code, out2 = run(
        tmp_path, "spectrum", "--profile", "ypol", "--samples", "401", "--calibration", str(out / "calibration.json"),
        out="reuse",
    )
    assert code == 0
    prov = json.loads((out2 / "provenance.json").read_text())
    assert prov["slat_loss_overrides"]["YPol"] == pytest.approx(cal["slat_loss"])


def test_missing_calibration_file_exit_2(tmp_path):
    assert run(tmp_path, "spectrum", "--calibration", str(tmp_path / "none.json"))[0] == 2
