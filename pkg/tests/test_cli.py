import json

import numpy as np
import pytest
import yaml

from hoibc.cli import EXIT_INVALID, EXIT_OK, EXIT_SOLVER, main
from hoibc.postprocess import RcsCurve

SMALL = {
    "name": "cli-small",
    "mesh": {"generator": "icosphere", "radius": 0.3, "subdivisions": 1},
    "wavelength": 1.0,
    "coating": {"eps_r": 5, "mu_r": 1, "thickness": 0.0075},
    "boundary_condition": "hoibc",
    "solver": {"mode": "dense-lu"},
    "output": {"bistatic": {"start": 0, "stop": 180, "step": 10, "planes": ["E-plane"]},
               "monostatic": {"start": 0, "stop": 90, "step": 45}, "plots": False},
}


def _write(tmp_path, raw, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def test_solve_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--output-dir", str(a)]) == EXIT_OK
    assert main(["solve", "--config", cfg, "--output-dir", str(b), "--threads", "1"]) == EXIT_OK
    for f in ("bistatic_E-plane.csv", "coefficients.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["config_hash"] and rep["mesh"]["edges"] == 120
    assert rep["solver"]["converged"] and rep["solver"]["relative_residual"] < 1e-10
    assert {"r1", "r2"} <= set(rep["coefficients"]["uniqueness"])
    curve = RcsCurve.from_csv(a / "bistatic_E-plane.csv")
    assert curve.theta_deg.size == 19 and curve.metadata["config_hash"] == rep["config_hash"]


def test_invalid_config_exit_2(tmp_path, capsys):
    raw = dict(SMALL, coating={"eps_r": 5, "mu_r": 1, "thickness": -0.1})
    assert main(["solve", "--config", _write(tmp_path, raw), "--output-dir", str(tmp_path)]) == EXIT_INVALID
    assert "coating.thickness" in capsys.readouterr().err
    assert main(["solve", "--output-dir", str(tmp_path)]) == EXIT_INVALID
    assert main(["coeffs", "--config", str(tmp_path / "nope.yaml")]) == EXIT_INVALID
    assert main(["mesh-info", str(tmp_path / "nope.off")]) == EXIT_INVALID


def test_nonconvergence_exit_3(tmp_path, capsys):
    raw = dict(SMALL, solver={"mode": "gmres", "tol": 1e-12, "max_iter": 2, "preconditioner": "none"},
               hmatrix={"enabled": False})
    assert main(["solve", "--config", _write(tmp_path, raw), "--output-dir", str(tmp_path)]) == EXIT_SOLVER
    assert "did not converge" in capsys.readouterr().err


def test_mesh_info_and_coeffs(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["mesh-info", "--config", cfg]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["edges"] == 120
    assert main(["coeffs", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "coefficients.json").read_text())
    assert set(rep["coefficients"]["normalized"]) == {"a0", "a1", "a2", "b1", "b2"}


def test_mie_sweep_compare(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["mie", "--config", cfg, "--output-dir", str(tmp_path / "mie")]) == EXIT_OK
    names = {p.name for p in (tmp_path / "mie").iterdir()}
    assert {"mie_exact.csv", "mie_sibc.csv", "mie_hoibc.csv"} <= names
    assert main(["sweep", "--config", cfg, "--output-dir", str(tmp_path / "sw")]) == EXIT_OK
    mono = RcsCurve.from_csv(tmp_path / "sw" / "monostatic.csv")
    assert np.all(np.isfinite(mono.sigma["theta-theta"]))
    a = tmp_path / "mie" / "mie_exact.csv"
    assert main(["compare", str(a), str(a), "--output-dir", str(tmp_path / "cmp")]) == EXIT_OK
    s = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
    assert s["rms_db"] == 0.0
    # doubled curve: 3.0103 dB everywhere
    c = RcsCurve.from_csv(a)
    RcsCurve(c.theta_deg, c.phi_deg, {k: 2 * v for k, v in c.sigma.items()}).to_csv(tmp_path / "x2.csv")
    assert main(["compare", str(tmp_path / "x2.csv"), str(a), "--output-dir", str(tmp_path / "cmp2")]) == EXIT_OK
    s = json.loads((tmp_path / "cmp2" / "comparison.json").read_text())
    assert s["rms_db"] == pytest.approx(3.0103, abs=1e-4)
    shifted = RcsCurve(c.theta_deg + 0.5, c.phi_deg, c.sigma)
    shifted.to_csv(tmp_path / "sh.csv")
    assert main(["compare", str(tmp_path / "sh.csv"), str(a), "--output-dir", str(tmp_path)]) == EXIT_INVALID


def test_plots_written(tmp_path):
    raw = dict(SMALL, output=dict(SMALL["output"], plots=True))
    out = tmp_path / "p"
    assert main(["solve", "--config", _write(tmp_path, raw), "--output-dir", str(out)]) == EXIT_OK
    png = (out / "bistatic_rcs.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_hmatrix_solve_writes_partition(tmp_path):
    raw = dict(SMALL, mesh={"generator": "icosphere", "radius": 0.3, "subdivisions": 2},
               solver={"mode": "gmres", "tol": 1e-6}, hmatrix={"leaf_size": 16},
               output=dict(SMALL["output"], plots=True))
    out = tmp_path / "h"
    assert main(["solve", "--config", _write(tmp_path, raw), "--output-dir", str(out)]) == EXIT_OK
    assert (out / "partition.csv").exists() and (out / "partition.png").exists()
