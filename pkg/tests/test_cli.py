import json
import subprocess
import sys

import numpy as np
import pytest

from slitqudit.cli import SCAN_COLUMNS, main, read_scan_csv
from slitqudit.config import read_config_text
from slitqudit.density import DensityOperator
from slitqudit.detection import NEAR_FIELD, ScanConfig, nearfield_scan, sample_counts
from slitqudit.errors import DataFormatError
from slitqudit.experiment import blocked_arm_patterns, reference_total
from slitqudit.pump import broad_arm2, focused_arm1
from slitqudit.states import TwoQuditState, synthesize

from conftest import REF_PHI, REF_SETUP, REF_SLITS

ARM1_ABS = np.array([[0.099, 0.699], [0.704, 0.077]])
ARM2_ABS = np.array([[0.483, 0.501], [0.502, 0.514]])


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def data_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    return header, np.array([[float(v) for v in l.split(",")] for l in lines[1:]])


def test_state_report(capsys):
    code, out, _ = run(capsys, "state")
    assert code == 0
    rep = json.loads(out)
    assert rep["phi_rad"] == pytest.approx(0.30808, abs=1e-5)
    assert rep["reference"]["concurrence_psi1"] == pytest.approx(1)
    assert rep["reference"]["concurrence_psi2"] == pytest.approx(0.303, abs=5e-4)
    assert rep["reference"]["fidelity_arm1_vs_psi1"] >= 0.999
    assert rep["mixture"]["purity"] == pytest.approx(0.8725, abs=2e-3)
    assert rep["seed"] == 20070501 and rep["config"]["aperture"]["spacing"] == 1.8e-4
    assert rep["labels"] == ["-", "+"]


def test_state_csv(capsys):
    code, out, _ = run(capsys, "state", "--format", "csv")
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0] == "quantity,value"
    table = {k: float(v) for k, v in (l.split(",") for l in lines[1:])}
    assert table["phi_rad"] == pytest.approx(0.30807, abs=1e-5)
    assert table["concurrence_arm1"] == pytest.approx(1, abs=1e-6)
    assert 0 < table["concurrence_mixture"] <= 0.8955


def test_arm2_weight_zero_is_pure(tmp_path, capsys):
    text, _ = read_config_text("paper-default")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text.replace("weight_arm1: 0.85", "weight_arm1: 1.0").replace("weight_arm2: 0.15", "weight_arm2: 0.0"))
    code, out, _ = run(capsys, "state", "--config", cfg)
    rep = json.loads(out)
    assert code == 0 and rep["mixture"]["purity"] == pytest.approx(1, abs=1e-12)
    assert rep["mixture"]["concurrence"] == pytest.approx(1, abs=1e-6)


def test_overlapping_slits_exit_2(tmp_path, capsys):
    text, _ = read_config_text("paper-default")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text.replace("spacing: 1.8e-4", "spacing: 8.0e-5"))
    code, out, err = run(capsys, "state", "--config", cfg)
    assert code == 2 and out == ""
    assert "aperture" in err and "2*half_width" in err


def test_unknown_key_exit_2(tmp_path, capsys):
    text, _ = read_config_text("paper-default")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text.replace("  seed: 20070501", "  seed: 20070501\n  sed: 1"))
    code, _, err = run(capsys, "scan", "--config", cfg)
    assert code == 2 and "counts.sed" in err and "line" in err


def test_bad_fixed_slit_exit_2(capsys):
    code, _, err = run(capsys, "scan", "--fixed-slit", "7")
    assert code == 2 and "slit" in err


def test_scan_outputs(capsys):
    _, out, _ = run(capsys, "scan", "--arm", "1", "--fixed-slit", "+")
    assert out.startswith("# command=scan")
    header, rows = data_rows(out)
    assert header == list(SCAN_COLUMNS)
    x, rate = rows[:, 0], rows[:, 1]
    peak = x[np.argmax(rate)]
    assert -135e-6 <= peak <= -45e-6
    # the focused pump leaves only rounding-level mass on (+, +)
    assert np.all(rate[x > 5.0001e-6] < 1e-12 * rate.max())
    assert np.all(rows[x > 5.0001e-6, 3] == 0)

    _, out, _ = run(capsys, "scan", "--arm", "2", "--fixed-slit", "+")
    _, rows = data_rows(out)
    at = lambda x0: rows[np.argmin(np.abs(rows[:, 0] - x0)), 1]
    assert at(90e-6) == pytest.approx(at(-90e-6), rel=0.01)

    _, out, _ = run(capsys, "scan", "--arm", "both", "--fixed-slit", "+")
    _, rows = data_rows(out)
    at = lambda x0: rows[np.argmin(np.abs(rows[:, 0] - x0)), 1]
    # exact for the synthesized arm states; the finite broad waist moves the
    # ideal 12.33 by about 0.1 %
    arm1 = np.abs(synthesize(focused_arm1(REF_SLITS), REF_SLITS, REF_SETUP).coeffs) ** 2
    arm2 = np.abs(synthesize(broad_arm2(REF_SLITS), REF_SLITS, REF_SETUP).coeffs) ** 2
    p = 0.85 * arm1 + 0.15 * arm2
    assert at(-90e-6) / at(90e-6) == pytest.approx(p[1, 0] / p[1, 1], rel=1e-9)
    assert at(-90e-6) / at(90e-6) == pytest.approx(12.33, rel=2e-3)


def test_outputs_byte_identical_under_seed(tmp_path, capsys):
    for cmd in (["scan", "--arm", "both"], ["state"], ["fringes", "--fix-idler", "1376e-6"]):
        a, b = tmp_path / "a.out", tmp_path / "b.out"
        assert main(cmd + ["--seed", "7", "--out", str(a)]) == 0
        assert main(cmd + ["--seed", "7", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
    main(["scan", "--seed", "8", "--out", str(b)])
    main(["scan", "--seed", "7", "--out", str(a)])
    assert a.read_bytes() != b.read_bytes()


def test_module_entry_point_subprocess(tmp_path):
    out = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "slitqudit", "scan", "--seed", "3", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    meta, cols = read_scan_csv(out)
    assert meta["seed"] == "3" and cols["counts"].sum() > 0


def test_fringes(capsys):
    _, out, _ = run(capsys, "fringes", "--fix-idler", "0", "--arm", "1")
    _, rows = data_rows(out)
    x, c = rows[:, 0], rows[:, 1]
    assert c.max() == 1.0 and x[np.argmax(c)] == pytest.approx(0, abs=1e-12)
    _, out, _ = run(capsys, "fringes", "--fix-idler", "1376e-6", "--arm", "1")
    _, rows = data_rows(out)
    assert rows[np.argmin(np.abs(rows[:, 0])), 1] < 0.01
    _, out, _ = run(capsys, "fringes", "--maximally-mixed", "--fix-idler", "1376e-6")
    _, rows = data_rows(out)
    env = np.sinc(2 * 45e-6 * rows[:, 0] / (826e-9 * 0.6)) ** 2
    np.testing.assert_allclose(rows[:, 1], env, atol=1e-12)


def test_sweep(capsys):
    # half-wave plate angles giving A = 1, 0.85 and 0.5
    angles = [0.0, np.arccos(np.sqrt(0.85)) / 2, np.pi / 8]
    code, out, _ = run(capsys, "sweep", "--key", "arms.hwp_angle", "--values", ",".join(str(float(a)) for a in angles))
    assert code == 0
    header, rows = data_rows(out)
    assert header[0] == "arms.hwp_angle" and "purity" in header
    np.testing.assert_allclose(rows[:, header.index("weight_A")], [1, 0.85, 0.5], atol=1e-12)
    purity = rows[:, header.index("purity")]
    assert purity[0] == pytest.approx(1) and purity[1] == pytest.approx(0.8725, abs=2e-3)
    assert np.all(np.diff(purity) < 0)
    code, out, _ = run(capsys, "sweep", "--key", "optics.crystal_to_slit", "--start", "0.1",
                       "--stop", "0.4", "--num", "4", "--format", "json")
    phis = [r["phi_rad"] for r in json.loads(out)["rows"]]
    assert phis[0] == pytest.approx(2 * phis[1]) and phis[0] == pytest.approx(4 * phis[3])
    assert run(capsys, "sweep", "--key", "optics.nothing", "--values", "1")[0] == 2
    assert run(capsys, "sweep", "--key", "optics.crystal_to_slit")[0] == 2


def _write_scan(path, rec, fixed):
    lines = [f"# command=scan", f"# fixed_slit={fixed}", f"# total_counts={rec.total_counts}",
             ",".join(SCAN_COLUMNS)]
    p = rec.pattern
    for row in zip(p.positions, p.coincidence_rate, p.singles_rate, rec.counts, rec.singles_counts):
        lines.append(",".join(f"{v:.17e}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _tabulated_arm_inputs(tmp_path, total=1_000_000, seed=12):
    """Blocked-arm scan files whose arm states carry the tabulated amplitudes."""
    states = (TwoQuditState.from_unnormalized(ARM1_ABS * np.exp(1j * REF_PHI * np.array([[0, 1], [1, 0]]))),
              TwoQuditState.from_unnormalized(ARM2_ABS * np.exp(1j * REF_PHI * np.array([[0, 1], [1, 0]]))))
    cfg = ScanConfig(NEAR_FIELD, np.linspace(-2e-4, 2e-4, 401), 50e-6)
    pats = blocked_arm_patterns(states, (0.85, 0.15), cfg, REF_SETUP, REF_SLITS)
    ref = reference_total(pats)
    streams = iter(np.random.SeedSequence(seed).spawn(6))
    files = {}
    for scenario, name in (("1", "arm1"), ("2", "arm2"), ("both", "both")):
        files[name] = []
        for fixed in "+-":
            rec = sample_counts(pats[scenario][fixed], total, np.random.default_rng(next(streams)),
                                reference_total=ref)
            path = tmp_path / f"{name}_{'p' if fixed == '+' else 'm'}.csv"
            _write_scan(path, rec, fixed)
            files[name].append(path)
    return files


def test_estimate_tabulated_arm_inputs(tmp_path, capsys):
    files = _tabulated_arm_inputs(tmp_path)
    out = tmp_path / "report.json"
    code, _, err = run(capsys, "estimate", "--arm1", *files["arm1"], "--arm2", *files["arm2"],
                       "--both", *files["both"], "--out", out)
    assert code == 0, err
    rep = json.loads(out.read_text())
    assert rep["weights"]["A"] == pytest.approx(0.85, abs=0.01)
    assert rep["weights"]["B"] == pytest.approx(0.15, abs=0.01)
    assert rep["arms"]["arm1"]["fidelity"]["psi1"] == pytest.approx(0.98, abs=0.01)
    assert rep["arms"]["arm2"]["fidelity"]["psi2"] == pytest.approx(1.00, abs=0.01)
    assert 0 < rep["arms"]["arm1"]["fidelity_bootstrap"]["psi1"]["std"] < 0.01
    assert rep["weights"]["A_bootstrap"]["std"] > 0
    amps = rep["arms"]["arm1"]["amplitudes"]
    assert amps["+-"] == pytest.approx(0.704, abs=5e-3)
    assert "model-assigned" in rep["arms"]["arm1"]["phases"]
    assert rep["config"]["counts"]["seed"] == rep["seed"]


def test_estimate_totals_only(capsys):
    code, out, _ = run(capsys, "estimate", "--totals", "850", "150", "1000")
    rep = json.loads(out)
    assert code == 0 and rep["weights"]["A"] == pytest.approx(0.85)
    assert run(capsys, "estimate", "--totals", "1", "1", "0")[0] == 1
    assert run(capsys, "estimate")[0] == 2


def test_estimate_noiseless_roundtrip(tmp_path, capsys):
    paths = []
    for fixed in "+-":
        p = tmp_path / f"s{fixed}.csv"
        main(["scan", "--arm", "1", "--fixed-slit", fixed, "--out", str(p)])
        paths.append(p)
    # replace sampled counts by the model rates so the record is noiseless
    for p in paths:
        meta, cols = read_scan_csv(p)
        text = p.read_text().splitlines(keepends=True)
        head = [l for l in text if l.startswith("#")] + [",".join(SCAN_COLUMNS) + "\n"]
        body = [",".join(f"{v:.17e}" for v in (x, r, s, r * 1e6, s * 1e6)) + "\n"
                for x, r, s in zip(cols["position_m"], cols["coincidence_rate_au"], cols["singles_rate_au"])]
        p.write_text("".join(head + body))
    code, out, _ = run(capsys, "estimate", "--arm1", *paths)
    rep = json.loads(out)
    assert rep["arms"]["arm1"]["fidelity"]["arm1_model"] == pytest.approx(1, abs=1e-9)


def test_truncated_csv(tmp_path, capsys):
    src = tmp_path / "s.csv"
    main(["scan", "--out", str(src)])
    text = src.read_text()
    cut = tmp_path / "cut.csv"
    cut.write_text(text[: len(text) - 30])
    with pytest.raises(DataFormatError, match=r"row \d+"):
        read_scan_csv(cut)
    code, _, err = run(capsys, "estimate", "--arm1", cut, src)
    assert code == 1 and "row" in err


def test_csv_format_errors(tmp_path):
    bad = tmp_path / "b.csv"
    bad.write_text("position_m,counts\n0.0,1\n1.0,x\n")
    with pytest.raises(DataFormatError, match="row 3"):
        read_scan_csv(bad)
    bad.write_text("position_m,counts\n1.0,1\n0.0,1\n")
    with pytest.raises(DataFormatError, match="ascending"):
        read_scan_csv(bad)
    bad.write_text("pos,counts\n1.0,1\n")
    with pytest.raises(DataFormatError, match="row 1"):
        read_scan_csv(bad)
    with pytest.raises(DataFormatError, match="cannot open"):
        read_scan_csv(tmp_path / "none.csv")
