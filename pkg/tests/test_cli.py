import io
import json

import pytest

from artifact import cli
from artifact.cli import EXIT_CAP, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main


def run(*argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


@pytest.fixture
def z_target(tmp_path):
    p = tmp_path / "z.txt"
    p.write_text("n=1; -0.25 Z0\n")  # diag(-0.25, 0.25)
    return p


def test_explain_lists_stages():
    code, text = run("explain")
    assert code == EXIT_PASS
    assert all(name in text for name, _ in cli.STAGES)


def test_malformed_target_exits_2(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("n=2; 1.0 X0 X5\n")
    assert run("verify", bad, "--out", tmp_path)[0] == EXIT_USAGE


def test_unknown_flag_exits_2():
    assert run("verify", "--no-such-flag")[0] == EXIT_USAGE
    assert run("verify", "--mode", "3d")[0] == EXIT_USAGE


def test_verify_without_target_exits_2(tmp_path):
    assert run("verify", "--out", tmp_path)[0] == EXIT_USAGE


def test_chain_compile_writes_orbit(z_target, tmp_path):
    out = tmp_path / "chain"
    code, _ = run("compile", z_target, "--mode", "1d-chain", "--idle", 1, "--out", out)
    assert code == EXIT_PASS
    assert (out / "orbit.txt").read_text().split() == ["|g_]_", "|q<]_", "|xg]_", "|xq]<"]
    rep = json.loads((out / "compile_report.json").read_text())
    assert rep["K"] == 2 and rep["orbit_length"] == 4 and rep["seed"] == 0
    lines = (out / "chain_hamiltonian.coo").read_text().splitlines()
    assert lines and all(len(x.split()) == 4 for x in lines)


def test_chain_verify_passes(z_target, tmp_path):
    code, text = run("verify", z_target, "--mode", "1d-chain", "--out", tmp_path)
    assert code == EXIT_PASS and "PASS" in text
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["error"] <= rep["eps"]
    assert (tmp_path / "spectra.csv").read_text().startswith("series,index,value")


def test_chain_over_cap_is_unverifiable(z_target, tmp_path):
    code, _ = run("verify", z_target, "--mode", "1d-chain", "--idle", 6, "--out", tmp_path)
    assert code == EXIT_CAP


@pytest.mark.parametrize("mode,extra", [("1d-chain", []), ("gadgets-only", ["--delta", "1000"])])
def test_compile_reload_verify_round_trip(z_target, tmp_path, mode, extra):
    direct, saved = tmp_path / "direct", tmp_path / "saved"
    c1, _ = run("verify", z_target, "--mode", mode, *extra, "--out", direct)
    assert run("compile", z_target, "--mode", mode, *extra, "--out", saved)[0] == EXIT_PASS
    c2, _ = run("verify", "--from", saved)
    assert c1 == c2
    assert (direct / "verify_report.json").read_text() == (saved / "verify_report.json").read_text()


def test_gadget_verify_reports_honest_failure(tmp_path):
    p = tmp_path / "yy.txt"
    p.write_text("n=2; 1.0 Y0 Y1\n")
    code, text = run("verify", p, "--mode", "gadgets-only", "--delta", 1000, "--out", tmp_path)
    assert code == EXIT_FAIL and "FAIL" in text


def test_config_file_and_flag_override(z_target, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "1d-chain", "idle": 6, "target": str(z_target)}))
    assert run("verify", "--config", cfg, "--out", tmp_path)[0] == EXIT_CAP
    assert run("verify", "--config", cfg, "--idle", 1, "--out", tmp_path)[0] == EXIT_PASS


def test_bad_config_value_exits_2(z_target, tmp_path):
    assert run("verify", z_target, "--eps", -1, "--out", tmp_path)[0] == EXIT_USAGE


def read_csv(path):
    import csv
    with open(path) as f:
        return list(csv.DictReader(f))


def test_sweep_delta_is_monotone(tmp_path):
    p = tmp_path / "yy.txt"
    p.write_text("n=2; 1.0 Y0 Y1\n")
    assert run("sweep", p, "--param", "delta", "--grid", "100,1000,10000", "--out", tmp_path)[0] == EXIT_PASS
    rows = [r for r in read_csv(tmp_path / "sweep_delta.csv") if r["stage"] == "remove_Y_terms"]
    errs = [float(r["error"]) for r in rows]
    assert len(errs) == 3 and errs[0] > errs[1] > errs[2]


def test_sweep_idle_length_tracks_bound(z_target, tmp_path):
    assert run("sweep", z_target, "--param", "L", "--grid", "0,4,16,64", "--out", tmp_path)[0] == EXIT_PASS
    rows = read_csv(tmp_path / "sweep_L.csv")
    measured = [float(r["measured"]) for r in rows]
    assert all(float(r["measured"]) <= float(r["chi_norm"]) + 1e-12 for r in rows)
    assert measured == sorted(measured, reverse=True)


def test_sweep_trotter_reps_decay(tmp_path):
    p = tmp_path / "h.txt"
    p.write_text("n=2; 0.5 Z0; 0.25 X0 X1\n")
    assert run("sweep", p, "--param", "r", "--grid", "1,2,4,8", "--out", tmp_path)[0] == EXIT_PASS
    errs = [float(r["error"]) for r in read_csv(tmp_path / "sweep_r.csv")]
    assert errs == sorted(errs, reverse=True)


def test_sweep_guard_bits_within_bound(z_target, tmp_path):
    assert run("sweep", z_target, "--param", "guard", "--grid", "3,4", "--out", tmp_path)[0] == EXIT_PASS
    for r in read_csv(tmp_path / "sweep_guard.csv"):
        assert float(r["worst_miss"]) <= float(r["bound"]) + 2 * float(r["zeta"])


def test_two_d_compile_reports_schedule(z_target, tmp_path):
    code, _ = run("compile", z_target, "--out", tmp_path)
    assert code == EXIT_PASS
    rep = json.loads((tmp_path / "compile_report.json").read_text())
    assert rep["T"] == rep["D"] + rep["idle"]
    assert {"J_in", "J_prop", "J_clock", "s", "p", "seed"} <= set(rep)
    assert (tmp_path / "grid_circuit.txt").read_text().startswith("GRID")
