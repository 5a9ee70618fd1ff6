import json
import math

import numpy as np
import pytest

from pulselock.cli import main
from pulselock.runner import evolve_setup

# small settings so each subcommand finishes in a few seconds
FAST = {
    "pulse": ["pulse_detunings_sigma=[-1, 0, 1]"],
    "steady-state": ["ss_points=201"],
    "trace": ["trace_areas_pi=[0.25, 1]", "trace_step_ps=10", "omega_stride=16", "qd_points=21"],
    "spectra": ["spectra_areas_pi=[0.5, 1]", "omega_stride=32", "qd_points=21", "probe_points=31"],
    "nuclear-evolve": ["n_nuc=2000", "evolve_times=6", "evolve_detunings_mev=[-0.8, 0.8]"],
    "nuclear-dos": ["n_nuc=4000", "dos_bins_per_spacing=20"],
    "selftest": [],
}


def run_cli(tmp_path, command, extra=(), name="out"):
    out = tmp_path / name
    args = [command, "--out", str(out)]
    for item in FAST[command]:
        args += ["--set", item]
    code = main(args + list(extra))
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    head = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return head, body[0].split(","), [ln.split(",") for ln in body[1:]]


@pytest.mark.parametrize("command", list(FAST))
def test_byte_identical_across_runs_and_threads(tmp_path, command):
    c1, o1 = run_cli(tmp_path, command, ["--threads", "1"], "a")
    c2, o2 = run_cli(tmp_path, command, ["--threads", "1"], "b")
    c3, o3 = run_cli(tmp_path, command, ["--threads", "4"], "c")
    assert c1 == c2 == c3 == 0
    assert o1.read_bytes() == o2.read_bytes() == o3.read_bytes()
    head, cols, rows = read_csv(o1)
    assert head[0].startswith("# pulselock ") and any("config_sha256" in h for h in head)
    assert rows and all(len(r) == len(cols) for r in rows)


def test_header_echoes_resolved_config(tmp_path):
    code, out = run_cli(tmp_path, "steady-state", ["--set", "B_T=2.5"])
    assert code == 0
    head, _, _ = read_csv(out)
    cfg = json.loads(next(h for h in head if h.startswith("# config:"))[len("# config: "):])
    assert cfg["B_T"] == 2.5 and cfg["g_e"] == 0.43


def test_steady_state_table(tmp_path):
    code, out = run_cli(tmp_path, "steady-state")
    _, cols, rows = read_csv(out)
    assert cols == ["detuning_mev", "omega_TR_2pi", "Sx", "Sy", "Sz"]
    data = np.array(rows, dtype=float)
    assert set(data[:, 0]) == {-0.5, 0.5}
    neg, pos = data[data[:, 0] < 0], data[data[:, 0] > 0]
    assert np.allclose(neg[:, 2], -pos[:, 2], atol=1e-12)
    # values in scientific notation with 9 significant digits
    assert rows[0][2].count("e") == 1 and len(rows[0][2].lstrip("-").split("e")[0]) == 10


def test_pulse_two_pi_row(tmp_path):
    code, out = run_cli(tmp_path, "pulse", ["--set", "pulse_areas_pi=[2]"])
    _, cols, rows = read_csv(out)
    row = dict(zip(cols, map(float, next(r for r in rows if float(r[1]) == 1.0))))
    assert row["Q"] == pytest.approx(1.0, abs=1e-12) and row["W"] == pytest.approx(0.0, abs=1e-12)
    assert abs(row["phi"]) == pytest.approx(math.pi / 2, abs=1e-8)
    assert row["phi_ode"] == pytest.approx(row["phi"], abs=1e-6)


def test_nuclear_evolve_initial_mass(tmp_path):
    code, out = run_cli(tmp_path, "nuclear-evolve")
    _, cols, rows = read_csv(out)
    data = np.array(rows, dtype=float)
    first = data[(data[:, 0] == -0.8) & (data[:, 1] == 0.0)]
    peak = first[np.argmax(first[:, 5])]
    assert peak[5] == 1.0 and peak[3] == pytest.approx(0.0085, abs=1e-3)
    for dq in (-0.8, 0.8):
        for t in np.unique(data[data[:, 0] == dq][:, 1]):
            sel = (data[:, 0] == dq) & (data[:, 1] == t)
            assert data[sel, 5].sum() == pytest.approx(1.0, abs=1e-7)


def test_evolve_setup_default_fraction():
    from pulselock.config import parse_config
    gen, p0 = evolve_setup(parse_config(), -0.8)
    assert p0.mean() == 170
    assert (gen.grid[-1] - gen.grid[0]) / 2 * gen.omega[1] > 0
    span = (gen.omega[-1] - gen.omega[0]) / (2 * math.pi / parse_config().T_R_ps)
    assert span >= 6.0


def test_json_format(tmp_path):
    code, out = run_cli(tmp_path, "steady-state", ["--format", "json"])
    doc = json.loads(out.read_text())
    assert doc["command"] == "steady-state" and len(doc["config_sha256"]) == 64
    assert doc["columns"][0] == "detuning_mev" and len(doc["rows"]) == 402


def test_stdout_output(capsys):
    assert main(["steady-state", "--set", "ss_points=3"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# pulselock") and text.count("\n") == 5 + 1 + 6


def test_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["pulse", "--set", "T2_ns=-1", "--out", str(tmp_path / "x")]) == 2
    assert "T2_ns" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("unknown_key: 1\n")
    assert main(["pulse", "--config", str(bad)]) == 2
    # solver failure: a transparent lossless pulse has no unique steady state
    code = main(["steady-state", "--set", "pump_area_pi=0", "--set", "T2_ns=1e300", "--out", str(tmp_path / "y")])
    assert code == 1
    assert "SingularMapError" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nonsense"])
    with pytest.raises(SystemExit):
        main(["pulse", "--threads", "0"])
