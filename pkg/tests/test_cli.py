import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

import oracles as O
from topoband import __version__, cli
from topoband.medium import layered, structure_to_dict

DATA = os.path.join(os.path.dirname(cli.__file__), "data")


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("in")
    paths = {}
    for name, layers in (("left", O.LEFT_LAYERS), ("right", O.RIGHT_LAYERS)):
        f = d / f"{name}.json"
        f.write_text(json.dumps(structure_to_dict(layered(layers))))
        paths[name] = str(f)
    sym = d / "sym.json"
    sym.write_text(json.dumps(structure_to_dict(layered([(0.25, 1.3, 1.0), (0.5, 1.0, 1.0), (0.25, 1.3, 1.0)]))))
    paths["sym"] = str(sym)
    vac = d / "vac.json"
    vac.write_text(json.dumps({"layers": [{"w": 1.0, "eps": 1.0, "mu": 1.0}]}))
    paths["vac"] = str(vac)
    df = d / "defect.json"
    df.write_text(json.dumps({"d1": 0.0, "d2": 0.05, "layers": [{"w": 0.05, "eps": 2.0, "mu": 1.0}]}))
    paths["defect"] = str(df)
    paths["odd"] = os.path.join(DATA, "odd_step.json")
    return paths


def _read(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[-1].startswith(f"# topoband {__version__}, structure-sha256=")
    rows = list(csv.reader(lines[:-1]))
    return rows[0], rows[1:]


def _summary(out):
    with open(out / "summary.json") as fh:
        return json.load(fh)


def test_bands(files, tmp_path):
    assert cli.run(["bands", "--structure", files["left"], "--emax", "300", "--out", str(tmp_path)]) == 0
    head, rows = _read(tmp_path / "bands.csv")
    assert head == ["j", "k", "E"]
    head, rows = _read(tmp_path / "edges.csv")
    assert head == ["j", "E_minus", "E_plus", "kstar"]
    assert _summary(tmp_path)["dispersion_residual"] < 1e-8


def test_interface_reports_example_mode(files, tmp_path):
    assert cli.run(["interface", "--left", files["left"], "--right", files["right"], "--out", str(tmp_path)]) == 0
    head, rows = _read(tmp_path / "interface_modes.csv")
    assert head == ["E", "omega", "decayL", "decayR", "residual"]
    w = [float(r[1]) for r in rows]
    assert min(abs(x - O.OMEGA_INF_PUBLISHED) for x in w) < 5e-3
    head, _ = _read(tmp_path / "impedance.csv")
    assert head == ["E", "xi_L_1", "xi_R_2", "xi_diff"]
    s = _summary(tmp_path)
    assert any(abs(m["omega"] - O.OMEGA_INF_PUBLISHED) < 5e-3 for m in s["modes"])


def test_resonance_table(files, tmp_path):
    assert cli.run(["resonance", "--left", files["left"], "--right", files["right"],
                    "--sizes", "2,4,8,16", "--out", str(tmp_path)]) == 0
    head, rows = _read(tmp_path / "resonances.csv")
    near = {}
    for r in rows:
        rec = dict(zip(head, r))
        w = complex(float(rec["re_omega"]), float(rec["im_omega"]))
        N = int(rec["N2"])
        if abs(w - O.OMEGA_INF_PUBLISHED) < 0.5:
            near[N] = w - O.OMEGA_INF_PUBLISHED
    for N, ref in O.TABLE_RESONANCES.items():
        tol = 1.5e-3 if N <= 8 else 1e-4
        assert abs(near[N].real - ref.real) < tol and abs(near[N].imag - ref.imag) < tol


@pytest.mark.parametrize("argv,csvs", [
    (["dirac", "--structure", "dirac_trilayer", "--emax", "60"], ["dirac.csv"]),
    (["zak", "--structure", "SYM", "--emax", "200"], ["zak.csv", "parity.csv"]),
    (["index", "--structure", "SYM", "--emax", "200"], ["bulk_index.csv"]),
    (["defect", "--left", "LEFT", "--right", "RIGHT", "--defect", "DEFECT", "--emax", "300"],
     ["defect_scan.csv", "interface_modes.csv"]),
    (["perturb", "--structure", "dirac_trilayer", "--perturbation", "ODD", "--delta", "0.01", "--emax", "30"],
     ["gap_open.csv", "dirac_mode.csv"]),
    (["transmit", "--left", "LEFT", "--right", "RIGHT", "--sizes", "4", "--omega-steps", "201"],
     ["transmission.csv"]),
])
def test_commands_write_artifacts(files, tmp_path, argv, csvs):
    sub = {"SYM": files["sym"], "LEFT": files["left"], "RIGHT": files["right"],
           "DEFECT": files["defect"], "ODD": files["odd"]}
    argv = [sub.get(a, a) for a in argv] + ["--out", str(tmp_path)]
    assert cli.run(argv) == 0
    for name in csvs:
        _read(tmp_path / name)
    s = _summary(tmp_path)
    assert s["command"] == argv[0] and s["version"] == __version__


def test_transmission_flux(files, tmp_path):
    cli.run(["transmit", "--left", files["left"], "--right", files["right"], "--sizes", "2,8",
             "--omega-steps", "101", "--out", str(tmp_path)])
    for N in (2, 8):
        head, rows = _read(tmp_path / f"transmission_N{N}.csv")
        data = np.array(rows, dtype=float)
        at = data[:, head.index("abs_t")]
        ar = data[:, head.index("abs_r")]
        assert np.max(np.abs(at**2 + ar**2 - 1)) < 1e-8


def test_outputs_are_deterministic(files, tmp_path, monkeypatch):
    outs = []
    for i, threads in enumerate(("1", "4")):
        monkeypatch.setenv("TOPOBAND_THREADS", threads)
        out = tmp_path / f"run{i}"
        assert cli.run(["interface", "--left", files["left"], "--right", files["right"], "--out", str(out)]) == 0
        assert cli.run(["bands", "--structure", files["sym"], "--emax", "200", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("interface_modes.csv", "impedance.csv", "bands.csv", "edges.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_hash_depends_on_input(files, tmp_path):
    cli.run(["bands", "--structure", files["left"], "--emax", "100", "--out", str(tmp_path / "a")])
    cli.run(["bands", "--structure", files["right"], "--emax", "100", "--out", str(tmp_path / "b")])
    tail = lambda p: p.read_text().splitlines()[-1]
    assert tail(tmp_path / "a" / "edges.csv") != tail(tmp_path / "b" / "edges.csv")


@pytest.mark.parametrize("argv", [
    ["bands", "--structure", "does-not-exist.json"],
    ["bands"],
    ["bands", "--structure", "bilayer_left", "--nk", "1"],
    ["index", "--structure", "bilayer_left"],  # not inversion-symmetric
    ["resonance", "--left", "bilayer_left", "--right", "bilayer_right", "--sizes", "2,x"],
])
def test_validation_errors_exit_2(tmp_path, argv, capsys):
    assert cli.run(argv + ["--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "summary.json").exists()


def test_numerical_failure_exit_3(files, tmp_path):
    # two vacua share no gap, so there is no interface mode to seed from
    assert cli.run(["resonance", "--left", files["vac"], "--right", files["vac"],
                    "--sizes", "2,4", "--out", str(tmp_path)]) == 3
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["command"] == "resonance" and diag["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "topoband", "bands", "--structure", "bilayer_left",
                           "--emax", "50", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "bands.csv").exists()


def test_bundled_perturbation_name_matches_file(files, tmp_path):
    base = ["perturb", "--structure", "dirac_trilayer", "--delta", "0.01", "--emax", "30"]
    assert cli.run(base + ["--perturbation", files["odd"], "--out", str(tmp_path / "a")]) == 0
    assert cli.run(base + ["--perturbation", "odd_step", "--out", str(tmp_path / "b")]) == 0
    _, a = _read(tmp_path / "a" / "gap_open.csv")
    _, b = _read(tmp_path / "b" / "gap_open.csv")
    assert a == b
