import json
import subprocess
import sys

import numpy as np
import pytest

from supportcert.cli import main
from supportcert.linalg import write_matrix, write_vector

from helpers import usable_instance

COUNTER = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])


@pytest.fixture
def files(tmp_path):
    def make(Phi, x0, name="inst"):
        mp, xp = tmp_path / f"{name}_Phi.txt", tmp_path / f"{name}_x0.txt"
        write_matrix(Phi, str(mp))
        write_vector(x0, str(xp))
        return str(mp), str(xp)
    return make


def test_certify(files, capsys):
    m, x = files(np.eye(4), [1.0, 0.0, -2.0, 0.0])
    assert main(["certify", m, x]) == 0
    assert "identifiable: true" in capsys.readouterr().out
    m, x = files(COUNTER, [1.0, 1.0, 0.0], "counter")
    assert main(["certify", m, x]) == 1
    assert "identifiable: false" in capsys.readouterr().out


def test_certify_bad_input(tmp_path, files):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 3\n1 2 3\n")
    _, x = files(np.eye(3), [1.0, 0.0, 0.0])
    assert main(["certify", str(bad), x]) == 2
    assert main(["certify", str(tmp_path / "missing.txt"), x]) == 2
    m, _ = files(np.eye(3), [1.0, 0.0, 0.0])
    short = tmp_path / "short.txt"
    write_vector([1.0, 0.0], str(short))
    assert main(["certify", m, str(short)]) == 2


def test_bad_flags():
    assert main(["analyze", "a", "b", "--alpha", "3"]) == 2
    assert main(["predict", "a.json", "--tau", "-1"]) == 2
    assert main([]) == 2


def test_analyze_identity(files, tmp_path, capsys):
    m, x = files(np.eye(3), [1.0, 0.0, 0.0])
    out = tmp_path / "an.json"
    assert main(["analyze", m, x, "--alpha", "inf", "-o", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["constants"]["c1"] == 1.0 and rec["constants"]["c2"] == 0.5
    assert "c2: 0.5" in capsys.readouterr().out


def test_analyze_l2_flags_derived(files, tmp_path, capsys):
    m, x = files(np.eye(3), [1.0, 0.0, 0.0])
    out = tmp_path / "an2.json"
    assert main(["analyze", m, x, "--alpha", "2", "-o", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["constants"]["derived"] is True and "derived" in rec["constants_note"]
    assert "note: derived" in capsys.readouterr().out


def test_analyze_exit_codes(files):
    m, x = files(COUNTER, [1.0, 1.0, 0.0], "counter")
    assert main(["analyze", m, x, "--alpha", "inf", "-o", "-"]) == 1
    dup = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    m, x = files(dup, [1.0, 0.0, 0.0], "dup")
    assert main(["analyze", m, x, "--alpha", "2", "-o", "-"]) == 3


def test_analyze_lists_extended_support(files, tmp_path, capsys):
    _, inst, _ = usable_instance(0, 10, 20, 4)
    m, x = files(inst.Phi, inst.x0, "small")
    out = tmp_path / "small.json"
    assert main(["analyze", m, x, "--alpha", "inf", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    J = json.loads(out.read_text())["certificate"]["J"]
    assert set(inst.I) <= set(J)
    assert "J: {" + ", ".join(map(str, J)) + "}" in text


@pytest.fixture
def identity_analysis(files, tmp_path):
    m, x = files(np.eye(3), [2.0, 0.0, 0.0])
    out = tmp_path / "an.json"
    assert main(["analyze", m, x, "--alpha", "inf", "-o", str(out)]) == 0
    return str(out)


def test_predict(identity_analysis, tmp_path):
    out = tmp_path / "pred.json"
    assert main(["predict", identity_analysis, "--tau", "0.5", "-o", str(out)]) == 0
    rec = json.loads(out.read_text())
    np.testing.assert_allclose(rec["x"], [1.5, 0.0, 0.0])
    assert rec["support"] == [0]
    noise = tmp_path / "w.txt"
    write_vector([0.3, 0.1, -0.2], str(noise))
    assert main(["predict", identity_analysis, "--tau", "0.5", "--noise-file", str(noise),
                 "-o", str(out)]) == 0
    np.testing.assert_allclose(json.loads(out.read_text())["x"], [1.8, 0.0, 0.0])


def test_predict_regime_violation(identity_analysis, capsys):
    assert main(["predict", identity_analysis, "--tau", "1.5"]) == 4
    assert "tau" in capsys.readouterr().err
    assert main(["predict", identity_analysis, "--tau", "0.5", "--noise-uniform", "0.6",
                 "--seed", "1"]) == 4


def test_predict_needs_seed(identity_analysis):
    assert main(["predict", identity_analysis, "--tau", "0.5", "--noise-uniform", "0.1"]) == 2


def test_verify(identity_analysis, capsys):
    assert main(["verify", identity_analysis, "--tau", "0.5", "--noise-uniform", "0.2",
                 "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "passed: true" in out and "kkt residual" in out


def test_toy_and_sweep(tmp_path, capsys):
    toy = tmp_path / "toy.csv"
    assert main(["toy", "--seed", "0", "-o", str(toy)]) == 0
    assert toy.read_text().startswith("# supportcert")
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("n=20\nm=10\nk_values=2,4\ntrials_per_k=2\ns_e_values=0,inf\n")
    prefix = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--inv-alpha", "0,0.5,1", "-o",
                 str(prefix)]) == 0
    assert (tmp_path / "sw_records.csv").exists()
    assert (tmp_path / "sw_curves.csv").exists()
    assert main(["sweep", "--config", str(tmp_path / "nope.txt")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "supportcert", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
