import json

import pytest

from rtbandit.cli import main


def test_moments(capsys):
    assert main(["moments", "--u", "0", "--a", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("u,a,p_choice_pos")
    assert lines[1].split(",")[2:] == ["0.5", "0.0", "1.0", "1.0", "0.6666666666666666"]


def test_theory_curves(capsys, tmp_path):
    assert main(["theory", "curves"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "u,a,m_chdt_asym,m_ch_asym,sqrt_m_chdt_nonasym,sqrt_m_ch_nonasym"
    assert main(["theory", "curves", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "weight_curves.csv").read_text() == out


def test_instance_design_run_sample_estimate(capsys, tmp_path):
    inst = tmp_path / "i.json"
    assert main(["gen-instance", "--seed", "4", "--c-z", "2", "--a", "1.5", "--out", str(inst)]) == 0
    assert main(["design", str(inst)]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "query_id,weight" and len(rows) == 91
    assert sum(float(r.split(",")[1]) for r in rows[1:]) == pytest.approx(1.0)
    assert main(["run", str(inst), "--budget", "80", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["phases"]) == 4 and "best_arm" in doc
    assert main(["sample", "--instance", str(inst), "--n", "30", "--dataset", str(tmp_path / "d.csv")]) == 0
    assert main(["estimate", str(tmp_path / "d.csv"), "--estimator", "chdt_logit"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert est["scale"] == "theta_unit" and len(est["theta_hat"]) == 5
    assert main(["sample", "--u", "1", "--a", "1", "--n", "5"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 6


def test_sweep_exit_codes(tmp_path):
    base = {"mode": "gse", "seed": 0, "replications": 2, "budgets": [40],
            "instances": {"count": 1, "c_z": 1.0, "barrier_a": 1.0}}
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps({**base, "variations": [{"name": "a"}]}))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**base, "variations": [{"name": "a", "buffer": 50.0}]}))
    assert main(["sweep", str(ok), "--out-dir", str(tmp_path / "o1"), "--seed", "5"]) == 0
    assert (tmp_path / "o1" / "results.csv").exists()
    with pytest.warns(UserWarning):
        assert main(["sweep", str(bad), "--out-dir", str(tmp_path / "o2")]) == 1
    assert main(["sweep", str(tmp_path / "missing.json")]) == 2


def test_bad_instance_file_reports_error(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{")
    assert main(["design", str(p)]) == 2
    assert "x.json:1:" in capsys.readouterr().err
