import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rtbandit.diffusion import DiffusionParams
from rtbandit.harness import (
    ConfigError,
    aggregate_error,
    config_from_dict,
    heatmap_svg,
    line_svg,
    load_config,
    replication_rng,
    run_sweep,
)
from rtbandit.instances import BanditInstance, build_queries, save_instance

SMALL = {
    "mode": "gse",
    "seed": 3,
    "replications": 4,
    "budgets": [40, 80],
    "instances": {"count": 2, "c_z": 2.0, "barrier_a": 1.0, "t_nondec": 0.2},
    "variations": [
        {"name": "trans_chdt", "estimator": "chdt"},
        {"name": "trans_ch", "estimator": "ch_mle"},
        {"name": "hard_ch", "design": "hard", "estimator": "ch_mle", "budgets": [80]},
    ],
}


def test_aggregate_examples():
    one = aggregate_error([{"v": "a", "error_prob": 0.3}], ["v"])
    assert [one[0][k] for k in ("min", "q1", "median", "q3", "max")] == [0.3] * 5
    rows = [{"v": "a", "error_prob": p} for p in (0.1, 0.2, 0.3)]
    out = aggregate_error(rows, ["v"])[0]
    assert out["median"] == pytest.approx(0.2)
    assert out["q1"] == pytest.approx(0.15) and out["q3"] == pytest.approx(0.25)
    assert out["n"] == 3 and out["status"] == "ok"


def test_aggregate_grouping_and_empty_groups():
    rows = [{"variation": v, "budget": b, "error_prob": 0.5}
            for v in ("x", "y") for b in (1.0, 2.0) for _ in range(3)]
    out = aggregate_error(rows, ["variation", "budget"])
    assert len(out) == 4
    with pytest.warns(UserWarning):
        out = aggregate_error(rows, ["variation", "budget"], expected=[("z", 1.0)])
    empty = [r for r in out if r["variation"] == "z"][0]
    assert empty["n"] == 0 and empty["status"] == "empty"


def test_sweep_is_byte_identical(tmp_path):
    cfg = config_from_dict(SMALL)
    run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b", threads=2)
    for name in ("results.csv", "replications.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_results_schema(tmp_path):
    out = run_sweep(config_from_dict(SMALL), tmp_path)
    header = (tmp_path / "results.csv").read_text().splitlines()[0].split(",")
    assert "error_prob" in header and "failed" in header and "wall_clock_s" not in header
    assert len(out.results) == 2 * (2 + 2 + 1)
    for r in out.results:
        assert 0.0 <= r["error_prob"] <= 1.0
        assert r["completed"] + r["failed"] == r["replications"] == 4
    assert len(out.summary) == 5
    assert (tmp_path / "timing.csv").exists()
    ET.fromstring((tmp_path / "error_vs_budget.svg").read_text())


def test_extending_replications_keeps_prefix():
    short = run_sweep(config_from_dict(SMALL), None)
    longer = run_sweep(config_from_dict({**SMALL, "replications": 7}), None)
    prefix = [r for r in longer.replications if r[3] < 4]
    assert prefix == short.replications


def test_replication_streams_differ():
    a = replication_rng(0, 0, 0, 0, 0).random()
    b = replication_rng(0, 0, 0, 0, 1).random()
    c = replication_rng(0, 1, 0, 0, 0).random()
    assert len({a, b, c}) == 3
    assert replication_rng(0, 0, 0, 0, 0).random() == a


def test_errors_are_counted_and_sweep_continues():
    doc = dict(SMALL, variations=[{"name": "ok", "estimator": "chdt"},
                                  {"name": "starved", "estimator": "chdt", "buffer": 100.0}])
    with pytest.warns(UserWarning, match="no values"):
        out = run_sweep(config_from_dict(doc), None)
    starved = [r for r in out.results if r["variation"] == "starved"]
    assert all(r["failed"] == 4 and r["completed"] == 0 for r in starved)
    assert all(r["failed"] == 0 for r in out.results if r["variation"] == "ok")
    assert out.failed == 16
    assert any("BudgetExhaustedError" in r[9] for r in out.replications)


def test_mock_feedback_on_file_instance(tmp_path):
    arms = np.array([[1.0, 0.0], [0.2, 0.8]])
    q, pairs = build_queries(arms)
    inst = BanditInstance(arms, q, pairs, DiffusionParams([1.0, 0.3], 1.0, 0.1), 0)
    save_instance(inst, tmp_path / "two.json")
    cfg = {"mode": "gse", "seed": 0, "replications": 1, "budgets": [30],
           "instances": {"files": ["two.json"]},
           "variations": [{"name": "mock", "feedback": "sign"}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out = run_sweep(load_config(tmp_path / "cfg.json"), None)
    assert out.results[0]["error_prob"] == 0.0


def test_toml_config(tmp_path):
    (tmp_path / "c.toml").write_text(
        'mode = "estimation"\nseed = 1\nreplications = 3\nn_queries = 50\n'
        "[instances]\ncount = 1\nc_z = [0.5, 2.0]\nbarrier_a = [0.5, 1.5]\n"
        '[[variations]]\nname = "trans_chdt"\n[[variations]]\nname = "hard_ch"\n'
        'design = "hard"\nestimator = "ch_mle"\n'
    )
    cfg = load_config(tmp_path / "c.toml")
    out = run_sweep(cfg, tmp_path / "out")
    assert len(out.results) == 4 * 2
    assert all(r["mean_episodes"] == 50 for r in out.results)
    for name in ("heatmap_trans_chdt.svg", "heatmap_hard_ch.svg"):
        ET.fromstring((tmp_path / "out" / name).read_text())


@pytest.mark.parametrize("doc", [
    {"variations": []},
    {"mode": "gse", "variations": [{"name": "a"}]},
    {"mode": "bogus", "budgets": [1], "variations": [{"name": "a"}]},
    {"budgets": [1], "variations": [{"name": "a", "estimator": "nope"}]},
    {"budgets": [1], "variations": [{"name": "a", "budgets": [5]}]},
    {"budgets": [1], "variations": [{"name": "a"}, {"name": "a"}]},
])
def test_bad_configs(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_svg_writers_produce_xml():
    ET.fromstring(line_svg({"a": [(1, 0.2), (2, 0.1)], "b<&>": [(1, 0.5)]}))
    ET.fromstring(heatmap_svg({(1.5, 2.0): 0.1, (0.5, 2.0): float("nan")}, [1.5, 0.5], [2.0]))
