import csv
import json

import numpy as np
import pytest

import gfattack.cli as cli
from gfattack.errors import NumericError
from gfattack.graph import from_edges, write_graph
from gfattack.report import AttackReport, aggregate, read_reports, strip_timing


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def small_attack(toy, out, *extra):
    return cli.main(["attack", "--dataset", str(toy), "--model", "sgc", "--n-targets", "15", "--out", str(out),
                     *extra])


@pytest.mark.parametrize("edges,lambdas", [
    ([(0, 1), (1, 2)], [1.0, 0.0, -1.0]),
    ([(0, 1), (1, 2), (0, 2)], [1.0, -0.5, -0.5]),
])
def test_spectrum_csv(tmp_path, edges, lambdas):
    write_graph(from_edges(3, edges, 2.0 * np.eye(3)), tmp_path / "g")
    out = tmp_path / "spec.csv"
    assert cli.main(["spectrum", "--dataset", str(tmp_path / "g"), "--raw-features", "--out", str(out)]) == 0
    r = rows(out)
    assert list(r[0]) == ["index", "lambda", "response", "energy", "in_tail"]
    np.testing.assert_allclose([float(x["lambda"]) for x in r], lambdas, atol=1e-6)
    assert sum(float(x["energy"]) for x in r) == pytest.approx(12.0, abs=1e-5)
    assert [int(x["index"]) for x in r] == [0, 1, 2]


def test_attack_zero_budget_gives_zero_delta(toy_dataset, tmp_path):
    out = tmp_path / "r.json"
    assert small_attack(toy_dataset, out, "--budget", "0") == 0
    (rep,) = read_reports(out)
    assert rep.aggregates["delta"] == 0.0
    assert rep.aggregates["test_delta"] == 0.0
    assert all(r.flips == [] for r in rep.records)


def test_attack_reports_are_reproducible(toy_dataset, tmp_path):
    runs = []
    for i, workers in enumerate(["1", "1", "3"]):
        out = tmp_path / f"r{i}.json"
        assert small_attack(toy_dataset, out, "--budget", "2", "--workers", workers) == 0
        runs.append(strip_timing(out.read_text()))
    assert runs[0] == runs[1] == runs[2]


def test_report_roundtrip_recomputes_aggregates(toy_dataset, tmp_path):
    out = tmp_path / "r.json"
    assert small_attack(toy_dataset, out, "--method", "random", "--random-seeds", "0,1") == 0
    reps = read_reports(out)
    assert [r.config["seed"] for r in reps] == [0, 1]
    for r in reps:
        assert aggregate(r.records) == r.aggregates
        again = AttackReport.from_dict(json.loads(r.dumps()))
        assert again.dumps() == r.dumps()
        for rec in r.records:
            assert len(rec.flips) == 1 and rec.scores == [0.0]


def test_report_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        AttackReport.from_dict({"format": "other"})
    with pytest.raises(ValueError):
        AttackReport.from_dict({"format": "gfattack-report", "version": 7})
    (tmp_path / "x.json").write_text('{"format": "nope"}')
    with pytest.raises(ValueError):
        read_reports(tmp_path / "x.json")


def test_compare_random_only_is_one_row(toy_dataset, tmp_path):
    code = cli.main(["compare", "--dataset", str(toy_dataset), "--models", "sgc", "--methods", "random",
                     "--budgets", "1", "--n-targets", "10", "--random-seeds", "0,1,2", "--out-dir", str(tmp_path)])
    assert code == 0
    table = rows(tmp_path / "deltas.csv")
    assert len(table) == 1 and table[0]["method"] == "random"
    sweep = rows(tmp_path / "beta_sweep.csv")
    assert list(sweep[0]) == ["model", "method", "budget", "delta_pct", "test_delta_pct", "n_runs"]
    assert sweep[0]["n_runs"] == "3"
    assert len(read_reports(tmp_path / "reports.json")) == 3


def test_budget_sweep_is_monotone_on_toy(toy_dataset, tmp_path):
    code = cli.main(["compare", "--dataset", str(toy_dataset), "--models", "sgc", "--methods", "gf_attack",
                     "--budgets", "1,2,3,4,5", "--n-targets", "30", "--out-dir", str(tmp_path)])
    assert code == 0
    deltas = [float(r["delta_pct"]) for r in rows(tmp_path / "beta_sweep.csv")]
    assert len(deltas) == 5
    assert all(b <= a for a, b in zip(deltas, deltas[1:]))
    assert deltas[-1] < 0


def test_yaml_config_with_flag_override(toy_dataset, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"dataset: {toy_dataset}\nmodel: sgc\nbudget: 0\nn_targets: 5\n")
    out = tmp_path / "r.json"
    assert cli.main(["attack", "--config", str(cfg), "--out", str(out)]) == 0
    (rep,) = read_reports(out)
    assert rep.config["budget"] == 0 and rep.aggregates["n_targets"] == 5
    assert cli.main(["attack", "--config", str(cfg), "--budget", "1", "--n-targets", "4", "--out", str(out)]) == 0
    (rep,) = read_reports(out)
    assert rep.config["budget"] == 1 and rep.aggregates["n_targets"] == 4


def test_exit_code_config_errors(toy_dataset, tmp_path, capsys):
    assert cli.main(["attack", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path / "r.json")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(f"dataset: {toy_dataset}\nbogus_key: 1\n")
    assert cli.main(["attack", "--config", str(bad), "--out", str(tmp_path / "r.json")]) == 2
    assert cli.main(["spectrum", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "s.csv")]) == 2
    assert cli.main(["attack", "--dataset", str(toy_dataset), "--budget", "-1", "--out", str(tmp_path / "r")]) == 2
    assert "error:" in capsys.readouterr().err


def test_exit_code_data_errors(tmp_path):
    d = tmp_path / "g"
    d.mkdir()
    (d / "edges.txt").write_text("0 1\n1 zz\n")
    (d / "features.csv").write_text("1\n1\n")
    assert cli.main(["spectrum", "--dataset", str(d), "--out", str(tmp_path / "s.csv")]) == 3
    # an isolated vertex has no normalized spectrum
    write_graph(from_edges(3, [(0, 1)]), tmp_path / "iso")
    assert cli.main(["spectrum", "--dataset", str(tmp_path / "iso"), "--no-lcc", "--out", str(tmp_path / "s.csv")]) == 3


def test_exit_code_numeric_errors(toy_dataset, tmp_path, monkeypatch):
    import gfattack.experiment as experiment

    def broken(*a, **kw):
        raise NumericError("eigensolver did not converge")

    monkeypatch.setattr(experiment, "decompose", broken)
    assert cli.main(["spectrum", "--dataset", str(toy_dataset), "--out", str(tmp_path / "s.csv")]) == 4


def test_synth_writes_loadable_dataset(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "s"), "--n", "120", "--seed", "3"]) == 0
    assert {p.name for p in (tmp_path / "s").iterdir()} == {"edges.txt", "features.csv", "labels.csv"}
