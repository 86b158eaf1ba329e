import json

import pytest

from reviewcal.calibrate import check_perfect_recovery
from reviewcal.cli import calibrate_file, graph_report, main
from reviewcal.exceptions import MissingGroundTruth, ParseError

FIXTURE = "reviewer_id,item_id,score\nr1,1,3\nr1,2,5\nr1,3,7\nr2,2,2\nr2,3,3\nr2,4,4\n"
TRUTH = "item_id,quality\n1,1\n2,2\n3,3\n4,4\n"


@pytest.fixture
def files(tmp_path):
    reviews = tmp_path / "reviews.csv"
    truth = tmp_path / "truth.csv"
    reviews.write_text(FIXTURE)
    truth.write_text(TRUTH)
    return tmp_path, reviews, truth


def test_calibrate_fixture_is_perfect(files):
    _, reviews, truth = files
    out = calibrate_file(reviews, truth, kind="noiseless")
    assert out["item_ids"] == ["1", "2", "3", "4"]
    assert check_perfect_recovery(out["qualities"], [1, 2, 3, 4]).is_perfect
    assert out["metrics"]["perfect_recovery"] is True


def test_malformed_row(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("reviewer_id,item_id,score\nr1,1,3\nr1,2\n")
    with pytest.raises(ParseError) as err:
        calibrate_file(bad)
    assert err.value.line == 3
    assert main(["calibrate", str(bad)]) == 3


def test_metrics_need_truth(files):
    _, reviews, _ = files
    with pytest.raises(MissingGroundTruth):
        calibrate_file(reviews, metrics=True)


def test_graph_reports(tmp_path):
    robust = tmp_path / "robust.csv"
    robust.write_text(FIXTURE)
    rep = graph_report(robust)
    assert rep["recovery_robust"] and rep["num_components"] == 1
    chain = tmp_path / "chain.csv"
    chain.write_text("reviewer_id,item_id,score\na,1,1\na,2,2\nb,2,1\nb,3,2\nc,3,1\nc,4,2\n")
    rep = graph_report(chain)
    assert not rep["recovery_robust"] and rep["num_components"] >= 2
    assert "two items" in rep["suggestion"]
    single = tmp_path / "single.csv"
    single.write_text("reviewer_id,item_id,score\na,1,1\na,2,2\na,3,0\n")
    rep = graph_report(single)
    assert rep["recovery_robust"] and rep["num_components"] == 1


def test_end_to_end(tmp_path, capsys):
    out_dir = tmp_path / "bench"
    assert main(["generate", "--N", "30", "--M", "30", "--k", "5", "--out-dir", str(out_dir)]) == 0
    result = tmp_path / "result.json"
    assert main(["calibrate", str(out_dir / "reviews.csv"), "--truth", str(out_dir / "truth.csv"),
                 "--kind", "noiseless", "--out", str(result)]) == 0
    data = json.loads(result.read_text())
    assert data["metrics"]["precision"] == 1.0
    assert main(["graph", str(out_dir / "reviews.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["recovery_robust"] is True


def test_assign(capsys):
    assert main(["assign", "--N", "6", "--M", "3", "--k", "3", "--kind", "doubly_connected"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "reviewer_id,item_id" and len(lines) == 10


def test_experiment_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("N: 30\nM: 30\ntrials: 2\nmethods: [average, lsc-linear]\n")
    assert main(["experiment", "--config", str(cfg), "--sigma", "0.5", "--no-timing"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["config"]["N"] == 30 and report["config"]["sigma"] == 0.5
    assert len(report["trials"]) == 2


def test_sweep_cli(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--axis", "k", "--values", "3,5", "--N", "30", "--M", "30",
                 "--trials", "1", "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("axis_value,method,precision_mean") and len(lines) == 5


def test_exit_codes(tmp_path, files):
    assert main(["experiment", "--trials", "0"]) == 2
    assert main(["experiment", "--preset", "nope"]) == 2
    bad_cfg = tmp_path / "bad.yaml"
    bad_cfg.write_text("[1, 2]\n")
    assert main(["experiment", "--config", str(bad_cfg)]) == 2
    assert main(["calibrate", str(tmp_path / "missing.csv")]) == 3
    # a perturbed noiseless fixture has no noiseless-linear explanation
    _, reviews, _ = files
    inconsistent = tmp_path / "inconsistent.csv"
    inconsistent.write_text(FIXTURE + "r3,1,1\nr3,2,2\nr3,4,3\nr3,3,2.5\n")
    assert main(["calibrate", str(inconsistent), "--kind", "noiseless"]) == 4


def test_kinds_file(files, tmp_path):
    _, reviews, truth = files
    kinds = tmp_path / "kinds.csv"
    kinds.write_text("reviewer_id,kind\nr1,linear\nr2,monotone\n")
    out = calibrate_file(reviews, truth, kinds_file=kinds)
    assert out["hypothesis"].startswith("mixed")
