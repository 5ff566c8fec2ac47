import csv
import json

import pytest

from truvrf.errors import EmptyReport, InvalidInput
from truvrf.harness import BenchmarkReport, ScenarioConfig, run_benchmark, run_sweep
from truvrf.report import (
    TRIAL_COLUMNS,
    emit_report,
    load_report,
    render_report_figures,
    render_sweep_figure,
    write_plot_csv,
)

BASE = {
    "dataset": {"per_class": 100, "test_per_class": 30, "dim": 8},
    "hidden_layers": [8],
    "train": {"learning_rate": 0.05, "epochs": 3, "batch_size": 32, "shuffle_seed": 0},
    "params": {"probe_size": 20, "threshold": 1.0, "tau": 0.1},
    "metrics": ["class", "sample"],
    "request": {"classes": 1, "volume": 25},
}


@pytest.fixture(scope="module")
def report():
    return run_benchmark(ScenarioConfig.from_dict(dict(BASE, trials=40)))


def test_json_round_trip(tmp_path, report):
    p = tmp_path / "r.json"
    emit_report(report, "json", p)
    back = load_report(p)
    assert back.to_dict() == report.to_dict()
    assert p.read_text() == report.to_json() + "\n"


def test_csv_has_one_row_per_trial_and_footer(tmp_path, report):
    p = tmp_path / "r.csv"
    emit_report(report, "csv", p)
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == 41
    assert list(rows[0]) == list(TRIAL_COLUMNS)
    assert [int(r["trial_index"]) for r in rows[:40]] == list(range(40))
    footer = rows[-1]
    assert footer["trial_index"] == "aggregate"
    assert float(footer["class_correct"]) == report.aggregates["class_accuracy"]
    assert float(footer["sample_correct"]) == report.aggregates["sample_accuracy"]
    flags = [r["class_correct"] == "1" for r in rows[:40]]
    assert sum(flags) / 40 == report.aggregates["class_accuracy"]


def test_timings_go_to_a_separate_file(tmp_path, report):
    emit_report(report, "json", tmp_path / "r.json", timings=tmp_path / "t.json")
    t = json.loads((tmp_path / "t.json").read_text())
    assert set(t) == {str(i) for i in range(40)}
    assert "timings" not in (tmp_path / "r.json").read_text()


def test_bad_format_and_unwritable_path(tmp_path, report):
    with pytest.raises(InvalidInput):
        emit_report(report, "xml", tmp_path / "r.xml")
    with pytest.raises(OSError):
        emit_report(report, "json", tmp_path / "missing" / "dir" / "r.json")
    empty = BenchmarkReport({}, None, "", {}, [])
    with pytest.raises(EmptyReport):
        emit_report(empty, "json", tmp_path / "e.json")


def test_report_figures(tmp_path, report):
    paths = render_report_figures(report, tmp_path / "fig")
    assert sorted(p.name for p in paths) == ["report_class.png", "report_sample.png"]
    for p in paths:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_plot_csv(tmp_path):
    cfg = ScenarioConfig.from_dict(dict(BASE, trials=1, metrics=["class"], sweep={"param": "request.classes", "values": [1, 2, 3, 4, 5]}))
    sweep = run_sweep(cfg)
    write_plot_csv(sweep, tmp_path / "plot.csv")
    rows = list(csv.reader((tmp_path / "plot.csv").open()))
    assert rows[0] == ["x", "class_accuracy"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5"]
    png = render_sweep_figure(sweep, tmp_path / "s" / "sweep.png")
    assert png.exists()
