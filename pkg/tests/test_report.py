"""Report rendering from stored study data."""

import hashlib
import re

import pytest

from lfl.config import Config
from lfl.lab import pid_vs_onoff, power_study, speed_sweep, write_data
from lfl.report import ReportError, load_data, render_report


def digest_tree(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_nothing_to_report(tmp_path):
    with pytest.raises(ReportError, match="nothing to report"):
        render_report(tmp_path)


@pytest.fixture(scope="module")
def study_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("report")
    cfg = Config({"duration": 3.0})
    write_data(pid_vs_onoff(cfg, trials=3, jobs=1), out)
    write_data(speed_sweep(cfg, trials=2, jobs=1), out)
    write_data(power_study(cfg), out)
    render_report(out)
    return out


def test_outputs_present(study_dir):
    names = {p.name for p in study_dir.rglob("*") if p.is_file()}
    assert {"report.txt", "pid_vs_onoff.csv", "speed_sweep.csv", "power.csv", "tracking.svg",
            "speed_sweep.svg"} <= names


def test_tracking_table_layout(study_dir):
    text = (study_dir / "report.txt").read_text()
    assert "On-Off Control" in text and "PID Control" in text
    assert "95% CI" in text and "Cohen's d" in text and "df = 4" in text
    rows = (study_dir / "tables" / "pid_vs_onoff.csv").read_text().splitlines()
    assert len(rows) == 3


def test_power_annotation(study_dir):
    text = (study_dir / "report.txt").read_text()
    assert "407.8" in text and "412 mA" in text and "5.2 h" in text and "5.39" in text


def test_figure_legend_has_rmse(study_dir):
    svg = (study_dir / "plots" / "tracking.svg").read_text()
    # glyphs are outlined, and the text survives as an SVG comment
    labels = re.findall(r"<!-- (.*?) -->", svg)
    assert any(re.fullmatch(r"PID \(RMSE=\d+\.\d\d\)", s) for s in labels)
    assert any(re.fullmatch(r"On-Off \(RMSE=\d+\.\d\d\)", s) for s in labels)
    assert "<dc:date>" not in svg


def test_rerender_is_byte_identical(study_dir):
    before = digest_tree(study_dir)
    render_report(study_dir)
    assert digest_tree(study_dir) == before


def test_load_data_parses_values(study_dir):
    data = load_data(study_dir)
    row = data["speed_sweep"][0]
    assert isinstance(row["mean"], float) and row["base_pwm"] == 100
