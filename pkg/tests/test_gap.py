import json

import pytest

from gridcurate.matpower import read_network
from gridcurate.opf.formulations import Model
from gridcurate.opf.gap import ModelEntry, gap, gap_report, gap_table, to_json, to_markdown

from conftest import FIXTURES


def test_gap_examples():
    assert gap(100, 100) == 0
    assert gap(985, 100) == pytest.approx(89.847715, rel=1e-6)
    assert gap(200, 150) == 25


@pytest.mark.parametrize("ac", [0.0, -5.0])
def test_gap_needs_positive_ac(ac):
    with pytest.raises(ValueError):
        gap(ac, 1.0)


def test_cells():
    assert ModelEntry("cp", "not-applicable").cell(True) == "---"
    assert ModelEntry("cp", "iteration-limit").cell(True) == "err."
    assert ModelEntry("cp", "optimal", 90.0, 1.234).cell(True) == "1.23"
    assert ModelEntry("ac", "optimal", 985.7).cell(False) == "985.70"


def test_report_on_capacity_case():
    rep = gap_report(read_network(FIXTURES / "case3_capacity.m"))
    assert rep.ac.solved
    assert [e.model for e in rep.relaxations] == ["cp", "nfll", "soc"]
    assert rep.entry(Model.CP).gap == pytest.approx(gap(rep.ac.objective, rep.entry("cp").objective))


def test_table_keeps_order_and_records_failures(tmp_path):
    broken = tmp_path / "broken.m"
    broken.write_text("mpc.bus = [1 2;\n")
    paths = [FIXTURES / "case3_voltage.m", broken, FIXTURES / "case3.m"]
    reports = gap_table(paths, jobs=2)
    assert [r.case for r in reports] == ["case3_voltage", "broken", "case3"]
    assert reports[1].error and not reports[1].ac.solved
    md = to_markdown(reports)
    assert md.splitlines()[0].startswith("| Case | AC")
    assert "| broken | err. | err. | err. | err. |" in md
    doc = json.loads(to_json(reports))
    assert doc["schema_version"] == 1 and len(doc["reports"]) == 3


def test_json_is_deterministic():
    paths = [FIXTURES / "case3.m"]
    assert to_json(gap_table(paths, jobs=1)) == to_json(gap_table(paths, jobs=1))
