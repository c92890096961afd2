import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from gridcurate.matpower import (CaseFormatError, CaseSyntaxError, build, format_number, lower, parse,
                                 read_network, write, write_case)
from gridcurate.network import FuelCategory

from conftest import FIXTURES

MINIMAL = """function mpc = one
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
];
"""

ALL_FIXTURES = sorted(FIXTURES.glob("*.m"))


def with_rows(table_header: str, body: str) -> str:
    return MINIMAL + f"mpc.{table_header} = [\n{body}\n];\n"


def assert_networks_close(a, b, rel=1e-12):
    assert a.base_mva == b.base_mva and a.name == b.name
    for xs, ys in ((a.buses, b.buses), (a.branches, b.branches), (a.generators, b.generators)):
        assert len(xs) == len(ys)
        for x, y in zip(xs, ys):
            for k, vx in x.__dict__.items():
                vy = y.__dict__[k]
                if isinstance(vx, float):
                    assert vx == pytest.approx(vy, rel=rel, abs=1e-14) or (math.isinf(vx) and vx == vy), k
                elif k == "cost":
                    assert (vx.c2, vx.c1, vx.c0) == pytest.approx((vy.c2, vy.c1, vy.c0), rel=rel), k
                else:
                    assert vx == vy, k


def test_minimal_case():
    case = parse(MINIMAL)
    assert case.name == "one" and len(case.bus) == 1 and case.gencost == ()
    net = lower(case)
    assert len(net.buses) == 1 and net.generators == ()


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.name)
def test_fixtures_parse(path):
    net = read_network(path)
    assert net.buses and net.branches and net.generators


def test_table2_line_parameters():
    net = read_network(FIXTURES / "case3.m")
    br = next(b for b in net.branches if (b.from_bus, b.to_bus) == (1, 3))
    assert (br.r, br.x) == (0.10, 0.10)
    assert all(b.rate_a is None for b in net.branches)  # rateA = 0 means unlimited


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.name)
def test_parse_write_parse_identity(path):
    case = parse(path.read_text())
    again = parse(write_case(case))
    assert again == case


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.name)
def test_lower_build_round_trip(path):
    net = read_network(path)
    assert_networks_close(lower(parse(write(net))), net)


def test_missing_gencost_gives_zero_costs():
    text = with_rows("gen", "1 50 0 10 -10 1 100 1 100 0")
    net = lower(parse(text))
    assert net.generators[0].cost.c1 == 0 and net.generators[0].cost.c2 == 0


def test_legacy_gen_rows_and_zero_pmax():
    net = lower(parse(with_rows("gen", "1 0 0 10 -10 1 100 1 0 0")))
    g = net.generators[0]
    assert g.p_max == 0 and g.q_max == pytest.approx(0.1)


def test_provenance_and_unlimited_rate():
    net = read_network(FIXTURES / "case3.m")
    text = write(net, ["models: AG-Stat", "seed: 42"])
    assert "% models: AG-Stat" in text and "% seed: 42" in text
    branch_rows = build(net).branch
    assert all(r[5] == 0.0 for r in branch_rows)
    assert parse(text).comments[:2] == ("models: AG-Stat", "seed: 42")


def test_syntax_error_has_position():
    bad = MINIMAL.replace("0.9;", "0.9x;")
    with pytest.raises(CaseSyntaxError) as err:
        parse(bad)
    assert err.value.line == 4 and err.value.column > 1


@pytest.mark.parametrize("text, fragment", [
    (MINIMAL.replace("\t1.1\t0.9;", "\t1.1;"), "bus row 0"),
    (with_rows("gen", "1 0 0 10 -10 1 100 1 0"), "gen row 0"),
    (MINIMAL.replace("0.9;", "NaN;"), "NaN"),
    (MINIMAL.replace("0.9;", "abc;"), "non-numeric"),
    (MINIMAL.replace("mpc.baseMVA = 100;\n", ""), "baseMVA"),
    (MINIMAL.replace("];\n", ""), "unterminated"),
])
def test_parse_errors(text, fragment):
    with pytest.raises((CaseSyntaxError, CaseFormatError)) as err:
        parse(text)
    assert fragment in str(err.value)


@pytest.mark.parametrize("text, fragment", [
    (MINIMAL.replace("\t1\t3\t0\t0", "\t1\t7\t0\t0"), "bus type"),
    (MINIMAL + "mpc.gen = [\n1 0 0 1 -1 1 100 1 1 0;\n];\nmpc.gencost = [\n1 0 0 2 0 0 1 10;\n];\n", "piecewise"),
    (MINIMAL + "mpc.branch = [\n1 1 0.1 0 0 0 0 0 0 0 1 -360 360;\n];\n", "reactance"),
])
def test_lower_errors(text, fragment):
    with pytest.raises(CaseFormatError) as err:
        lower(parse(text))
    assert fragment in str(err.value)


def test_inf_accepted_and_angle_bounds():
    net = read_network(FIXTURES / "case3.m")
    assert math.isinf(net.generators[0].p_max)
    assert all(math.isinf(b.angle_max) for b in net.branches)


def test_genfuel_round_trip():
    net = read_network(FIXTURES / "case3_api.m")
    assert [g.fuel for g in net.generators] == [FuelCategory.NUC, FuelCategory.PEL]
    assert [g.fuel for g in lower(parse(write(net))).generators] == [FuelCategory.NUC, FuelCategory.PEL]


def test_written_angle_bounds_are_short():
    net = read_network(FIXTURES / "case3.m")
    net = net.with_branches([replace(b, angle_min=-math.radians(30), angle_max=math.radians(30))
                             for b in net.branches])
    assert "\t-30\t30;" in write(net)


@settings(max_examples=300)
@given(st.floats(allow_nan=False))
def test_format_number_round_trips(v):
    assert float(format_number(v).replace("Inf", "inf")) == v
