import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridcurate.fleet import (DEFAULT_CAPACITY_EXP, DEFAULT_CAPACITY_NORM, DEFAULT_COST_NORM, DEFAULT_MODELS,
                              AugmentModels, CapacityBins, FleetDataError, FleetRecord, PriceRecord,
                              UnknownFuelCode, balance_proportions, convert_price, filter_fleet, fit_bins,
                              fit_exponential, fit_loglog, fit_models, fit_normal, fit_summer_reduction,
                              map_fuel, read_fleet_csv, read_line_points_csv, read_prices_csv)
from gridcurate.network import FuelCategory as F

positive = st.floats(0.01, 1e4, allow_nan=False)


def rec(mw, code="NG", status="OP", summer=None):
    return FleetRecord(status, code, mw, mw if summer is None else summer)


@pytest.mark.parametrize("code, cat", [("ANT", F.COW), ("NUC", F.NUC), ("ng", F.NG), ("RC", F.PEL), ("WND", F.RN)])
def test_map_fuel(code, cat):
    assert map_fuel(code) == cat


def test_unknown_fuel_code():
    with pytest.raises(UnknownFuelCode):
        map_fuel("XYZ")


def test_filter_fleet(caplog):
    records = [rec(100, "WND"), rec(4.9), rec(5.0), rec(50, status="SB"), rec(20, "XYZ")]
    with caplog.at_level(logging.WARNING):
        kept = filter_fleet(records, min_mw=5)
    assert kept == [rec(5.0)]
    assert "XYZ" in caplog.text


def test_bins_single_degenerate_bin():
    records = [rec(50, "NG" if k % 2 else "BIT") for k in range(200)]
    bins = fit_bins(records)
    assert len(bins) == 1
    assert bins.weights[0] == {F.NG: 0.5, F.COW: 0.5}


def test_bins_merge_short_tail():
    bins = fit_bins([rec(10 + k) for k in range(250)])
    assert bins.counts == (100, 150)
    assert bins.edges == (10, 110, 259)


def test_bins_need_enough_records():
    with pytest.raises(FleetDataError):
        fit_bins([rec(10)] * 50)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(5, 2000), st.sampled_from(["NG", "BIT", "NUC", "DFO"])),
                min_size=100, max_size=600))
def test_bins_properties(items):
    records = [rec(mw, code) for mw, code in items]
    bins = fit_bins(records)
    caps = [mw for mw, _ in items]
    assert all(abs(sum(w.values()) - 1) < 1e-9 for w in bins.weights)
    assert sum(bins.counts) == len(items)
    assert bins.edges[0] == min(caps) and bins.edges[-1] == max(caps)
    assert bins.bin_of(min(caps)) == 0 and bins.bin_of(max(caps)) == len(bins) - 1
    assert all(c >= 100 for c in bins.counts)


def test_bins_clamp_outside_range():
    bins = CapacityBins((10.0, 20.0, 30.0), ({F.NG: 1.0}, {F.COW: 1.0}))
    assert (bins.bin_of(1.0), bins.bin_of(15.0), bins.bin_of(20.0), bins.bin_of(1e6)) == (0, 0, 1, 1)
    assert bins.sample(25, np.random.default_rng(0)) == F.COW


def test_exponential_examples():
    assert fit_exponential([1, 2, 3]) == 0.5
    assert fit_exponential([7.0] * 5) == pytest.approx(1 / 7)
    with pytest.raises(FleetDataError):
        fit_exponential([1.0, -1.0])


def test_normal_examples():
    assert fit_normal([1, 1, 1]) == (1, 0)
    assert fit_normal([0, 2]) == (1, 1)


@pytest.mark.parametrize("fuel", sorted(DEFAULT_CAPACITY_EXP, key=lambda c: c.value))
def test_exponential_recovers_capacity_laws(fuel):
    rate = DEFAULT_CAPACITY_EXP[fuel]
    draws = np.random.default_rng(1).exponential(1 / rate, 100_000)
    assert fit_exponential(draws) == pytest.approx(rate, rel=0.02)


@pytest.mark.parametrize("mu, sigma", list(DEFAULT_CAPACITY_NORM.values()) + list(DEFAULT_COST_NORM.values()))
def test_normal_recovers_parameters(mu, sigma):
    draws = np.random.default_rng(2).normal(mu, sigma, 100_000)
    m, s = fit_normal(draws)
    assert m == pytest.approx(mu, rel=0.02) and s == pytest.approx(sigma, rel=0.02)


@settings(max_examples=50)
@given(st.lists(positive, min_size=2, max_size=30), st.floats(0.1, 100))
def test_fits_are_scale_equivariant(xs, s):
    scaled = [s * x for x in xs]
    assert fit_exponential(scaled) == pytest.approx(fit_exponential(xs) / s, rel=1e-9)
    m, sd = fit_normal(xs)
    m2, sd2 = fit_normal(scaled)
    assert m2 == pytest.approx(s * m, rel=1e-9) and sd2 == pytest.approx(s * sd, rel=1e-7, abs=1e-9)


def test_loglog_examples():
    xs = np.geomspace(0.5, 50, 40)
    a, k = fit_loglog([(x, math.exp(-5.0886) * x ** 0.4772) for x in xs])
    assert a == pytest.approx(-5.0886, rel=1e-9) and k == pytest.approx(0.4772, rel=1e-9)
    assert fit_loglog([(x, x) for x in xs]) == pytest.approx((0, 1), abs=1e-12)
    a, k = fit_loglog([(1.0, 2.0), (4.0, 8.0)])
    assert k == pytest.approx(1.0) and a == pytest.approx(math.log(2.0))
    with pytest.raises(FleetDataError):
        fit_loglog([(1.0, 2.0), (1.0, 3.0)])


@settings(max_examples=30)
@given(st.lists(st.tuples(positive, positive), min_size=3, max_size=20, unique_by=lambda p: p[0]))
def test_loglog_duplication_invariant(pts):
    a, k = fit_loglog(pts)
    a2, k2 = fit_loglog(pts + pts)
    assert a2 == pytest.approx(a, rel=1e-9, abs=1e-9) and k2 == pytest.approx(k, rel=1e-9, abs=1e-9)


def test_balance_proportions():
    out = balance_proportions([list(range(2600)), list(range(10_000, 10_650))], np.random.default_rng(0))
    assert len(out) == 5200
    assert sum(v >= 10_000 for v in out) == 2600


def test_convert_price():
    assert convert_price(0) == 0
    assert convert_price(0.29307107) == pytest.approx(1.0)
    assert convert_price(1.0) == pytest.approx(3.41214, rel=1e-5)


def test_summer_reduction():
    red = fit_summer_reduction([rec(100, summer=90), rec(200, summer=160), rec(10, "NUC", summer=10)])
    assert red[F.NG] == pytest.approx(0.15) and red[F.NUC] == 0


def test_models_json_round_trip():
    text = DEFAULT_MODELS.to_json()
    assert AugmentModels.from_json(text) == DEFAULT_MODELS
    assert json.loads(text)["schema_version"] == 1


def test_default_bins_cover_range():
    bins = DEFAULT_MODELS.bins
    assert bins.edges[0] == 5.0 and bins.edges[-1] == 1440.0
    assert len(bins) == (665 + 2912 + 852 + 102) // 100
    assert F.NUC in bins.weights[-1]


def write_csv(path, header, rows):
    path.write_text(",".join(header) + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


def test_csv_readers(tmp_path):
    fleet = read_fleet_csv(write_csv(tmp_path / "f.csv", ["status", "energy_source", "nameplate_mw", "summer_mw"],
                                     [["OP", "NG", 100, 90]]))
    assert fleet == [rec(100, summer=90)]
    prices = read_prices_csv(write_csv(tmp_path / "p.csv", ["state", "seds_label", "price_per_mmbtu"],
                                       [["TX", "Coal", 2.0]]))
    assert prices == [PriceRecord("TX", "Coal", 2.0)]
    pts = read_line_points_csv(write_csv(tmp_path / "l.csv", ["x_over_r", "normalized_capacity", "dataset"],
                                         [[2, 0.1, "a"], [3, 0.2, "b"]]))
    assert pts == {"a": [(2.0, 0.1)], "b": [(3.0, 0.2)]}
    bad = write_csv(tmp_path / "bad.csv", ["status", "energy_source", "nameplate_mw", "summer_mw"],
                    [["OP", "NG", "lots", 90]])
    with pytest.raises(FleetDataError, match=":2:"):
        read_fleet_csv(bad)
    with pytest.raises(FleetDataError, match="missing columns"):
        read_fleet_csv(write_csv(tmp_path / "x.csv", ["status"], [["OP"]]))


def test_fit_models_recovers_synthetic_laws():
    rng = np.random.default_rng(3)
    fleet = []
    for code, fuel in (("DFO", F.PEL), ("NG", F.NG), ("BIT", F.COW)):
        rate = DEFAULT_CAPACITY_EXP[fuel]
        # shift by the 5 MW floor so the filtered sample stays exponential after subtracting it
        fleet += [rec(float(v), code) for v in rng.exponential(1 / rate, 30_000) + 5.0]
    fleet += [rec(float(v), "NUC") for v in rng.normal(1044.56, 219.27, 30_000)]
    models = fit_models(fleet, [PriceRecord("S", "Coal", p) for p in rng.normal(3.0, 0.3, 1000)])
    for fuel, rate in DEFAULT_CAPACITY_EXP.items():
        assert 1 / (1 / models.capacity_exp[fuel] - 5.0) == pytest.approx(rate, rel=0.02)
    assert models.capacity_norm[F.NUC] == pytest.approx((1044.56, 219.27), rel=0.02)
    assert models.cost_norm[F.COW][0] == pytest.approx(convert_price(3.0), rel=0.02)
    assert models.cost_norm[F.NG] == DEFAULT_COST_NORM[F.NG]  # no data, default kept
