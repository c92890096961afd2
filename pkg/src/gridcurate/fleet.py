"""Generator fleet and fuel price ingestion plus the statistical model fits.

Input files are small named-column CSVs:

* fleet: ``status, energy_source, nameplate_mw, summer_mw``
* prices: ``state, seds_label, price_per_mmbtu``
* line points (optional): ``x_over_r, normalized_capacity, dataset``
"""

from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .network import FuelCategory

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MWH_PER_MMBTU = 0.29307107
DEFAULT_MIN_MW = 5.0
IN_SERVICE = frozenset({"OP"})
FITTED_FUELS = (FuelCategory.PEL, FuelCategory.NG, FuelCategory.COW, FuelCategory.NUC)
EXPONENTIAL_FUELS = (FuelCategory.PEL, FuelCategory.NG, FuelCategory.COW)
NORMAL_FUELS = (FuelCategory.NUC,)
MIN_BIN_SAMPLES = 100

_FUEL_TABLE = {
    FuelCategory.COW: "ANT BIT LIG SUB WC",
    FuelCategory.PEL: "RC DFO JF KER PC RFO WO",
    FuelCategory.NG: "BFG NG OG PG SG SGC",
    FuelCategory.NUC: "NUC",
    FuelCategory.BIO: "AB MSW OBS WDS OBL SLW BLQ WDL",
    FuelCategory.DRN: "WAT GEO",
    FuelCategory.RN: "SUN WND",
}
FUEL_CODES: dict[str, FuelCategory] = {code: cat for cat, codes in _FUEL_TABLE.items() for code in codes.split()}

SEDS_LABELS: dict[str, FuelCategory] = {
    "Distillate Fuel Oil": FuelCategory.PEL,
    "Natural Gas": FuelCategory.NG,
    "Coal": FuelCategory.COW,
    "Nuclear Fuel": FuelCategory.NUC,
}


class FleetDataError(ValueError):
    """Malformed input data or a fit without enough samples."""


class UnknownFuelCode(FleetDataError):
    def __init__(self, code: str):
        super().__init__(f"unknown energy source code {code!r}")
        self.code = code


@dataclass(frozen=True)
class FleetRecord:
    status: str
    energy_source: str
    nameplate_mw: float
    summer_mw: float

    def __post_init__(self):
        if not (self.nameplate_mw >= 0 and self.summer_mw >= 0):
            raise FleetDataError(f"negative capacity in {self}")


@dataclass(frozen=True)
class PriceRecord:
    state: str
    seds_label: str
    price_per_mmbtu: float

    def __post_init__(self):
        if not self.price_per_mmbtu >= 0:
            raise FleetDataError(f"negative price in {self}")


# -- CSV ingestion ------------------------------------------------------------

def _read_rows(path, required: Sequence[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise FleetDataError(f"{path}: missing columns {missing}")
        return list(reader)


def _num(row: dict, key: str, path, line: int) -> float:
    try:
        v = float(row[key])
    except (TypeError, ValueError):
        raise FleetDataError(f"{path}:{line}: column {key!r} is not a number: {row[key]!r}") from None
    if math.isnan(v):
        raise FleetDataError(f"{path}:{line}: column {key!r} is NaN")
    return v


def read_fleet_csv(path) -> list[FleetRecord]:
    rows = _read_rows(path, ("status", "energy_source", "nameplate_mw", "summer_mw"))
    out = []
    for line, r in enumerate(rows, start=2):
        try:
            out.append(FleetRecord(r["status"].strip(), r["energy_source"].strip(),
                                   _num(r, "nameplate_mw", path, line), _num(r, "summer_mw", path, line)))
        except FleetDataError as exc:
            raise FleetDataError(f"{path}:{line}: {exc}") from None
    return out


def read_prices_csv(path) -> list[PriceRecord]:
    rows = _read_rows(path, ("state", "seds_label", "price_per_mmbtu"))
    out = []
    for line, r in enumerate(rows, start=2):
        try:
            out.append(PriceRecord(r["state"].strip(), r["seds_label"].strip(),
                                   _num(r, "price_per_mmbtu", path, line)))
        except FleetDataError as exc:
            raise FleetDataError(f"{path}:{line}: {exc}") from None
    return out


def read_line_points_csv(path) -> dict[str, list[tuple[float, float]]]:
    """Thermal-limit regression points grouped by their ``dataset`` column."""
    rows = _read_rows(path, ("x_over_r", "normalized_capacity", "dataset"))
    groups: dict[str, list[tuple[float, float]]] = {}
    for line, r in enumerate(rows, start=2):
        pt = (_num(r, "x_over_r", path, line), _num(r, "normalized_capacity", path, line))
        groups.setdefault(r["dataset"].strip(), []).append(pt)
    return groups


# -- classification and filtering ----------------------------------------------

def map_fuel(code: str) -> FuelCategory:
    try:
        return FUEL_CODES[code.strip().upper()]
    except KeyError:
        raise UnknownFuelCode(code) from None


def filter_fleet(records: Iterable[FleetRecord], min_mw: float = DEFAULT_MIN_MW,
                 statuses: frozenset[str] = IN_SERVICE) -> list[FleetRecord]:
    """In-service COW/PEL/NG/NUC units with nameplate at least ``min_mw``."""
    if min_mw < 0:
        raise ValueError("min_mw must be non-negative")
    keep = []
    unknown: set[str] = set()
    for r in records:
        try:
            cat = map_fuel(r.energy_source)
        except UnknownFuelCode:
            unknown.add(r.energy_source)
            continue
        if r.status.upper() in statuses and cat in FITTED_FUELS and r.nameplate_mw >= min_mw:
            keep.append(r)
    if unknown:
        log.warning("dropped records with unknown energy source codes: %s", ", ".join(sorted(unknown)))
    return keep


# -- capacity bins --------------------------------------------------------------

@dataclass(frozen=True)
class CapacityBins:
    """Contiguous nameplate-capacity bins with per-bin fuel frequencies.

    ``edges[i]`` is the smallest capacity in bin ``i`` and ``edges[-1]`` the
    largest capacity overall, so there is one more edge than bins.
    """

    edges: tuple[float, ...]
    weights: tuple[Mapping[FuelCategory, float], ...]
    counts: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.edges) != len(self.weights) + 1:
            raise ValueError("need exactly one more edge than bins")
        lower = self.edges[:-1]
        if any(b <= a for a, b in zip(lower, lower[1:])) or self.edges[-1] < lower[-1]:
            raise ValueError("bin edges must increase")
        for w in self.weights:
            if abs(sum(w.values()) - 1.0) > 1e-9:
                raise ValueError("bin weights must sum to 1")

    def __len__(self) -> int:
        return len(self.weights)

    def bin_of(self, capacity_mw: float) -> int:
        """Bin holding ``capacity_mw``; values outside the range clamp to the edge bins."""
        return min(max(bisect.bisect_right(self.edges[:-1], capacity_mw) - 1, 0), len(self) - 1)

    def sample(self, capacity_mw: float, rng: np.random.Generator) -> FuelCategory:
        w = self.weights[self.bin_of(capacity_mw)]
        cats = sorted(w, key=lambda c: c.value)
        p = np.array([w[c] for c in cats])
        return cats[int(rng.choice(len(cats), p=p / p.sum()))]


def fit_bins(records: Sequence[FleetRecord], min_samples: int = MIN_BIN_SAMPLES) -> CapacityBins:
    """Greedy left-to-right bins of at least ``min_samples`` units; ties never split."""
    if len(records) < min_samples:
        raise FleetDataError(f"need at least {min_samples} records to fit bins, got {len(records)}")
    items = sorted(((r.nameplate_mw, map_fuel(r.energy_source)) for r in records), key=lambda t: t[0])
    groups: list[list[tuple[float, FuelCategory]]] = [[]]
    for k, item in enumerate(items):
        groups[-1].append(item)
        nxt = items[k + 1][0] if k + 1 < len(items) else None
        if len(groups[-1]) >= min_samples and nxt is not None and nxt != item[0]:
            groups.append([])
    if len(groups) > 1 and len(groups[-1]) < min_samples:
        groups[-2].extend(groups.pop())
    edges = [g[0][0] for g in groups] + [items[-1][0]]
    weights = []
    for g in groups:
        freq: dict[FuelCategory, float] = {}
        for _, cat in g:
            freq[cat] = freq.get(cat, 0.0) + 1.0
        weights.append({c: v / len(g) for c, v in freq.items()})
    return CapacityBins(tuple(edges), tuple(weights), tuple(len(g) for g in groups))


# -- distribution fits ----------------------------------------------------------

def fit_exponential(samples: Sequence[float]) -> float:
    """Maximum-likelihood rate ``1 / mean``."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or np.any(~(x > 0)):
        raise FleetDataError("exponential fit needs positive samples")
    return float(1.0 / x.mean())


def fit_normal(samples: Sequence[float]) -> tuple[float, float]:
    """Maximum-likelihood mean and (divide-by-n) standard deviation."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise FleetDataError("normal fit needs at least 2 samples")
    return float(x.mean()), float(x.std())


def fit_loglog(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares ``ln y = a + k ln x``; returns ``(a, k)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise FleetDataError("log-log fit needs at least 2 points")
    if np.any(~(pts > 0)):
        raise FleetDataError("log-log fit needs positive coordinates")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise FleetDataError("log-log fit is degenerate: all x equal")
    res = stats.linregress(lx, ly)
    return float(res.intercept), float(res.slope)


def balance_proportions(groups: Sequence[Sequence], rng: np.random.Generator) -> list:
    """Resample every group with replacement up to the size of the largest one."""
    groups = [list(g) for g in groups if len(g)]
    if not groups:
        return []
    size = max(len(g) for g in groups)
    out = []
    for g in groups:
        if len(g) == size:
            out.extend(g)
        else:
            out.extend(g[i] for i in rng.integers(0, len(g), size=size))
    return out


def convert_price(price_per_mmbtu: float) -> float:
    """$/MMBtu to $/MWh."""
    if price_per_mmbtu < 0:
        raise ValueError("price must be non-negative")
    return price_per_mmbtu / MWH_PER_MMBTU


def fit_summer_reduction(records: Iterable[FleetRecord]) -> dict[FuelCategory, float]:
    """Mean relative drop from nameplate to summer capacity, per fuel."""
    acc: dict[FuelCategory, list[float]] = {}
    for r in records:
        if r.nameplate_mw > 0:
            acc.setdefault(map_fuel(r.energy_source), []).append(1.0 - r.summer_mw / r.nameplate_mw)
    return {c: float(min(max(np.mean(v), 0.0), 1.0 - 1e-9)) for c, v in acc.items()}


# -- model bundle -----------------------------------------------------------------

@dataclass(frozen=True)
class AugmentModels:
    bins: CapacityBins
    capacity_exp: Mapping[FuelCategory, float]  # rate, 1/MW
    capacity_norm: Mapping[FuelCategory, tuple[float, float]]  # (mu, sigma) MW
    summer_reduction: Mapping[FuelCategory, float]  # fraction
    cost_norm: Mapping[FuelCategory, tuple[float, float]]  # (mu, sigma) $/MWh
    tl_loglog: tuple[float, float] = (-5.0886, 0.4772)

    def __post_init__(self):
        if any(not lam > 0 for lam in self.capacity_exp.values()):
            raise ValueError("exponential rates must be positive")
        if any(s < 0 for _, s in list(self.capacity_norm.values()) + list(self.cost_norm.values())):
            raise ValueError("standard deviations must be non-negative")
        if any(not 0 <= r < 1 for r in self.summer_reduction.values()):
            raise ValueError("summer reductions must lie in [0, 1)")

    def to_dict(self) -> dict:
        def fuels(m, fn):
            return {c.value: fn(v) for c, v in sorted(m.items(), key=lambda kv: kv[0].value)}

        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "augment-models",
            "bins": {
                "edges_mw": list(self.bins.edges),
                "counts": list(self.bins.counts),
                "weights": [fuels(w, float) for w in self.bins.weights],
            },
            "capacity_exp_rate_per_mw": fuels(self.capacity_exp, float),
            "capacity_normal_mw": fuels(self.capacity_norm, lambda v: {"mu": v[0], "sigma": v[1]}),
            "summer_reduction_fraction": fuels(self.summer_reduction, float),
            "cost_normal_usd_per_mwh": fuels(self.cost_norm, lambda v: {"mu": v[0], "sigma": v[1]}),
            "tl_loglog": {"a": self.tl_loglog[0], "k": self.tl_loglog[1]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "AugmentModels":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise FleetDataError(f"unsupported models schema_version {d.get('schema_version')!r}")
        F = FuelCategory
        try:
            b = d["bins"]
            bins = CapacityBins(tuple(b["edges_mw"]),
                                tuple({F(k): float(v) for k, v in w.items()} for w in b["weights"]),
                                tuple(b.get("counts", ())))
            return cls(
                bins=bins,
                capacity_exp={F(k): float(v) for k, v in d["capacity_exp_rate_per_mw"].items()},
                capacity_norm={F(k): (float(v["mu"]), float(v["sigma"])) for k, v in d["capacity_normal_mw"].items()},
                summer_reduction={F(k): float(v) for k, v in d["summer_reduction_fraction"].items()},
                cost_norm={F(k): (float(v["mu"]), float(v["sigma"]))
                           for k, v in d["cost_normal_usd_per_mwh"].items()},
                tl_loglog=(float(d["tl_loglog"]["a"]), float(d["tl_loglog"]["k"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FleetDataError(f"malformed models document: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "AugmentModels":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "AugmentModels":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# Built-in fits; the unit counts weight the built-in bins.
DEFAULT_CAPACITY_EXP = {FuelCategory.PEL: 0.023254, FuelCategory.NG: 0.009188, FuelCategory.COW: 0.003201}
DEFAULT_CAPACITY_NORM = {FuelCategory.NUC: (1044.56, 219.27)}
DEFAULT_SUMMER_REDUCTION = {FuelCategory.PEL: 0.1611, FuelCategory.NG: 0.1298,
                          FuelCategory.COW: 0.0848, FuelCategory.NUC: 0.0580}
DEFAULT_COST_NORM = {FuelCategory.PEL: (6.8828, 0.3334), FuelCategory.NG: (1.0606, 0.2006),
                   FuelCategory.COW: (0.7683, 0.2452), FuelCategory.NUC: (0.2101, 0.0199)}
DEFAULT_UNIT_COUNTS = {FuelCategory.PEL: 665, FuelCategory.NG: 2912, FuelCategory.COW: 852, FuelCategory.NUC: 102}
DEFAULT_CAPACITY_RANGE_MW = (5.0, 1440.0)
DEFAULT_TL_LOGLOG = (-5.0886, 0.4772)


def mixture_bins(capacity_exp: Mapping[FuelCategory, float],
                 capacity_norm: Mapping[FuelCategory, tuple[float, float]],
                 counts: Mapping[FuelCategory, int],
                 lo: float, hi: float, min_samples: int = MIN_BIN_SAMPLES) -> CapacityBins:
    """Bins computed from parametric capacity laws instead of raw records.

    The count-weighted mixture is restricted to ``[lo, hi]`` and cut into
    equal-mass bins of about ``min_samples`` units each.
    """
    dists = {c: stats.expon(scale=1.0 / lam) for c, lam in capacity_exp.items()}
    dists.update({c: stats.norm(mu, sd) for c, (mu, sd) in capacity_norm.items()})
    cats = sorted(dists, key=lambda c: c.value)
    mass = {c: counts[c] * (dists[c].cdf(hi) - dists[c].cdf(lo)) for c in cats}
    total_units = sum(counts[c] for c in cats)
    nbins = max(1, total_units // min_samples)
    grid = np.linspace(lo, hi, 20001)
    cdf = sum(counts[c] * (dists[c].cdf(grid) - dists[c].cdf(lo)) for c in cats) / sum(mass.values())
    inner = [float(np.interp(q, cdf, grid)) for q in np.arange(1, nbins) / nbins]
    edges = [lo] + inner + [hi]
    weights = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = {c: counts[c] * (dists[c].cdf(b) - dists[c].cdf(a)) for c in cats}
        s = sum(m.values())
        weights.append({c: float(v / s) for c, v in m.items() if v > 0})
    return CapacityBins(tuple(edges), tuple(weights), tuple(round(total_units / nbins) for _ in weights))


def default_models() -> AugmentModels:
    bins = mixture_bins(DEFAULT_CAPACITY_EXP, DEFAULT_CAPACITY_NORM, DEFAULT_UNIT_COUNTS, *DEFAULT_CAPACITY_RANGE_MW)
    return AugmentModels(bins=bins, capacity_exp=dict(DEFAULT_CAPACITY_EXP), capacity_norm=dict(DEFAULT_CAPACITY_NORM),
                         summer_reduction=dict(DEFAULT_SUMMER_REDUCTION), cost_norm=dict(DEFAULT_COST_NORM),
                         tl_loglog=DEFAULT_TL_LOGLOG)


DEFAULT_MODELS = default_models()


def fit_models(fleet: Sequence[FleetRecord], prices: Sequence[PriceRecord], min_mw: float = DEFAULT_MIN_MW,
               line_points: Optional[Mapping[str, Sequence[tuple[float, float]]]] = None,
               rng: Optional[np.random.Generator] = None,
               base: AugmentModels = DEFAULT_MODELS) -> AugmentModels:
    """Fit every model that the inputs support; the rest come from ``base``."""
    kept = filter_fleet(fleet, min_mw)
    if not kept:
        raise FleetDataError("no fleet records survive filtering")
    by_fuel: dict[FuelCategory, list[float]] = {}
    for r in kept:
        by_fuel.setdefault(map_fuel(r.energy_source), []).append(r.nameplate_mw)
    cap_exp = dict(base.capacity_exp)
    cap_norm = dict(base.capacity_norm)
    for c in EXPONENTIAL_FUELS:
        if len(by_fuel.get(c, ())) >= 2:
            cap_exp[c] = fit_exponential(by_fuel[c])
    for c in NORMAL_FUELS:
        if len(by_fuel.get(c, ())) >= 2:
            cap_norm[c] = fit_normal(by_fuel[c])
    reduction = {**base.summer_reduction, **fit_summer_reduction(kept)}

    cost = dict(base.cost_norm)
    by_label: dict[FuelCategory, list[float]] = {}
    for p in prices:
        cat = SEDS_LABELS.get(p.seds_label)
        if cat is not None:
            by_label.setdefault(cat, []).append(convert_price(p.price_per_mmbtu))
    for c, vals in by_label.items():
        if len(vals) >= 2:
            cost[c] = fit_normal(vals)

    tl = base.tl_loglog
    if line_points:
        rng = rng if rng is not None else np.random.default_rng(0)
        groups = [line_points[k] for k in sorted(line_points)]
        tl = fit_loglog(balance_proportions(groups, rng))
    return AugmentModels(bins=fit_bins(kept), capacity_exp=cap_exp, capacity_norm=cap_norm,
                         summer_reduction=reduction, cost_norm=cost, tl_loglog=tl)
