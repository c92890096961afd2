"""Complete a network with fuel, capacity, cost and thermal-limit models.

Randomness is drawn from per-element streams: element ``k`` of stage ``s``
uses ``PCG64(SeedSequence(seed, spawn_key=(s, k)))``, so results do not
depend on the order in which elements are processed.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .fleet import AugmentModels, CapacityBins, DEFAULT_MODELS
from .network import Branch, Bus, BusKind, CostPoly, FuelCategory, Generator, Network

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
MAX_DRAWS = 100
RG_FRACTION = 0.5
TL_UB_THETA_DEG = 15.0
TL_UB_MARGIN = 10.0  # "large compared to" read as an order of magnitude
STAT_REFERENCE_MVA = 100.0

GF_STAT, AG_STAT, RG_AM50, RG_AL50, AC_STAT, TL_STAT, TL_UB = (
    "GF-Stat", "AG-Stat", "RG-AM50", "RG-AL50", "AC-Stat", "TL-Stat", "TL-UB")

# RNG stage identifiers; part of the reproducibility contract
_STAGE = {GF_STAT: 1, AG_STAT: 2, AC_STAT: 3}


class AugmentError(ValueError):
    pass


def element_rng(seed: int, stage: str, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_STAGE[stage], index))))


# -- plan and log -------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentPlan:
    gf_stat: bool = False
    ag_stat: bool = False
    reactive: Optional[str] = None  # RG_AM50 or RG_AL50
    ac_stat: bool = False
    tl_stat: bool = False
    tl_ub: bool = False
    angle_bound_deg: Optional[float] = None
    seed: int = 0
    models: AugmentModels = DEFAULT_MODELS
    tl_ub_theta_deg: float = TL_UB_THETA_DEG
    tl_voltage_unit: str = "kV"  # how TL-Stat reads the nominal voltage: "kV" or "pu"

    def __post_init__(self):
        if self.reactive not in (None, RG_AM50, RG_AL50):
            raise AugmentError(f"unknown reactive model {self.reactive!r}")
        if self.angle_bound_deg is not None and not 0 < self.angle_bound_deg <= 90:
            raise AugmentError("angle bound must lie in (0, 90] degrees")
        if not 0 <= self.tl_ub_theta_deg <= 90:
            raise AugmentError("TL-UB angle must lie in [0, 90] degrees")
        if self.tl_voltage_unit not in ("kV", "pu"):
            raise AugmentError("tl_voltage_unit must be 'kV' or 'pu'")
        if not 0 <= self.seed < 2 ** 64:
            raise AugmentError("seed must be a 64-bit unsigned integer")

    @property
    def model_names(self) -> list[str]:
        names = [n for n, on in ((GF_STAT, self.gf_stat), (AG_STAT, self.ag_stat)) if on]
        if self.reactive:
            names.append(self.reactive)
        names += [n for n, on in ((AC_STAT, self.ac_stat), (TL_STAT, self.tl_stat), (TL_UB, self.tl_ub)) if on]
        if self.angle_bound_deg is not None:
            names.append(f"angle bound {self.angle_bound_deg:g} deg")
        return names

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any], **overrides) -> "AugmentPlan":
        allowed = {"gf_stat", "ag_stat", "reactive", "ac_stat", "tl_stat", "tl_ub", "angle_bound_deg",
                   "seed", "tl_ub_theta_deg", "tl_voltage_unit"}
        unknown = set(cfg) - allowed
        if unknown:
            raise AugmentError(f"unknown plan keys: {sorted(unknown)}")
        merged = {**cfg, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


def plan_config(text: str, fmt: str = "toml") -> dict:
    """Plan settings from TOML or JSON text; a top-level ``plan`` table is unwrapped."""
    try:
        cfg = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise AugmentError(f"malformed plan: {exc}") from None
    return dict(cfg.get("plan", cfg))


def default_plan_config() -> dict:
    """The bundled recipe for IEEE power-flow cases."""
    return plan_config(resources.files("gridcurate").joinpath("data/default_plan.toml").read_text(encoding="utf-8"))


def load_plan(path, **overrides) -> AugmentPlan:
    """Read a plan file; ``overrides`` that are not None win over file values."""
    fmt = "json" if str(path).endswith(".json") else "toml"
    return AugmentPlan.from_mapping(plan_config(Path(path).read_text(encoding="utf-8"), fmt), **overrides)


@dataclass(frozen=True)
class LogRecord:
    element: str  # "gen" or "branch"
    index: int
    field: str
    model: str
    old: Any
    new: Any
    unit: str = ""
    draws: int = 0
    note: str = ""


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, FuelCategory):
        return v.value
    return v


@dataclass
class AugmentLog:
    records: list[LogRecord] = field(default_factory=list)

    def add(self, *args, **kw) -> None:
        self.records.append(LogRecord(*args, **kw))

    def __len__(self) -> int:
        return len(self.records)

    def to_dict(self, plan: Optional[AugmentPlan] = None) -> dict:
        doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "kind": "augment-log"}
        if plan is not None:
            doc["seed"] = plan.seed
            doc["models"] = plan.model_names
        doc["records"] = [{k: _jsonable(v) for k, v in r.__dict__.items()} for r in self.records]
        return doc

    def to_json(self, plan: Optional[AugmentPlan] = None) -> str:
        return json.dumps(self.to_dict(plan), indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- generator models -----------------------------------------------------------

def _specified(value: float) -> bool:
    return math.isfinite(value) and value > 0


def classify_fuel(gen: Generator, bins: CapacityBins, rng: np.random.Generator, base_mva: float = 100.0,
                  at_slack: bool = False) -> FuelCategory:
    """Fuel category by capacity bin; SYNC and slack-bus special cases first."""
    if gen.p_max == 0:
        return FuelCategory.SYNC
    if at_slack and gen.pg == 0:
        return FuelCategory.NUC
    key = gen.p_max if _specified(gen.p_max) else gen.pg
    return bins.sample(key * base_mva, rng)


def _draw_capacity(fuel: FuelCategory, models: AugmentModels, rng: np.random.Generator) -> float:
    if fuel in models.capacity_exp:
        return float(rng.exponential(1.0 / models.capacity_exp[fuel]))
    mu, sigma = models.capacity_norm[fuel]
    return float(rng.normal(mu, sigma))


def ag_stat_mw(reference_mw: float, fuel: FuelCategory, models: AugmentModels,
               rng: np.random.Generator) -> tuple[float, int, bool]:
    """Nameplate capacity above ``reference_mw``; returns (MW, draws used, fallback used)."""
    if fuel == FuelCategory.SYNC:
        return 0.0, 0, False
    if fuel not in models.capacity_exp and fuel not in models.capacity_norm:
        raise AugmentError(f"no capacity model for fuel {fuel.value}")
    for k in range(1, MAX_DRAWS + 1):
        # negative normal draws never beat a non-negative reference, which truncates at 0
        d = _draw_capacity(fuel, models, rng)
        if d > reference_mw:
            return d, k, False
    return reference_mw / (1.0 - models.summer_reduction[fuel]), MAX_DRAWS, True


def ag_stat(gen: Generator, fuel: FuelCategory, models: AugmentModels, rng: np.random.Generator,
            base_mva: float = 100.0) -> float:
    """New ``p_max`` in p.u."""
    ref = gen.p_max if math.isfinite(gen.p_max) else gen.pg
    return ag_stat_mw(max(ref, 0.0) * base_mva, fuel, models, rng)[0] / base_mva


def rg_am50(q_min: float, q_max: float, nameplate: float) -> tuple[float, float]:
    """Shrink reactive bounds into +-50% of nameplate."""
    lim = RG_FRACTION * nameplate
    return max(min(q_min, lim), -lim), min(max(q_max, -lim), lim)


def rg_al50(q_min: float, q_max: float, nameplate: float) -> tuple[float, float]:
    """Widen reactive bounds to cover at least +-50% of nameplate."""
    lim = RG_FRACTION * nameplate
    return min(q_min, -lim), max(q_max, lim)


def ac_stat(fuel: FuelCategory, models: AugmentModels, rng: np.random.Generator) -> CostPoly:
    if fuel == FuelCategory.SYNC:
        return CostPoly()
    if fuel not in models.cost_norm:
        raise AugmentError(f"no cost model for fuel {fuel.value}")
    mu, sigma = models.cost_norm[fuel]
    return CostPoly(c2=0.0, c1=max(0.0, float(rng.normal(mu, sigma))), c0=0.0)


# -- thermal limit models ----------------------------------------------------------

def tl_stat(branch: Branch, from_bus: Bus, to_bus: Bus, models: AugmentModels = DEFAULT_MODELS,
            base_mva: float = STAT_REFERENCE_MVA, voltage_unit: str = "kV") -> Optional[float]:
    """Regression limit in p.u. on ``base_mva``; None when the model does not apply."""
    kv_f, kv_t = from_bus.base_kv, to_bus.base_kv
    if not (branch.r > 0 and branch.x > 0 and kv_f > 0 and kv_f == kv_t and not branch.is_transformer):
        return None
    a, k = models.tl_loglog
    vdot = kv_f if voltage_unit == "kV" else 1.0
    return vdot * math.exp(a) * (branch.x / branch.r) ** k * STAT_REFERENCE_MVA / base_mva


def tl_ub(branch: Branch, from_bus: Bus, to_bus: Bus, theta_delta: float = math.radians(TL_UB_THETA_DEG)) -> float:
    """Largest flow the line can carry within the voltage and angle-difference bounds (p.u.)."""
    vi, vj = from_bus.v_max, to_bus.v_max
    y = branch.admittance
    t2 = vi * vi * y * y * (vi * vi + vj * vj - 2.0 * vi * vj * math.cos(theta_delta))
    return math.sqrt(max(t2, 0.0))


def tl_ub_applicable(branch: Branch, from_bus: Bus, to_bus: Bus,
                     theta_delta: float = math.radians(TL_UB_THETA_DEG)) -> bool:
    """Whether the angle term dominates the voltage spread, the bound's key assumption."""
    spread = max(from_bus.v_max - from_bus.v_min, to_bus.v_max - to_bus.v_min)
    return 2.0 * branch.admittance * math.sin(theta_delta / 2.0) >= TL_UB_MARGIN * spread


def tl_combined(existing: Optional[float], stat: Optional[float], ub: Optional[float]) -> Optional[float]:
    """Minimum of the available models, kept only if tighter than ``existing``."""
    cands = [t for t in (stat, ub) if t is not None]
    if not cands:
        return existing
    t = min(cands)
    if existing is not None and math.isfinite(existing) and existing <= t:
        return existing
    return t


# -- pipeline ------------------------------------------------------------------------

def apply_plan(net: Network, plan: AugmentPlan) -> tuple[Network, AugmentLog]:
    """Apply GF, AG, RG, AC, TL and the angle bound in that order."""
    log = AugmentLog()
    base = net.base_mva
    bus_at = {b.id: b for b in net.buses}
    slack_ids = {b.id for b in net.buses if b.kind == BusKind.SLACK}
    gens = list(net.generators)
    active = net.active_generators()

    if plan.gf_stat:
        for k in active:
            g = gens[k]
            if g.fuel is not None:
                continue
            fuel = classify_fuel(g, plan.models.bins, element_rng(plan.seed, GF_STAT, k), base, g.bus in slack_ids)
            gens[k] = replace(g, fuel=fuel)
            log.add("gen", k, "fuel", GF_STAT, None, fuel.value)

    def fuel_of(k: int, model: str) -> FuelCategory:
        f = gens[k].fuel
        if f is None:
            raise AugmentError(f"gen[{k}] has no fuel category; {model} needs GF-Stat or genfuel data")
        return f

    if plan.ag_stat:
        for k in active:
            g = gens[k]
            ref = g.p_max if math.isfinite(g.p_max) else g.pg
            p_mw, draws, fallback = ag_stat_mw(max(ref, 0.0) * base, fuel_of(k, AG_STAT), plan.models,
                                               element_rng(plan.seed, AG_STAT, k))
            note = "summer-peak fallback" if fallback else ""
            gens[k] = replace(g, p_max=p_mw / base)
            log.add("gen", k, "p_max", AG_STAT, g.p_max * base, p_mw, "MW", draws, note)

    if plan.reactive:
        rule = rg_am50 if plan.reactive == RG_AM50 else rg_al50
        for k in active:
            g = gens[k]
            # condensers have no nameplate to scale by
            if g.fuel == FuelCategory.SYNC or not _specified(g.p_max):
                continue
            q_min, q_max = rule(g.q_min, g.q_max, g.p_max)
            if (q_min, q_max) != (g.q_min, g.q_max):
                gens[k] = replace(g, q_min=q_min, q_max=q_max)
                log.add("gen", k, "q_min", plan.reactive, g.q_min * base, q_min * base, "MVAr")
                log.add("gen", k, "q_max", plan.reactive, g.q_max * base, q_max * base, "MVAr")

    if plan.ac_stat:
        for k in active:
            g = gens[k]
            cost = ac_stat(fuel_of(k, AC_STAT), plan.models, element_rng(plan.seed, AC_STAT, k))
            gens[k] = replace(g, cost=cost)
            log.add("gen", k, "cost_c1", AC_STAT, g.cost.c1, cost.c1, "$/MWh",
                    0 if g.fuel == FuelCategory.SYNC else 1)

    branches = list(net.branches)
    if plan.tl_stat or plan.tl_ub:
        theta = math.radians(plan.tl_ub_theta_deg)
        for k in net.active_branches():
            br = branches[k]
            fb, tb = bus_at[br.from_bus], bus_at[br.to_bus]
            stat = tl_stat(br, fb, tb, plan.models, base, plan.tl_voltage_unit) if plan.tl_stat else None
            ub = tl_ub(br, fb, tb, theta)
            note = "" if tl_ub_applicable(br, fb, tb, theta) else "TL-UB assumption weak: voltage spread is not small"
            new = tl_combined(br.rate_a, stat, ub)
            if new != br.rate_a:
                model = TL_STAT if stat is not None and stat <= ub else TL_UB
                branches[k] = replace(br, rate_a=new)
                old = br.rate_a * base if br.rate_a is not None else None
                log.add("branch", k, "rate_a", model, old, new * base, "MVA", 0, note)

    if plan.angle_bound_deg is not None:
        th = math.radians(plan.angle_bound_deg)
        for k in net.active_branches():
            br = branches[k]
            if (br.angle_min, br.angle_max) != (-th, th):
                branches[k] = replace(br, angle_min=-th, angle_max=th)
                log.add("branch", k, "angle_bounds", "angle bound", [math.degrees(br.angle_min),
                        math.degrees(br.angle_max)], [-plan.angle_bound_deg, plan.angle_bound_deg], "deg")

    return replace(net, generators=tuple(gens), branches=tuple(branches)), log


def provenance(plan: AugmentPlan, source: str = "") -> list[str]:
    from . import __version__

    lines = [f"augmented by gridcurate {__version__}"]
    if source:
        lines.append(f"source: {source}")
    lines.append("models: " + (", ".join(plan.model_names) or "none"))
    lines.append(f"seed: {plan.seed}")
    return lines
