"""Congested (API) and small-angle-difference (SAD) case variants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .augment import AugmentLog, AugmentPlan, RG_AL50, apply_plan
from .fleet import AugmentModels, DEFAULT_MODELS
from .network import BusKind, Network
from .opf.formulations import formulate_ac, solve_opf
from .opf.ipm import IpmOptions

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7  # total balance slack (p.u.) below which a point counts as feasible
API_BRACKET = (1.0, 64.0)
API_REL_TOL = 1e-4
SAD_MAX_DEG = 30.0
SAD_TOL_DEG = 0.01
_TIGHT = IpmOptions(tol=1e-10, max_iter=400)


class ScenarioError(ValueError):
    pass


@dataclass
class Feasibility:
    feasible: bool
    violation: float
    pg: np.ndarray
    qg: np.ndarray
    v: np.ndarray
    theta: np.ndarray


def elastic_oracle(net: Network, options: Optional[IpmOptions] = None) -> Feasibility:
    """Minimise total bus-balance violation; feasible when it vanishes.

    Ambiguous or failed solves are retried once at a tighter tolerance.
    """
    res = solve_opf(net, "ac", options, problem=formulate_ac(net, elastic=True))
    viol = res.objective
    if not res.optimal or FEAS_TOL < viol < 100 * FEAS_TOL:
        log.info("oracle noise (%s, violation %.3g); retrying with tight tolerances", res.status.value, viol)
        res = solve_opf(net, "ac", _TIGHT, problem=formulate_ac(net, elastic=True))
        viol = res.objective
    feasible = res.optimal and viol <= FEAS_TOL
    return Feasibility(feasible, viol, res.pg, res.qg, res.v, res.theta)


def _bisect(oracle: Callable[[float], Feasibility], lo: float, hi: float, done: Callable[[float, float], bool],
            feasible_high: bool) -> tuple[float, Feasibility]:
    """Shrink [lo, hi] around the feasibility boundary; returns the feasible end."""
    good = oracle(hi if feasible_high else lo)
    while not done(lo, hi):
        mid = 0.5 * (lo + hi)
        f = oracle(mid)
        if f.feasible == feasible_high:
            hi = mid
        else:
            lo = mid
        if f.feasible:
            good = f
    return (hi if feasible_high else lo), good


# -- API ------------------------------------------------------------------------------

def _scaled(net: Network, alpha: float, active_only: bool) -> Network:
    """Demand scaled by ``alpha``; non-slack generation follows, the slack and all Q are free."""
    slack = {b.id for b in net.buses if b.kind == BusKind.SLACK}
    buses = [replace(b, pd=alpha * b.pd, qd=b.qd if active_only else alpha * b.qd) for b in net.buses]
    gens = []
    for g in net.generators:
        if g.bus in slack:
            gens.append(replace(g, p_min=-math.inf, p_max=math.inf, q_min=-math.inf, q_max=math.inf))
        else:
            p = alpha * g.pg
            gens.append(replace(g, p_min=p, p_max=p, q_min=-math.inf, q_max=math.inf))
    return replace(net, buses=tuple(buses), generators=tuple(gens))


@dataclass
class ApiResult:
    network: Network
    alpha: float
    log: AugmentLog


def gen_api(net: Network, models: AugmentModels = DEFAULT_MODELS, seed: int = 0, active_only: bool = False,
            options: Optional[IpmOptions] = None) -> ApiResult:
    """Scale demand up until thermal limits bind, fix the operating point, re-augment generators."""
    if not any(br.rate_a is not None and math.isfinite(br.rate_a) for br in net.branches if br.status):
        raise ScenarioError("no finite thermal limits: demand increase is unbounded")
    lo, hi = API_BRACKET

    def oracle(a):
        return elastic_oracle(_scaled(net, a, active_only), options)

    if not oracle(lo).feasible:
        raise ScenarioError("network is infeasible at the original demand")
    if oracle(hi).feasible:
        raise ScenarioError(f"still feasible at {hi}x demand: limits never bind")
    alpha, sol = _bisect(oracle, lo, hi, lambda a, b: b - a <= API_REL_TOL * a, feasible_high=False)

    buses = []
    for k, b in enumerate(net.buses):
        b = replace(b, pd=alpha * b.pd, qd=b.qd if active_only else alpha * b.qd)
        if not math.isnan(sol.v[k]):
            b = replace(b, v_init=float(sol.v[k]), theta_init=float(sol.theta[k]))
        buses.append(b)
    bus_pos = {b.id: k for k, b in enumerate(net.buses)}
    gens = []
    for k, g in enumerate(net.generators):
        if math.isnan(sol.pg[k]):
            gens.append(g)
            continue
        pg, qg = float(sol.pg[k]), float(sol.qg[k])
        # generator boxes stay open until AG-Stat assigns a nameplate above the set-point
        gens.append(replace(g, pg=pg, qg=qg, p_min=min(g.p_min, max(pg, 0.0)), p_max=math.inf,
                            q_min=min(g.q_min, qg), q_max=max(g.q_max, qg), v_set=float(sol.v[bus_pos[g.bus]])))
    fixed = replace(net, buses=tuple(buses), generators=tuple(gens), name=f"{net.name}__api")
    plan = AugmentPlan(gf_stat=True, ag_stat=True, reactive=RG_AL50, ac_stat=True, seed=seed, models=models)
    out, alog = apply_plan(fixed, plan)
    return ApiResult(out, alpha, alog)


# -- SAD ------------------------------------------------------------------------------

def _with_angle_bound(net: Network, theta: float) -> Network:
    return replace(net, branches=tuple(replace(br, angle_min=-theta, angle_max=theta) for br in net.branches))


@dataclass
class SadResult:
    network: Network
    theta_delta_deg: float


def gen_sad(net: Network, options: Optional[IpmOptions] = None) -> SadResult:
    """Smallest uniform angle-difference bound that keeps the case feasible."""

    def oracle(deg):
        return elastic_oracle(_with_angle_bound(net, math.radians(deg)), options)

    if not oracle(SAD_MAX_DEG).feasible:
        raise ScenarioError(f"infeasible even with a {SAD_MAX_DEG:g} degree bound")
    deg, _ = _bisect(oracle, 0.0, SAD_MAX_DEG, lambda a, b: b - a <= SAD_TOL_DEG, feasible_high=True)
    out = _with_angle_bound(net, math.radians(deg))
    return SadResult(replace(out, name=net.name if net.name.endswith("__sad") else f"{net.name}__sad"), deg)
