"""Newton-Raphson AC power flow in polar coordinates.

Also hosts the admittance model (Pi-model branches with off-nominal tap and
phase shift, bus shunts) and the active-element indexing shared with the
OPF formulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .network import BusKind, Network, Violation

DENSE_BELOW = 50


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkIndex:
    """Positions of in-service elements, as used by every solver."""

    buses: np.ndarray  # network bus indices of active buses
    pos: dict[int, int]  # bus id -> solver position
    branches: np.ndarray  # network branch indices in service
    f: np.ndarray  # solver position of from bus
    t: np.ndarray
    gens: np.ndarray  # network generator indices in service
    gen_bus: np.ndarray  # solver position of each generator's bus
    ref: np.ndarray  # solver positions of slack buses

    @property
    def nb(self) -> int:
        return len(self.buses)


def index_network(net: Network) -> NetworkIndex:
    active = [k for k, b in enumerate(net.buses) if b.active]
    pos = {net.buses[k].id: p for p, k in enumerate(active)}
    br = net.active_branches()
    gens = net.active_generators()
    return NetworkIndex(
        buses=np.array(active, dtype=int),
        pos=pos,
        branches=np.array(br, dtype=int),
        f=np.array([pos[net.branches[k].from_bus] for k in br], dtype=int),
        t=np.array([pos[net.branches[k].to_bus] for k in br], dtype=int),
        gens=np.array(gens, dtype=int),
        gen_bus=np.array([pos[net.generators[k].bus] for k in gens], dtype=int),
        ref=np.array([pos[net.buses[k].id] for k in active if net.buses[k].kind == BusKind.SLACK], dtype=int),
    )


def branch_admittances(net: Network, idx: NetworkIndex):
    """Return (yff, yft, ytf, ytt) complex arrays for the in-service branches."""
    yff, yft, ytf, ytt = [], [], [], []
    for k in idx.branches:
        br = net.branches[k]
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * complex(math.cos(br.shift), math.sin(br.shift))
        bc = 0.5j * br.b_charge
        yff.append((ys + bc) / (tap * tap.conjugate()))
        yft.append(-ys / tap.conjugate())
        ytf.append(-ys / tap)
        ytt.append(ys + bc)
    return tuple(np.array(v, dtype=complex) for v in (yff, yft, ytf, ytt))


def make_ybus(net: Network, idx: NetworkIndex | None = None) -> sp.csr_matrix:
    idx = idx or index_network(net)
    nb = idx.nb
    yff, yft, ytf, ytt = branch_admittances(net, idx)
    ysh = np.array([complex(net.buses[k].gs, net.buses[k].bs) for k in idx.buses])
    rows = np.concatenate([idx.f, idx.f, idx.t, idx.t, np.arange(nb)])
    cols = np.concatenate([idx.f, idx.t, idx.f, idx.t, np.arange(nb)])
    vals = np.concatenate([yff, yft, ytf, ytt, ysh])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))


def _branch_end_powers(net, idx, V):
    yff, yft, ytf, ytt = branch_admittances(net, idx)
    Vf, Vt = V[idx.f], V[idx.t]
    sf = Vf * np.conj(yff * Vf + yft * Vt)
    st = Vt * np.conj(ytf * Vf + ytt * Vt)
    return sf, st


@dataclass
class BranchFlows:
    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray

    @property
    def s_from(self) -> np.ndarray:
        return np.hypot(self.p_from, self.q_from)

    @property
    def s_to(self) -> np.ndarray:
        return np.hypot(self.p_to, self.q_to)


def branch_flows(net: Network, v, theta) -> BranchFlows:
    """Pi-model flows at both ends of every branch; out-of-service branches carry zero.

    ``v`` and ``theta`` are indexed like ``net.buses`` (inactive entries ignored).
    """
    idx = index_network(net)
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    V = v[idx.buses] * np.exp(1j * theta[idx.buses])
    nbr = len(net.branches)
    out = BranchFlows(np.zeros(nbr), np.zeros(nbr), np.zeros(nbr), np.zeros(nbr))
    if len(idx.branches):
        sf, st = _branch_end_powers(net, idx, V)
        out.p_from[idx.branches] = sf.real
        out.q_from[idx.branches] = sf.imag
        out.p_to[idx.branches] = st.real
        out.q_to[idx.branches] = st.imag
    return out


@dataclass
class PowerFlowSolution:
    v: np.ndarray  # per network bus (nan for inactive)
    theta: np.ndarray
    flows: BranchFlows
    pg: np.ndarray  # per network generator
    qg: np.ndarray
    mismatch_inf: float
    iterations: int
    converged: bool
    losses: float = 0.0
    shunt_p: float = 0.0

    @property
    def s_from(self) -> np.ndarray:
        return self.flows.s_from

    @property
    def s_to(self) -> np.ndarray:
        return self.flows.s_to


def dsbus_dv(Ybus, V):
    """Partial derivatives of complex bus injections w.r.t. angle and magnitude."""
    Ibus = Ybus @ V
    diagV = sp.diags(V)
    diagI = sp.diags(Ibus)
    Vnorm = V / np.abs(V)
    diagVn = sp.diags(Vnorm)
    dS_dVm = diagV @ np.conj(Ybus @ diagVn) + np.conj(diagI) @ diagVn
    dS_dVa = 1j * diagV @ np.conj(diagI - Ybus @ diagV)
    return sp.csr_matrix(dS_dVa), sp.csr_matrix(dS_dVm)


def solve_pf(net: Network, tolerance: float = 1e-8, max_iter: int = 30) -> PowerFlowSolution:
    """Newton-Raphson power flow.

    Generators on one bus are aggregated; PV buses hold the first in-service
    generator's set-point; the slack bus angle is the zero reference.
    Raises :class:`PowerFlowError` on a missing slack bus, a singular
    Jacobian or when ``max_iter`` is exhausted.
    """
    idx = index_network(net)
    nb = idx.nb
    if len(idx.ref) != 1:
        raise PowerFlowError(f"expected exactly one active slack bus, found {len(idx.ref)}")
    ref = int(idx.ref[0])
    buses = [net.buses[k] for k in idx.buses]
    kinds = np.array([int(b.kind) for b in buses])

    gens = [net.generators[k] for k in idx.gens]
    has_gen = np.zeros(nb, dtype=bool)
    vset = np.array([b.v_init for b in buses], dtype=float)
    seen = set()
    for g, p in zip(gens, idx.gen_bus):
        has_gen[p] = True
        if p not in seen:
            vset[p] = g.v_set
            seen.add(p)
    for p in np.flatnonzero(kinds == int(BusKind.PV)):
        if not has_gen[p]:
            raise PowerFlowError(f"PV bus {buses[p].id} has no in-service generator")

    pv = np.flatnonzero(kinds == int(BusKind.PV))
    pq = np.flatnonzero(kinds == int(BusKind.PQ))
    Sd = np.array([complex(b.pd, b.qd) for b in buses])
    Sg = np.zeros(nb, dtype=complex)
    for g, p in zip(gens, idx.gen_bus):
        Sg[p] += complex(g.pg, g.qg)
    Sbus = Sg - Sd

    Ybus = make_ybus(net, idx)
    vm = np.array([b.v_init if b.v_init > 0 else 1.0 for b in buses], dtype=float)
    va = np.array([b.theta_init for b in buses], dtype=float)
    va = va - va[ref]
    vm[pv] = vset[pv]
    vm[ref] = vset[ref]
    V = vm * np.exp(1j * va)

    pvpq = np.concatenate([pv, pq])
    npv, npq = len(pv), len(pq)

    def mismatch(V):
        mis = V * np.conj(Ybus @ V) - Sbus
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    F = mismatch(V)
    it = 0
    converged = np.max(np.abs(F), initial=0.0) <= tolerance
    while not converged and it < max_iter:
        it += 1
        dVa, dVm = dsbus_dv(Ybus, V)
        J = sp.vstack([
            sp.hstack([dVa[pvpq][:, pvpq].real, dVm[pvpq][:, pq].real]),
            sp.hstack([dVa[pq][:, pvpq].imag, dVm[pq][:, pq].imag]),
        ]).tocsc()
        try:
            if J.shape[0] < DENSE_BELOW:
                dx = np.linalg.solve(J.toarray(), -F)
            else:
                dx = spla.spsolve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("singular Jacobian") from exc
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError("singular Jacobian")
        va[pvpq] += dx[: npv + npq]
        vm[pq] += dx[npv + npq:]
        V = vm * np.exp(1j * va)
        F = mismatch(V)
        converged = np.max(np.abs(F), initial=0.0) <= tolerance
    if not converged:
        raise PowerFlowError(f"power flow did not converge in {max_iter} iterations "
                             f"(mismatch {np.max(np.abs(F)):.3e})")

    # recover generator outputs at slack (P, Q) and PV buses (Q)
    Sinj = V * np.conj(Ybus @ V)
    Sgen_bus = Sinj + Sd
    pg = np.array([g.pg for g in net.generators], dtype=float)
    qg = np.array([g.qg for g in net.generators], dtype=float)
    for p in np.concatenate([[ref], pv]).astype(int):
        at = [k for k, gp in zip(idx.gens, idx.gen_bus) if gp == p]
        if not at:
            continue
        if p == ref:
            fixed_p = sum(net.generators[k].pg for k in at[1:])
            pg[at[0]] = Sgen_bus[p].real - fixed_p
        _split_q(net, at, Sgen_bus[p].imag, qg)

    v_full = np.full(len(net.buses), np.nan)
    th_full = np.full(len(net.buses), np.nan)
    v_full[idx.buses] = np.abs(V)
    th_full[idx.buses] = np.angle(V)
    flows = branch_flows(net, np.nan_to_num(v_full), np.nan_to_num(th_full))
    losses = float(np.sum(flows.p_from + flows.p_to))
    shunt_p = float(sum(b.gs * abs(V[p]) ** 2 for p, b in enumerate(buses)))
    return PowerFlowSolution(
        v=v_full, theta=th_full, flows=flows, pg=pg, qg=qg,
        mismatch_inf=float(np.max(np.abs(F), initial=0.0)), iterations=it,
        converged=True, losses=losses, shunt_p=shunt_p,
    )


def _split_q(net, gen_ids, q_total, qg):
    """Share bus reactive output between generators proportionally to q-range."""
    ranges = []
    for k in gen_ids:
        g = net.generators[k]
        rng = g.q_max - g.q_min
        ranges.append(rng if np.isfinite(rng) and rng > 0 else np.nan)
    ranges = np.array(ranges)
    if np.any(np.isnan(ranges)) or ranges.sum() == 0:
        ranges = np.ones(len(gen_ids))
    for k, w in zip(gen_ids, ranges / ranges.sum()):
        qg[k] = q_total * w


def check_operational(net: Network, sol: PowerFlowSolution, tol: float = 1e-6) -> list[Violation]:
    """Thermal, voltage, generator and angle-difference violations of a solved state."""
    out: list[Violation] = []
    for k, b in enumerate(net.buses):
        if not b.active:
            continue
        v = sol.v[k]
        if v > b.v_max + tol:
            out.append(Violation("voltage", "bus", k, f"v = {v:.4f} > v_max = {b.v_max}", v - b.v_max))
        elif v < b.v_min - tol:
            out.append(Violation("voltage", "bus", k, f"v = {v:.4f} < v_min = {b.v_min}", b.v_min - v))
    idx = net.bus_index
    for k in net.active_branches():
        br = net.branches[k]
        if br.rate_a is not None:
            s = max(sol.flows.s_from[k], sol.flows.s_to[k])
            if s > br.rate_a + tol:
                out.append(Violation("thermal", "branch", k,
                                     f"{br.from_bus}-{br.to_bus}: |s| = {s:.4f} > {br.rate_a:.4f}", s - br.rate_a))
        d = sol.theta[idx[br.from_bus]] - sol.theta[idx[br.to_bus]]
        if d > br.angle_max + tol:
            out.append(Violation("angle", "branch", k, f"angle difference {math.degrees(d):.3f} deg above bound",
                                 d - br.angle_max))
        elif d < br.angle_min - tol:
            out.append(Violation("angle", "branch", k, f"angle difference {math.degrees(d):.3f} deg below bound",
                                 br.angle_min - d))
    for k in net.active_generators():
        g = net.generators[k]
        for val, lo, hi, name in ((sol.pg[k], g.p_min, g.p_max, "p"), (sol.qg[k], g.q_min, g.q_max, "q")):
            if val > hi + tol:
                out.append(Violation("generator", "gen", k, f"{name}g = {val:.4f} > {hi}", val - hi))
            elif val < lo - tol:
                out.append(Violation("generator", "gen", k, f"{name}g = {val:.4f} < {lo}", lo - val))
    return out
