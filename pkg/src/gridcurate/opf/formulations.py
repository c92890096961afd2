"""AC-OPF and its convex relaxations as :class:`NlpProblem` instances.

Variable layouts (``nb`` active buses, ``nl`` active branches, ``ng`` active
generators, all per unit):

* AC:     [theta(nb), v(nb), pg(ng), qg(ng)]  (+ 4*nb elastic slacks)
* CP:     [pg(ng)]
* NF+LL:  [pg, qg, w(nb), p_from, q_from, p_to, q_to (nl each)]
* SOC:    [pg, qg, w(nb), wr(nl), wi(nl)]

Objectives are generation cost in $/h with outputs converted to MW.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..network import Network
from ..powerflow import NetworkIndex, branch_admittances, index_network
from .ipm import IpmOptions, SolveOutcome, SolveStatus, solve_nlp
from .nlp import NlpProblem, RowModel

# Smoothing for the cone norm.  Lifted voltages stay above v_min^2 > 0 so the
# norm is never near zero at a cone boundary; a larger value shifts objectives
# through the large series conductances.
CONE_EPS = 1e-14
ANGLE_LINEAR_LIMIT = math.pi / 2


class Model(str, enum.Enum):
    AC = "ac"
    CP = "cp"
    NFLL = "nfll"
    SOC = "soc"


class NotApplicable(ValueError):
    """The model cannot be applied to this network (reported as ``---``)."""


def _require_gens(net: Network, idx: NetworkIndex) -> None:
    if len(idx.gens) == 0:
        raise ValueError("network has no in-service generator")


def _cost_terms(net: Network, idx: NetworkIndex):
    """Per-generator (quadratic, linear, constant) cost terms on per-unit output."""
    B = net.base_mva
    gens = [net.generators[k] for k in idx.gens]
    c2 = np.array([g.cost.c2 for g in gens]) * B * B
    c1 = np.array([g.cost.c1 for g in gens]) * B
    c0 = np.array([g.cost.c0 for g in gens])
    return c2, c1, c0


def _gen_bounds(net: Network, idx: NetworkIndex):
    gens = [net.generators[k] for k in idx.gens]
    return (np.array([g.p_min for g in gens]), np.array([g.p_max for g in gens]),
            np.array([g.q_min for g in gens]), np.array([g.q_max for g in gens]))


def _bus_data(net: Network, idx: NetworkIndex):
    buses = [net.buses[k] for k in idx.buses]
    get = lambda name: np.array([getattr(b, name) for b in buses], dtype=float)
    return {n: get(n) for n in ("pd", "qd", "gs", "bs", "v_min", "v_max")}


def _start(lo, hi, fallback):
    """Midpoint of finite boxes, otherwise the fallback clipped into the box."""
    lo, hi, fallback = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float), np.asarray(fallback, float))
    out = np.clip(fallback, lo, hi)
    both = np.isfinite(lo) & np.isfinite(hi)
    out[both] = 0.5 * (lo[both] + hi[both])
    return out


def _limits(net: Network, idx: NetworkIndex):
    """(branch position, rate) for in-service branches with a finite thermal limit."""
    out = []
    for p, k in enumerate(idx.branches):
        rate = net.branches[k].rate_a
        if rate is not None and math.isfinite(rate):
            out.append((p, rate))
    return out


# ---------------------------------------------------------------------------
# AC polar formulation
# ---------------------------------------------------------------------------

def _end_terms(th_i, th_j, v_i, v_j, a, b, c, d):
    """Flow (p, q) leaving one branch end with gradients and Hessians.

    Local variable order is (theta_i, theta_j, v_i, v_j).
    p = a v_i^2 + v_i v_j (c cos t + d sin t), q = -b v_i^2 + v_i v_j (c sin t - d cos t).
    """
    t = th_i - th_j
    cos, sin = np.cos(t), np.sin(t)
    al = c * cos + d * sin
    be = c * sin - d * cos
    vv = v_i * v_j
    m = len(t)
    p = a * v_i**2 + vv * al
    q = -b * v_i**2 + vv * be

    gp = np.column_stack([-vv * be, vv * be, 2 * a * v_i + v_j * al, v_i * al])
    gq = np.column_stack([vv * al, -vv * al, -2 * b * v_i + v_j * be, v_i * be])

    hp = np.zeros((m, 4, 4))
    hq = np.zeros((m, 4, 4))
    hp[:, 0, 0] = hp[:, 1, 1] = -vv * al
    hp[:, 0, 1] = hp[:, 1, 0] = vv * al
    hp[:, 0, 2] = hp[:, 2, 0] = -v_j * be
    hp[:, 0, 3] = hp[:, 3, 0] = -v_i * be
    hp[:, 1, 2] = hp[:, 2, 1] = v_j * be
    hp[:, 1, 3] = hp[:, 3, 1] = v_i * be
    hp[:, 2, 2] = 2 * a
    hp[:, 2, 3] = hp[:, 3, 2] = al

    hq[:, 0, 0] = hq[:, 1, 1] = -vv * be
    hq[:, 0, 1] = hq[:, 1, 0] = vv * be
    hq[:, 0, 2] = hq[:, 2, 0] = v_j * al
    hq[:, 0, 3] = hq[:, 3, 0] = v_i * al
    hq[:, 1, 2] = hq[:, 2, 1] = -v_j * al
    hq[:, 1, 3] = hq[:, 3, 1] = -v_i * al
    hq[:, 2, 2] = -2 * b
    hq[:, 2, 3] = hq[:, 3, 2] = be
    return p, q, gp, gq, hp, hq


def formulate_ac(net: Network, elastic: bool = False, x0: Optional[np.ndarray] = None) -> NlpProblem:
    """Polar AC-OPF.

    With ``elastic`` the cost objective is replaced by the total violation of
    the bus balance equations, measured by non-negative slacks; the optimum
    is zero exactly when the network admits a feasible operating point.
    """
    idx = index_network(net)
    _require_gens(net, idx)
    if len(idx.ref) == 0:
        raise ValueError("network has no reference (slack) bus")
    nb, nl, ng = idx.nb, len(idx.branches), len(idx.gens)
    bus = _bus_data(net, idx)
    pmin, pmax, qmin, qmax = _gen_bounds(net, idx)
    c2, c1, c0 = _cost_terms(net, idx)

    yff, yft, ytf, ytt = branch_admittances(net, idx)
    own = np.concatenate([idx.f, idx.t])
    oth = np.concatenate([idx.t, idx.f])
    ys = np.concatenate([yff, ytt])
    ym = np.concatenate([yft, ytf])
    ea, eb, ec, ed = ys.real, ys.imag, ym.real, ym.imag
    loc = np.column_stack([own, oth, nb + own, nb + oth])  # global index of local vars

    lim = _limits(net, idx)
    lim_end = np.array([p for p, _ in lim] + [p + nl for p, _ in lim], dtype=int)
    lim_t2 = np.array([r * r for _, r in lim] * 2, dtype=float)

    ang_rows = []  # (branch pos, sign, bound)
    for p, k in enumerate(idx.branches):
        br = net.branches[k]
        if math.isfinite(br.angle_max):
            ang_rows.append((p, 1.0, br.angle_max))
        if math.isfinite(br.angle_min):
            ang_rows.append((p, -1.0, -br.angle_min))

    o_th, o_v, o_pg, o_qg = 0, nb, 2 * nb, 2 * nb + ng
    n_core = 2 * nb + 2 * ng
    n = n_core + (4 * nb if elastic else 0)
    o_sl = n_core

    # generator -> bus incidence (constant)
    Cg = sp.csr_matrix((np.ones(ng), (idx.gen_bus, np.arange(ng))), shape=(nb, ng))

    def flows(x):
        th, v = x[o_th:o_th + nb], x[o_v:o_v + nb]
        return _end_terms(th[own], th[oth], v[own], v[oth], ea, eb, ec, ed)

    # -- objective ------------------------------------------------------------
    if elastic:
        def objective(x):
            return float(np.sum(x[o_sl:]))

        def gradient(x):
            g = np.zeros(n)
            g[o_sl:] = 1.0
            return g
        obj_hess_diag = np.zeros(n)
    else:
        def objective(x):
            pg = x[o_pg:o_pg + ng]
            return float(np.sum(c2 * pg * pg + c1 * pg + c0))

        def gradient(x):
            g = np.zeros(n)
            pg = x[o_pg:o_pg + ng]
            g[o_pg:o_pg + ng] = 2 * c2 * pg + c1
            return g
        obj_hess_diag = np.zeros(n)
        obj_hess_diag[o_pg:o_pg + ng] = 2 * c2

    # -- equalities: P and Q balance per bus -----------------------------------
    def eq(x):
        v = x[o_v:o_v + nb]
        p, q, *_ = flows(x)
        P = Cg @ x[o_pg:o_pg + ng] - bus["pd"] - bus["gs"] * v * v - np.bincount(own, p, nb)
        Q = Cg @ x[o_qg:o_qg + ng] - bus["qd"] + bus["bs"] * v * v - np.bincount(own, q, nb)
        if elastic:
            s = x[o_sl:]
            P = P + s[:nb] - s[nb:2 * nb]
            Q = Q + s[2 * nb:3 * nb] - s[3 * nb:]
        return np.concatenate([P, Q])

    # Constant sparsity: end terms, shunt diagonal, generator columns, slacks.
    e_rows = np.repeat(own, 4)
    e_cols = loc.ravel()
    sh_idx = np.arange(nb)

    def eq_jac(x):
        v = x[o_v:o_v + nb]
        _, _, gp, gq, _, _ = flows(x)
        rows = [e_rows, sh_idx, idx.gen_bus, nb + e_rows, nb + sh_idx, nb + idx.gen_bus]
        cols = [e_cols, o_v + sh_idx, o_pg + np.arange(ng), e_cols, o_v + sh_idx, o_qg + np.arange(ng)]
        vals = [-gp.ravel(), -2 * bus["gs"] * v, np.ones(ng), -gq.ravel(), 2 * bus["bs"] * v, np.ones(ng)]
        if elastic:
            r = np.arange(2 * nb)
            rows += [r, r]
            cols += [o_sl + np.concatenate([sh_idx, 2 * nb + sh_idx]),
                     o_sl + np.concatenate([nb + sh_idx, 3 * nb + sh_idx])]
            vals += [np.ones(2 * nb), -np.ones(2 * nb)]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(2 * nb, n))

    # -- inequalities: thermal (both ends), angle differences ------------------
    m_th, m_ang = len(lim_end), len(ang_rows)
    ang_br = np.array([p for p, _, _ in ang_rows], dtype=int)
    ang_sgn = np.array([s for _, s, _ in ang_rows], dtype=float)
    ang_bnd = np.array([bd for _, _, bd in ang_rows], dtype=float)

    def ineq(x):
        out = np.zeros(m_th + m_ang)
        if m_th:
            p, q, *_ = flows(x)
            out[:m_th] = p[lim_end] ** 2 + q[lim_end] ** 2 - lim_t2
        if m_ang:
            th = x[o_th:o_th + nb]
            out[m_th:] = ang_sgn * (th[idx.f[ang_br]] - th[idx.t[ang_br]]) - ang_bnd
        return out

    def ineq_jac(x):
        rows, cols, vals = [], [], []
        if m_th:
            p, q, gp, gq, _, _ = flows(x)
            g = 2 * p[lim_end, None] * gp[lim_end] + 2 * q[lim_end, None] * gq[lim_end]
            rows.append(np.repeat(np.arange(m_th), 4))
            cols.append(loc[lim_end].ravel())
            vals.append(g.ravel())
        if m_ang:
            r = m_th + np.arange(m_ang)
            rows += [r, r]
            cols += [idx.f[ang_br], idx.t[ang_br]]
            vals += [ang_sgn, -ang_sgn]
        if not rows:
            return sp.csr_matrix((0, n))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m_th + m_ang, n))

    def hessian(x, obj_factor, lam_eq, lam_ineq):
        p, q, gp, gq, hp, hq = flows(x)
        lp, lq = lam_eq[:nb], lam_eq[nb:]
        # balance rows subtract end flows
        H = -(lp[own, None, None] * hp + lq[own, None, None] * hq)
        if m_th:
            mu = lam_ineq[:m_th]
            e = lim_end
            Hs = 2 * (np.einsum("ki,kj->kij", gp[e], gp[e]) + p[e, None, None] * hp[e]
                      + np.einsum("ki,kj->kij", gq[e], gq[e]) + q[e, None, None] * hq[e])
            H = H.copy()
            np.add.at(H, e, mu[:, None, None] * Hs)
        rows = [np.repeat(loc, 4, axis=1).ravel(), np.arange(n), o_v + sh_idx]
        cols = [np.tile(loc, (1, 4)).ravel(), np.arange(n), o_v + sh_idx]
        vals = [H.ravel(), obj_factor * obj_hess_diag, 2 * (-lp * bus["gs"] + lq * bus["bs"])]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    xl = np.full(n, -np.inf)
    xu = np.full(n, np.inf)
    xl[o_th + idx.ref] = 0.0
    xu[o_th + idx.ref] = 0.0
    xl[o_v:o_v + nb], xu[o_v:o_v + nb] = bus["v_min"], bus["v_max"]
    xl[o_pg:o_pg + ng], xu[o_pg:o_pg + ng] = pmin, pmax
    xl[o_qg:o_qg + ng], xu[o_qg:o_qg + ng] = qmin, qmax
    if elastic:
        xl[o_sl:] = 0.0

    if x0 is None:
        x0 = np.zeros(n)
        x0[o_v:o_v + nb] = _start(bus["v_min"], bus["v_max"], 1.0)
        gens = [net.generators[k] for k in idx.gens]
        x0[o_pg:o_pg + ng] = _start(pmin, pmax, [g.pg for g in gens])
        x0[o_qg:o_qg + ng] = _start(qmin, qmax, [g.qg for g in gens])
    meta = {"index": idx, "layout": {"theta": o_th, "v": o_v, "pg": o_pg, "qg": o_qg}, "elastic": elastic}
    return NlpProblem(n=n, x0=np.asarray(x0, float), xl=xl, xu=xu, objective=objective, gradient=gradient,
                      eq=eq, eq_jac=eq_jac, ineq=ineq, ineq_jac=ineq_jac, hessian=hessian,
                      convex=False, name="ac", meta=meta)


# ---------------------------------------------------------------------------
# Convex relaxations
# ---------------------------------------------------------------------------

def _set_cost(model: RowModel, net: Network, idx: NetworkIndex, o_pg: int) -> None:
    c2, c1, c0 = _cost_terms(net, idx)
    ng = len(c2)
    model.obj_quad[o_pg:o_pg + ng] = 2 * c2
    model.obj_lin[o_pg:o_pg + ng] = c1
    model.obj_const = float(np.sum(c0))


def _require_positive_impedance(net: Network, what: str) -> None:
    for br in net.branches:
        if br.r < 0 or br.x < 0:
            raise NotApplicable(f"{what} needs non-negative branch impedances")


def formulate_cp(net: Network) -> NlpProblem:
    """Copper plate: total generation covers total demand, no network."""
    _require_positive_impedance(net, "copper plate")
    idx = index_network(net)
    _require_gens(net, idx)
    ng = len(idx.gens)
    bus = _bus_data(net, idx)
    pmin, pmax, _, _ = _gen_bounds(net, idx)
    # shunt conductance absorbs at least its minimum over the voltage box
    shunt = np.minimum(bus["gs"] * bus["v_min"] ** 2, bus["gs"] * bus["v_max"] ** 2)
    demand = float(np.sum(bus["pd"]) + np.sum(shunt))

    m = RowModel(ng)
    _set_cost(m, net, idx, 0)
    m.add_ineq(np.arange(ng), -np.ones(ng), demand)
    x0 = _start(pmin, pmax, np.full(ng, demand / ng))
    return m.to_problem(x0, pmin, pmax, name="cp", meta={"index": idx, "layout": {"pg": 0}})


def _lifted_bounds(net, idx, ng, extra):
    pmin, pmax, qmin, qmax = _gen_bounds(net, idx)
    bus = _bus_data(net, idx)
    xl = np.concatenate([pmin, qmin, bus["v_min"] ** 2, np.full(extra, -np.inf)])
    xu = np.concatenate([pmax, qmax, bus["v_max"] ** 2, np.full(extra, np.inf)])
    gens = [net.generators[k] for k in idx.gens]
    x0 = np.concatenate([
        _start(pmin, pmax, [g.pg for g in gens]),
        _start(qmin, qmax, [g.qg for g in gens]),
        _start(bus["v_min"] ** 2, bus["v_max"] ** 2, 1.0),
        np.zeros(extra),
    ])
    return xl, xu, x0, bus


def _add_balances(m: RowModel, idx, bus, ng, o_w, end_p, end_q):
    """Linear bus balances; ``end_p[i]`` lists (var index, coefficient) terms of flows leaving bus i."""
    nb = idx.nb
    for i in range(nb):
        gens = list(np.flatnonzero(idx.gen_bus == i))
        for off, load, shunt_coef, ends in ((0, bus["pd"][i], -bus["gs"][i], end_p[i]),
                                           (ng, bus["qd"][i], bus["bs"][i], end_q[i])):
            ids = [off + g for g in gens] + [o_w + i] + [k for k, _ in ends]
            coefs = [1.0] * len(gens) + [shunt_coef] + [-c for _, c in ends]
            m.add_eq(ids, coefs, -load)


def formulate_nfll(net: Network) -> NlpProblem:
    """Network flow with convexified line losses.

    Each branch carries independent (p, q) at both ends.  Series losses are
    bounded below by the squared series current, itself bounded below by
    the series apparent power over the largest admissible voltage.
    """
    _require_positive_impedance(net, "network flow")
    idx = index_network(net)
    _require_gens(net, idx)
    nb, nl, ng = idx.nb, len(idx.branches), len(idx.gens)
    o_w = 2 * ng
    o_pf, o_qf, o_pt, o_qt = o_w + nb, o_w + nb + nl, o_w + nb + 2 * nl, o_w + nb + 3 * nl
    n = o_w + nb + 4 * nl
    xl, xu, x0, bus = _lifted_bounds(net, idx, ng, 4 * nl)
    m = RowModel(n)
    _set_cost(m, net, idx, 0)

    end_p = [[] for _ in range(nb)]
    end_q = [[] for _ in range(nb)]
    for k in range(nl):
        end_p[idx.f[k]].append((o_pf + k, 1.0))
        end_q[idx.f[k]].append((o_qf + k, 1.0))
        end_p[idx.t[k]].append((o_pt + k, 1.0))
        end_q[idx.t[k]].append((o_qt + k, 1.0))
    _add_balances(m, idx, bus, ng, o_w, end_p, end_q)

    vmax = bus["v_max"]
    for k, bk in enumerate(idx.branches):
        br = net.branches[bk]
        i, j = idx.f[k], idx.t[k]
        tau2 = br.tap * br.tap
        half_b = 0.5 * br.b_charge
        w = tau2 / vmax[i] ** 2
        series = [([o_pf + k], [1.0], 0.0), ([o_qf + k, o_w + i], [1.0, half_b / tau2], 0.0)]
        if br.r >= 0:
            m.add_ineq([o_pf + k, o_pt + k], [-1.0, -1.0], quad=(br.r * w, series))
        if br.x >= 0:
            m.add_ineq([o_qf + k, o_qt + k, o_w + i, o_w + j], [-1.0, -1.0, -half_b / tau2, -half_b],
                       quad=(br.x * w, series))
        if br.rate_a is not None and math.isfinite(br.rate_a):
            t2 = br.rate_a ** 2
            m.add_ineq(const=-t2, quad=(1.0, [([o_pf + k], [1.0], 0.0), ([o_qf + k], [1.0], 0.0)]))
            m.add_ineq(const=-t2, quad=(1.0, [([o_pt + k], [1.0], 0.0), ([o_qt + k], [1.0], 0.0)]))
    layout = {"pg": 0, "qg": ng, "w": o_w, "p_from": o_pf, "q_from": o_qf, "p_to": o_pt, "q_to": o_qt}
    return m.to_problem(x0, xl, xu, name="nfll", meta={"index": idx, "layout": layout})


def formulate_soc(net: Network) -> NlpProblem:
    """Second-order cone relaxation in the lifted (w, wr, wi) space."""
    idx = index_network(net)
    _require_gens(net, idx)
    nb, nl, ng = idx.nb, len(idx.branches), len(idx.gens)
    o_w = 2 * ng
    o_wr, o_wi = o_w + nb, o_w + nb + nl
    n = o_w + nb + 2 * nl
    xl, xu, x0, bus = _lifted_bounds(net, idx, ng, 2 * nl)
    vmax = bus["v_max"]
    for k in range(nl):
        cap = vmax[idx.f[k]] * vmax[idx.t[k]]
        xl[o_wr + k], xu[o_wr + k] = -cap, cap
        xl[o_wi + k], xu[o_wi + k] = -cap, cap
        x0[o_wr + k] = math.sqrt(x0[o_w + idx.f[k]] * x0[o_w + idx.t[k]]) * 0.99
    m = RowModel(n)
    _set_cost(m, net, idx, 0)

    yff, yft, ytf, ytt = branch_admittances(net, idx)
    end_p = [[] for _ in range(nb)]
    end_q = [[] for _ in range(nb)]
    end_forms = []  # per branch: (p form, q form) at from and to ends
    for k in range(nl):
        i, j = idx.f[k], idx.t[k]
        wi_, wj_, wr, wim = o_w + i, o_w + j, o_wr + k, o_wi + k
        c, d = yft[k].real, yft[k].imag
        c2_, d2_ = ytf[k].real, ytf[k].imag
        pf = ([wi_, wr, wim], [yff[k].real, c, d])
        qf = ([wi_, wr, wim], [-yff[k].imag, -d, c])
        pt = ([wj_, wr, wim], [ytt[k].real, c2_, -d2_])
        qt = ([wj_, wr, wim], [-ytt[k].imag, -d2_, -c2_])
        end_p[i].extend(zip(*pf))
        end_q[i].extend(zip(*qf))
        end_p[j].extend(zip(*pt))
        end_q[j].extend(zip(*qt))
        end_forms.append(((pf, qf), (pt, qt)))
    # merge duplicate variable references produced by the zip expansion
    end_p = [_merge(e) for e in end_p]
    end_q = [_merge(e) for e in end_q]
    _add_balances(m, idx, bus, ng, o_w, end_p, end_q)

    for k, bk in enumerate(idx.branches):
        br = net.branches[bk]
        i, j = idx.f[k], idx.t[k]
        wi_, wj_, wr, wim = o_w + i, o_w + j, o_wr + k, o_wi + k
        # sqrt(wr^2 + wi^2 + ((wi-wj)/2)^2 + eps) <= (wi+wj)/2 + slack, where the
        # slack bounds eps/(wi+wj) so smoothing never cuts off AC points
        slack = CONE_EPS / (xl[wi_] + xl[wj_])
        m.add_ineq([wi_, wj_], [-0.5, -0.5], -slack,
                   norm=[([wr], [1.0], 0.0), ([wim], [1.0], 0.0), ([wi_, wj_], [0.5, -0.5], 0.0)],
                   eps=CONE_EPS)
        if br.rate_a is not None and math.isfinite(br.rate_a):
            t2 = br.rate_a ** 2
            for pform, qform in end_forms[k]:
                m.add_ineq(const=-t2, quad=(1.0, [(pform[0], pform[1], 0.0), (qform[0], qform[1], 0.0)]))
        lo, hi = br.angle_min, br.angle_max
        if -ANGLE_LINEAR_LIMIT < lo and hi < ANGLE_LINEAR_LIMIT:
            m.add_ineq([wr, wim], [math.tan(lo), -1.0])
            m.add_ineq([wr, wim], [-math.tan(hi), 1.0])
    layout = {"pg": 0, "qg": ng, "w": o_w, "wr": o_wr, "wi": o_wi}
    return m.to_problem(x0, xl, xu, name="soc", meta={"index": idx, "layout": layout})


def _merge(terms):
    acc: dict[int, float] = {}
    for k, c in terms:
        acc[int(k)] = acc.get(int(k), 0.0) + float(c)
    return list(acc.items())


FORMULATIONS = {
    Model.AC: formulate_ac,
    Model.CP: formulate_cp,
    Model.NFLL: formulate_nfll,
    Model.SOC: formulate_soc,
}


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

@dataclass
class OpfResult:
    """Solution mapped back onto the network's generator and bus order.

    Generator entries for out-of-service units and bus entries the model
    does not carry are ``nan``.
    """

    model: Model
    outcome: SolveOutcome
    pg: np.ndarray
    qg: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def status(self) -> SolveStatus:
        return self.outcome.status

    @property
    def objective(self) -> float:
        return self.outcome.objective

    @property
    def optimal(self) -> bool:
        return self.outcome.optimal


def solve_opf(net: Network, model: Model | str = Model.AC, options: IpmOptions | None = None,
              problem: NlpProblem | None = None) -> OpfResult:
    """Formulate (unless ``problem`` is given) and solve one model."""
    model = Model(model)
    problem = problem or FORMULATIONS[model](net)
    out = solve_nlp(problem, options)
    idx: NetworkIndex = problem.meta["index"]
    lay = problem.meta["layout"]
    ng_net, nb_net = len(net.generators), len(net.buses)
    pg = np.full(ng_net, np.nan)
    qg = np.full(ng_net, np.nan)
    v = np.full(nb_net, np.nan)
    theta = np.full(nb_net, np.nan)
    x = out.x
    ng = len(idx.gens)
    pg[idx.gens] = x[lay["pg"]:lay["pg"] + ng]
    if "qg" in lay:
        qg[idx.gens] = x[lay["qg"]:lay["qg"] + ng]
    if "v" in lay:
        v[idx.buses] = x[lay["v"]:lay["v"] + idx.nb]
        theta[idx.buses] = x[lay["theta"]:lay["theta"] + idx.nb]
    elif "w" in lay:
        v[idx.buses] = np.sqrt(np.maximum(x[lay["w"]:lay["w"] + idx.nb], 0.0))
    return OpfResult(model=model, outcome=out, pg=pg, qg=qg, v=v, theta=theta)
