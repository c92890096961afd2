"""Primal-dual interior-point method for smooth NLPs.

Log-barrier on slack variables ``h(x) + s = 0, s > 0``, Newton steps on the
perturbed KKT system with inertia correction, fraction-to-boundary rule and
a filter line search with second-order correction.  The barrier parameter is
reduced monotonically (Fiacco-McCormick) once the barrier subproblem is solved
to ``kappa_eps * mu``.  The best iterate seen is kept so that a run stalling at
the limits of double precision can still return an acceptable point.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .nlp import NlpProblem

log = logging.getLogger(__name__)

DENSE_LIMIT = 2500
MAX_STEP = 1e8  # in scaled variables


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class IpmOptions:
    tol: float = 1e-8
    max_iter: int = 200
    mu0: float = 0.1
    mu_factor: float = 0.2
    tau: float = 0.995
    kappa_eps: float = 10.0
    acceptable_tol: float = 1e-6
    acceptable_iter: int = 10
    stall_iter: int = 30
    infeasibility_tol: float = 1e-6


@dataclass
class SolveOutcome:
    status: SolveStatus
    objective: float
    x: np.ndarray
    lam_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    complementarity: float = np.inf
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


def _to_dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


class _Scaled:
    """Bounds folded into inequality rows, gradient-based row scaling applied."""

    def __init__(self, p: NlpProblem):
        self.p = p
        n = p.n
        xl, xu = p.xl, p.xu
        fixed = np.isfinite(xl) & np.isfinite(xu) & (xu - xl <= 1e-12)
        self.fix_idx = np.flatnonzero(fixed)
        self.fix_val = xl[fixed]
        self.up_idx = np.flatnonzero(np.isfinite(xu) & ~fixed)
        self.lo_idx = np.flatnonzero(np.isfinite(xl) & ~fixed)
        self.up_val = xu[self.up_idx]
        self.lo_val = xl[self.lo_idx]
        nb_u, nb_l = len(self.up_idx), len(self.lo_idx)
        self.B = sp.vstack([
            sp.csr_matrix((np.ones(nb_u), (np.arange(nb_u), self.up_idx)), shape=(nb_u, n)),
            sp.csr_matrix((-np.ones(nb_l), (np.arange(nb_l), self.lo_idx)), shape=(nb_l, n)),
        ]).tocsr()
        nf = len(self.fix_idx)
        self.Fx = sp.csr_matrix((np.ones(nf), (np.arange(nf), self.fix_idx)), shape=(nf, n))

        x0 = self.initial_point()
        self.x0 = x0
        gmax = lambda M: np.asarray(abs(_to_dense(M)).max(axis=1)).ravel() if M.shape[0] else np.zeros(0)
        self.df = min(1.0, 100.0 / max(np.max(np.abs(p.gradient(x0)), initial=0.0), 1e-300))
        self.dg = np.minimum(1.0, 100.0 / np.maximum(gmax(p.eq_jac(x0)), 1e-300))
        self.dh = np.minimum(1.0, 100.0 / np.maximum(gmax(p.ineq_jac(x0)), 1e-300))
        self.me = len(self.dg) + nf
        self.mi = len(self.dh) + nb_u + nb_l

    def initial_point(self) -> np.ndarray:
        p = self.p
        x = np.array(p.x0, dtype=float)
        x[self.fix_idx] = self.fix_val
        xl, xu = p.xl, p.xu
        k1 = k2 = 1e-2
        fixed_mask = np.zeros(p.n, dtype=bool)
        fixed_mask[self.fix_idx] = True
        for i in range(p.n):
            if fixed_mask[i]:
                continue
            lo, hi = xl[i], xu[i]
            pl = min(k1 * max(1.0, abs(lo)), k2 * (hi - lo)) if np.isfinite(lo) and np.isfinite(hi) else k1 * max(1.0, abs(lo))
            pu = min(k1 * max(1.0, abs(hi)), k2 * (hi - lo)) if np.isfinite(lo) and np.isfinite(hi) else k1 * max(1.0, abs(hi))
            if np.isfinite(lo):
                x[i] = max(x[i], lo + pl)
            if np.isfinite(hi):
                x[i] = min(x[i], hi - pu)
        return x

    def f(self, x):
        return self.df * self.p.objective(x)

    def grad(self, x):
        return self.df * np.asarray(self.p.gradient(x), dtype=float)

    def g(self, x):
        return np.concatenate([self.dg * self.p.eq(x), x[self.fix_idx] - self.fix_val])

    def jg(self, x):
        return sp.vstack([sp.diags(self.dg) @ sp.csr_matrix(self.p.eq_jac(x)), self.Fx]).tocsr()

    def h(self, x):
        return np.concatenate([self.dh * self.p.ineq(x), x[self.up_idx] - self.up_val, self.lo_val - x[self.lo_idx]])

    def jh(self, x):
        return sp.vstack([sp.diags(self.dh) @ sp.csr_matrix(self.p.ineq_jac(x)), self.B]).tocsr()

    def hess(self, x, lam, z):
        ne = len(self.dg)
        ni = len(self.dh)
        return sp.csr_matrix(self.p.hessian(x, self.df, lam[:ne] * self.dg, z[:ni] * self.dh))


def _inertia(D: np.ndarray) -> tuple[int, int, int]:
    pos = neg = zero = 0
    n = D.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and D[i, i + 1] != 0.0:
            ev = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            i += 2
        else:
            ev = [D[i, i]]
            i += 1
        for e in ev:
            if abs(e) < 1e-13:
                zero += 1
            elif e > 0:
                pos += 1
            else:
                neg += 1
    return pos, neg, zero


# filter line search constants
GAMMA_THETA, GAMMA_PHI, ETA, DELTA = 1e-5, 1e-8, 1e-4, 1.0
S_THETA, S_PHI, GAMMA_ALPHA = 1.1, 2.3, 0.05


def theta_min_f(theta_max: float) -> float:
    return 1e-4 * theta_max


def _min_step(dphi: float, theta: float) -> float:
    a = GAMMA_THETA
    if dphi < 0:
        a = min(a, GAMMA_PHI * theta / -dphi, DELTA * theta ** S_THETA / (-dphi) ** S_PHI)
    return max(GAMMA_ALPHA * a, 1e-16)


def _fraction_to_boundary(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve_nlp(problem: NlpProblem, options: IpmOptions | None = None) -> SolveOutcome:
    """Solve ``problem`` with the primal-dual interior-point method."""
    opt = options or IpmOptions()
    P = _Scaled(problem)
    n, me, mi = problem.n, P.me, P.mi
    x = P.x0.copy()
    mu = opt.mu0
    h = P.h(x)
    s = np.maximum(-h, 1e-2)
    z = np.minimum(mu / s, 1e3)
    lam = np.zeros(me)
    filt: list[tuple[float, float]] = []
    theta_max = None
    delta_w_last = 0.0
    acceptable_count = 0
    best = (np.inf, 0, None)
    status = SolveStatus.ITERATION_LIMIT
    msg = ""

    def errors(x, s, lam, z, mu, grad, Jg, Jh, g, h):
        rd = grad + (Jg.T @ lam if me else 0.0) + (Jh.T @ z if mi else 0.0)
        c = np.concatenate([g, h + s])
        smax = 100.0
        sd = max(smax, (np.abs(lam).sum() + np.abs(z).sum()) / max(1, me + mi)) / smax
        sc = max(smax, np.abs(z).sum() / max(1, mi)) / smax
        dual = np.max(np.abs(rd), initial=0.0)
        primal = np.max(np.abs(c), initial=0.0)
        comp = np.max(np.abs(s * z - mu), initial=0.0)
        return max(dual / sd, primal, comp / sc), rd, c, dual, primal

    it = 0
    for it in range(1, opt.max_iter + 1):
        grad = P.grad(x)
        g, Jg = P.g(x), P.jg(x)
        h, Jh = P.h(x), P.jh(x)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            status, msg = SolveStatus.NUMERICAL_FAILURE, "non-finite function values"
            break

        e0, *_ = errors(x, s, lam, z, 0.0, grad, Jg, Jh, g, h)
        if e0 <= opt.tol:
            status = SolveStatus.OPTIMAL
            break
        if e0 < best[0]:
            best = (e0, it, (x, s, lam, z))
        elif e0 > opt.tol and best[0] <= opt.acceptable_tol and it - best[1] >= opt.stall_iter:
            status, msg = SolveStatus.ITERATION_LIMIT, "stalled"
            break
        acceptable_count = acceptable_count + 1 if e0 <= opt.acceptable_tol else 0
        if acceptable_count >= opt.acceptable_iter:
            status, msg = SolveStatus.OPTIMAL, "solved to acceptable level"
            break

        emu, rd, c, _, _ = errors(x, s, lam, z, mu, grad, Jg, Jh, g, h)
        while emu <= opt.kappa_eps * mu and mu > opt.tol / 10:
            mu = max(opt.tol / 10, opt.mu_factor * mu)
            filt.clear()
            emu, rd, c, _, _ = errors(x, s, lam, z, mu, grad, Jg, Jh, g, h)

        rg, rh = g, h + s
        rc = s * z - mu
        W = P.hess(x, lam, z)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            sigma = z / s
        if not np.all(np.isfinite(sigma)):
            status, msg = SolveStatus.NUMERICAL_FAILURE, "slacks collapsed to zero"
            break
        M = W + Jh.T @ sp.diags(sigma) @ Jh
        delta_floor = 0.0
        for _ in range(8):
            fac = _factor_kkt(M, Jg, n, me, delta_w_last, delta_floor)
            if fac is None:
                break
            kkt, delta_w = fac

            def direction(rg, rh, kkt=kkt):
                rhs = np.concatenate([-(rd + Jh.T @ ((z * rh - rc) / s)), -rg])
                d = kkt(rhs)
                dx_ = d[:n]
                ds_ = -rh - Jh @ dx_
                return dx_, d[n:], ds_, -(rc + z * ds_) / s

            dx, dlam, ds, dz = direction(rg, rh)
            # a huge step means the matrix is numerically singular despite its inertia
            if np.all(np.isfinite(dx)) and np.max(np.abs(dx), initial=0.0) <= MAX_STEP:
                break
            delta_floor = max(1e-8, 100 * delta_w)
        else:
            fac = None
        if fac is None:
            status, msg = SolveStatus.NUMERICAL_FAILURE, "KKT system could not be regularized"
            break
        if delta_w > 0:
            delta_w_last = delta_w
        ap = _fraction_to_boundary(s, ds, opt.tau)
        ad = _fraction_to_boundary(z, dz, opt.tau)

        # filter line search on (constraint violation, barrier objective)
        theta0 = float(np.abs(c).sum())
        fval = P.f(x)
        phi0 = fval - mu * np.sum(np.log(s))
        dphi = float(grad @ dx - mu * np.sum(ds / s))
        if theta_max is None:
            theta_max = 1e4 * max(1.0, theta0)

        def measures(xt, st):
            if np.any(st <= 0):
                return np.inf, np.inf, None, None
            try:
                gt, ht = P.g(xt), P.h(xt)
                ft = P.f(xt)
            except (FloatingPointError, ValueError):
                return np.inf, np.inf, None, None
            th = float(np.abs(gt).sum() + np.abs(ht + st).sum())
            ph = ft - mu * np.sum(np.log(st))
            if not (np.isfinite(th) and np.isfinite(ph)):
                return np.inf, np.inf, None, None
            return th, ph, gt, ht

        def switching(a):
            return dphi < 0 and a * (-dphi) ** S_PHI > DELTA * theta0 ** S_THETA

        def acceptable(th, ph, a):
            if th > theta_max:
                return False, False
            if any(th >= tf and ph >= pf_ for tf, pf_ in filt):
                return False, False
            if switching(a) and theta0 <= theta_min_f(theta_max):
                return ph <= phi0 + ETA * a * dphi, True
            ok = th <= (1 - GAMMA_THETA) * theta0 or ph <= phi0 - GAMMA_PHI * theta0
            return ok, False

        alpha = ap
        accepted, ftype = False, False
        a_min = _min_step(dphi, theta0)
        first = True
        while alpha >= a_min:
            th, ph, gt, ht = measures(x + alpha * dx, s + alpha * ds)
            accepted, ftype = acceptable(th, ph, alpha)
            if accepted:
                break
            if first and gt is not None and th >= theta0:
                # second-order correction against the curvature of the constraints
                cdx, cdlam, cds, cdz = direction(alpha * rg + gt, alpha * rh + ht + s + alpha * ds)
                if np.all(np.isfinite(cdx)):
                    ac = _fraction_to_boundary(s, cds, opt.tau)
                    thc, phc, _, _ = measures(x + ac * cdx, s + ac * cds)
                    ok, ft_ = acceptable(thc, phc, ac)
                    if ok:
                        dx, dlam, ds, dz = cdx, cdlam, cds, cdz
                        alpha, accepted, ftype = ac, True, ft_
                        ad = _fraction_to_boundary(z, dz, opt.tau)
                        break
            first = False
            alpha *= 0.5
        if not accepted:
            # line search failed: reset the filter and take the feasible step (nonmonotone)
            alpha = ap
            filt.clear()
            theta_max = None
        elif not ftype:
            filt.append(((1 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0))

        log.debug("it %3d f=%.8g err=%.2e mu=%.1e ap=%.2e alpha=%.2e ad=%.2e dw=%.1e%s",
                  it, fval, e0, mu, ap, alpha, ad, delta_w, "" if accepted else " (fallback)")
        x = x + alpha * dx
        s = s + alpha * ds
        lam = lam + alpha * dlam
        z = z + ad * dz
        kappa = 1e10
        z = np.clip(z, mu / (kappa * s), kappa * mu / s)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            status, msg = SolveStatus.NUMERICAL_FAILURE, "iterates diverged"
            break
    else:
        it = opt.max_iter

    if status in (SolveStatus.ITERATION_LIMIT, SolveStatus.NUMERICAL_FAILURE) and best[0] <= opt.acceptable_tol:
        x, s, lam, z = best[2]
        status, msg = SolveStatus.OPTIMAL, "solved to acceptable level"
    pf = P.p
    g_raw = pf.eq(x)
    h_raw = pf.ineq(x)
    primal = max(
        np.max(np.abs(g_raw), initial=0.0),
        np.max(h_raw, initial=0.0),
        np.max(x[P.up_idx] - P.up_val, initial=0.0),
        np.max(P.lo_val - x[P.lo_idx], initial=0.0),
    )
    grad = P.grad(x)
    _, _, _, dual, _ = errors(x, s, lam, z, 0.0, grad, P.jg(x), P.jh(x), P.g(x), P.h(x))
    if status == SolveStatus.ITERATION_LIMIT and primal > opt.infeasibility_tol:
        status, msg = SolveStatus.INFEASIBLE, "primal infeasibility did not vanish"
    ne = len(P.dg)
    ni = len(P.dh)
    return SolveOutcome(
        status=status,
        objective=float(pf.objective(x)),
        x=x,
        lam_eq=lam[:ne] * P.dg / P.df,
        lam_ineq=z[:ni] * P.dh / P.df,
        primal_residual=float(primal),
        dual_residual=float(dual),
        complementarity=float(np.max(np.abs(s * z), initial=0.0)),
        iterations=it,
        message=msg,
    )


def _refined(solve, K, steps=3):
    """Wrap a factorized solve with iterative refinement on the unfactored matrix."""

    def run(r):
        d = solve(r)
        for _ in range(steps):
            res = r - K @ d
            if not np.all(np.isfinite(res)) or np.max(np.abs(res)) <= 1e-14 * max(1.0, np.max(np.abs(r))):
                break
            d = d + solve(res)
        return d
    return run


def _factor_kkt(M, Jg, n, me, delta_last, delta_floor=0.0):
    """Factor the regularized KKT matrix; returns (solve, delta_w) or None."""
    dim = n + me
    dense = dim <= DENSE_LIMIT
    Md = _to_dense(M) if dense else sp.csr_matrix(M)
    Jgd = _to_dense(Jg) if dense else sp.csr_matrix(Jg)
    delta_w, delta_c = delta_floor, 0.0
    for attempt in range(40):
        if dense:
            K = np.zeros((dim, dim))
            K[:n, :n] = Md + delta_w * np.eye(n)
            K[:n, n:] = Jgd.T
            K[n:, :n] = Jgd
            K[n:, n:] = -delta_c * np.eye(me)
            _, D, _ = sla.ldl(K)
            pos, neg, zero = _inertia(D)
            ok = pos == n and neg == me and zero == 0
            if zero and delta_c == 0.0:
                delta_c = 1e-8
            if ok:
                with np.errstate(all="ignore"):
                    lu = sla.lu_factor(K, check_finite=False)
                if np.all(np.isfinite(lu[0])) and np.min(np.abs(np.diag(lu[0]))) > 0:
                    return _refined(lambda r, lu=lu: sla.lu_solve(lu, r, check_finite=False), K), delta_w
        else:
            K = sp.bmat([[Md + delta_w * sp.identity(n), Jgd.T], [Jgd, -delta_c * sp.identity(me) if me else None]],
                        format="csc")
            try:
                return _refined(spla.splu(K).solve, K), delta_w
            except RuntimeError:
                pass
            if delta_c == 0.0:
                delta_c = 1e-8
        if delta_w == 0.0:
            delta_w = 1e-4 if delta_last == 0 else max(1e-20, delta_last / 3)
        else:
            delta_w *= 8.0
        if delta_w > 1e40:
            return None
    return None
