"""Smooth NLP carrier plus a small row-wise builder for convex models.

An :class:`NlpProblem` is::

    min  f(x)   s.t.  g(x) = 0,  h(x) <= 0,  xl <= x <= xu

with callbacks returning dense vectors and ``scipy.sparse`` derivative
matrices whose sparsity pattern does not depend on ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass
class NlpProblem:
    n: int
    x0: np.ndarray
    xl: np.ndarray
    xu: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    eq: Callable[[np.ndarray], np.ndarray]
    eq_jac: Callable[[np.ndarray], sp.spmatrix]
    ineq: Callable[[np.ndarray], np.ndarray]
    ineq_jac: Callable[[np.ndarray], sp.spmatrix]
    # hessian(x, obj_factor, lam_eq, lam_ineq) -> full symmetric n x n
    hessian: Callable[[np.ndarray, float, np.ndarray, np.ndarray], sp.spmatrix]
    convex: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def m_eq(self) -> int:
        return len(self.eq(self.x0))

    @property
    def m_ineq(self) -> int:
        return len(self.ineq(self.x0))


class _Row:
    """value = a.x + c + w*|F x_U + f|^2 + nw*sqrt(|G x_V + g|^2 + eps)"""

    __slots__ = ("lin_idx", "lin_coef", "const", "quad", "norm")

    def __init__(self, lin_idx, lin_coef, const):
        self.lin_idx = np.asarray(lin_idx, dtype=int)
        self.lin_coef = np.asarray(lin_coef, dtype=float)
        self.const = float(const)
        self.quad = None
        self.norm = None


def _forms_to_dense(forms):
    """[(idx, coef, offset), ...] -> (union indices, F, f)."""
    union = sorted({int(i) for idx, _, _ in forms for i in idx})
    pos = {v: k for k, v in enumerate(union)}
    F = np.zeros((len(forms), len(union)))
    f = np.zeros(len(forms))
    for r, (idx, coef, off) in enumerate(forms):
        for i, c in zip(idx, coef):
            F[r, pos[int(i)]] += c
        f[r] = off
    return np.array(union, dtype=int), F, f


class RowModel:
    """Incrementally built model whose rows are linear + sum-of-squares + norm pieces.

    Used for the convex relaxations; every piece has exact first and second
    derivatives so the interior-point solver sees analytic Hessians.
    """

    def __init__(self, n: int):
        self.n = n
        self.eq_rows: list[_Row] = []
        self.ineq_rows: list[_Row] = []
        self.obj_quad = np.zeros(n)  # 0.5 * sum q_i x_i^2
        self.obj_lin = np.zeros(n)
        self.obj_const = 0.0

    def add_eq(self, idx, coef, const=0.0) -> int:
        self.eq_rows.append(_Row(idx, coef, const))
        return len(self.eq_rows) - 1

    def add_ineq(self, idx=(), coef=(), const=0.0, quad=None, norm=None, eps=0.0) -> int:
        """Add ``a.x + const + w*sum(form^2) + sqrt(sum(form^2) + eps) <= 0``.

        ``quad`` is ``(weight, forms)`` and ``norm`` is ``forms`` where each form
        is ``(indices, coefficients, offset)``.
        """
        row = _Row(idx, coef, const)
        if quad is not None:
            w, forms = quad
            U, F, f = _forms_to_dense(forms)
            row.quad = (float(w), U, F, f, 2.0 * w * F.T @ F)
        if norm is not None:
            V, G, g = _forms_to_dense(norm)
            row.norm = (V, G, g, float(eps))
        self.ineq_rows.append(row)
        return len(self.ineq_rows) - 1

    # -- evaluation -------------------------------------------------------
    @staticmethod
    def _value(row: _Row, x: np.ndarray) -> float:
        v = row.const + float(row.lin_coef @ x[row.lin_idx]) if len(row.lin_idx) else row.const
        if row.quad is not None:
            w, U, F, f, _ = row.quad
            l = F @ x[U] + f
            v += w * float(l @ l)
        if row.norm is not None:
            V, G, g, eps = row.norm
            l = G @ x[V] + g
            v += float(np.sqrt(l @ l + eps))
        return v

    def _jac(self, rows: Sequence[_Row], x: np.ndarray) -> sp.csr_matrix:
        ri, ci, vals = [], [], []
        for r, row in enumerate(rows):
            if len(row.lin_idx):
                ri.extend([r] * len(row.lin_idx))
                ci.extend(row.lin_idx)
                vals.extend(row.lin_coef)
            if row.quad is not None:
                w, U, F, f, _ = row.quad
                grad = 2.0 * w * F.T @ (F @ x[U] + f)
                ri.extend([r] * len(U))
                ci.extend(U)
                vals.extend(grad)
            if row.norm is not None:
                V, G, g, eps = row.norm
                l = G @ x[V] + g
                nv = np.sqrt(l @ l + eps)
                ri.extend([r] * len(V))
                ci.extend(V)
                vals.extend(G.T @ l / nv)
        return sp.csr_matrix((vals, (ri, ci)), shape=(len(rows), self.n))

    def _hess(self, x, obj_factor, lam_ineq) -> sp.csr_matrix:
        ri, ci, vals = [np.arange(self.n)], [np.arange(self.n)], [obj_factor * self.obj_quad]
        for lam, row in zip(lam_ineq, self.ineq_rows):
            if lam == 0:
                continue
            if row.quad is not None:
                _, U, _, _, H = row.quad
                ri.append(np.repeat(U, len(U)))
                ci.append(np.tile(U, len(U)))
                vals.append((lam * H).ravel())
            if row.norm is not None:
                V, G, g, eps = row.norm
                l = G @ x[V] + g
                nv = np.sqrt(l @ l + eps)
                gl = G.T @ l
                H = G.T @ G / nv - np.outer(gl, gl) / nv**3
                ri.append(np.repeat(V, len(V)))
                ci.append(np.tile(V, len(V)))
                vals.append((lam * H).ravel())
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))), shape=(self.n, self.n)
        )

    def to_problem(self, x0, xl, xu, convex=True, name="", meta=None) -> NlpProblem:
        # equalities are linear by construction
        A = sp.csr_matrix(
            (
                [c for row in self.eq_rows for c in row.lin_coef],
                (
                    [r for r, row in enumerate(self.eq_rows) for _ in row.lin_idx],
                    [i for row in self.eq_rows for i in row.lin_idx],
                ),
            ),
            shape=(len(self.eq_rows), self.n),
        )
        b = np.array([row.const for row in self.eq_rows])
        q, c, c0 = self.obj_quad, self.obj_lin, self.obj_const
        rows = self.ineq_rows

        return NlpProblem(
            n=self.n,
            x0=np.asarray(x0, dtype=float),
            xl=np.asarray(xl, dtype=float),
            xu=np.asarray(xu, dtype=float),
            objective=lambda x: float(0.5 * q @ (x * x) + c @ x + c0),
            gradient=lambda x: q * x + c,
            eq=lambda x: A @ x + b,
            eq_jac=lambda x: A,
            ineq=lambda x: np.array([self._value(r, x) for r in rows]),
            ineq_jac=lambda x: self._jac(rows, x),
            hessian=lambda x, of, le, li: self._hess(x, of, li),
            convex=convex,
            name=name,
            meta=dict(meta or {}),
        )


def finite_difference_check(problem: NlpProblem, x: np.ndarray, h: float = 1e-6,
                            lam_eq: Optional[np.ndarray] = None,
                            lam_ineq: Optional[np.ndarray] = None) -> dict[str, float]:
    """Max relative error of analytic derivatives against central differences."""
    n = problem.n
    me, mi = len(problem.eq(x)), len(problem.ineq(x))
    rng = np.random.default_rng(0)
    lam_eq = rng.normal(size=me) if lam_eq is None else lam_eq
    lam_ineq = rng.uniform(0.1, 1.0, size=mi) if lam_ineq is None else lam_ineq

    def lag_grad(y):
        g = problem.gradient(y)
        if me:
            g = g + problem.eq_jac(y).T @ lam_eq
        if mi:
            g = g + problem.ineq_jac(y).T @ lam_ineq
        return np.asarray(g).ravel()

    fd_grad = np.zeros(n)
    fd_jg = np.zeros((me, n))
    fd_jh = np.zeros((mi, n))
    fd_hess = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        fd_grad[k] = (problem.objective(x + e) - problem.objective(x - e)) / (2 * h)
        if me:
            fd_jg[:, k] = (problem.eq(x + e) - problem.eq(x - e)) / (2 * h)
        if mi:
            fd_jh[:, k] = (problem.ineq(x + e) - problem.ineq(x - e)) / (2 * h)
        fd_hess[:, k] = (lag_grad(x + e) - lag_grad(x - e)) / (2 * h)

    def rel(a, b):
        a = np.asarray(a.toarray() if sp.issparse(a) else a, dtype=float)
        scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
        return float(np.max(np.abs(a - b))) / scale if b.size else 0.0

    return {
        "gradient": rel(problem.gradient(x), fd_grad),
        "eq_jac": rel(problem.eq_jac(x), fd_jg) if me else 0.0,
        "ineq_jac": rel(problem.ineq_jac(x), fd_jh) if mi else 0.0,
        "hessian": rel(problem.hessian(x, 1.0, lam_eq, lam_ineq), fd_hess),
    }
