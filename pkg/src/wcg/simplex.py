"""Sparse revised primal simplex for bounded-variable linear programs.

Solves::

    min c @ x   s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub

with finite lower bounds. Bounds are handled natively (nonbasic variables sit
at either bound, bound flips need no basis change). The basis inverse is kept
as a sparse LU factor plus a product-form eta file, refactored periodically.
Pricing is Dantzig's rule; after ``10 * rows`` consecutive degenerate pivots
it falls back to Bland's rule until the next nondegenerate step.

A presolve pass removes singleton equality rows and forcing rows first,
which eliminates gangs whose occupancy is fully determined by their dynamics.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    objective: float
    iterations: int = 0
    y_eq: np.ndarray | None = None
    y_ub: np.ndarray | None = None
    dual_objective: float = float("nan")
    degenerate_basics: int = 0
    infeasible_rows: list = field(default_factory=list)
    presolve_fixed: int = 0


class _Factor:
    """B^{-1} as LU(B0) followed by eta transformations."""

    def __init__(self, A: sp.csc_matrix, basic: np.ndarray):
        self.lu = splu(sp.csc_matrix(A[:, basic]), permc_spec="COLAMD")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, d in self.etas:
            wr = w[r] / d[r]
            w -= d * wr
            w[r] = wr
        return w

    def btran(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        for r, d in reversed(self.etas):
            v[r] = (v[r] - (d @ v - d[r] * v[r])) / d[r]
        return self.lu.solve(v, trans="T")

    def update(self, r: int, d: np.ndarray) -> None:
        self.etas.append((r, d.copy()))


def _column(A: sp.csc_matrix, q: int, m: int) -> np.ndarray:
    col = np.zeros(m)
    lo, hi = A.indptr[q], A.indptr[q + 1]
    col[A.indices[lo:hi]] = A.data[lo:hi]
    return col


def _run_phase(A, b, c, lb, ub, basic, at_upper, max_iter):
    """Primal simplex from a feasible basis. Mutates basic / at_upper in place."""
    m, n = A.shape
    AT = A.T.tocsr()
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basic] = True
    movable = ub - lb > 0
    degenerate_run = 0
    iterations = 0
    factor = None
    xB = None
    while True:
        if factor is None or len(factor.etas) >= REFACTOR_EVERY:
            factor = _Factor(A, basic)
            xN = np.where(at_upper, ub, lb)
            xN[basic] = 0.0
            xB = factor.ftran(b - A @ xN)
        y = factor.btran(c[basic])
        d = c - AT @ y
        bland = degenerate_run > 10 * m
        up = ~is_basic & ~at_upper & movable & (d < -DUAL_TOL)
        down = ~is_basic & at_upper & (d > DUAL_TOL)
        cand = np.flatnonzero(up | down)
        if cand.size == 0:
            return "optimal", xB, iterations
        if iterations >= max_iter:
            return "iteration_limit", xB, iterations
        q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
        sigma = 1.0 if up[q] else -1.0

        dB = factor.ftran(_column(A, q, m))
        delta = -sigma * dB
        lbB, ubB = lb[basic], ub[basic]
        # Harris two-pass ratio test: bound the step using relaxed bounds, then
        # pick the largest pivot among rows that block within that step
        ratios = np.full(m, np.inf)
        relaxed = np.full(m, np.inf)
        dec = delta < -PIVOT_TOL
        inc = (delta > PIVOT_TOL) & np.isfinite(ubB)
        room_dec = np.maximum(xB[dec] - lbB[dec], 0.0)
        room_inc = np.maximum(ubB[inc] - xB[inc], 0.0)
        ratios[dec] = room_dec / -delta[dec]
        ratios[inc] = room_inc / delta[inc]
        relaxed[dec] = (room_dec + PRIMAL_TOL) / -delta[dec]
        relaxed[inc] = (room_inc + PRIMAL_TOL) / delta[inc]
        theta_flip = ub[q] - lb[q]
        theta_row = ratios.min() if m else np.inf
        harris = relaxed.min() if m else np.inf
        if not np.isfinite(theta_flip) and not np.isfinite(theta_row):
            return "unbounded", xB, iterations
        iterations += 1

        if theta_flip <= theta_row:
            theta = theta_flip
            xB = xB + theta * delta
            at_upper[q] = not at_upper[q]
        else:
            if bland:
                ties = np.flatnonzero(ratios <= theta_row + 1e-12 * max(1.0, theta_row))
                r = int(ties[np.argmin(basic[ties])])
            else:
                ties = np.flatnonzero(ratios <= harris)
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            theta = ratios[r]
            leaving = basic[r]
            xB = xB + theta * delta
            to_upper = delta[r] > 0
            entering_value = (ub[q] if at_upper[q] else lb[q]) + sigma * theta
            xB[r] = entering_value
            basic[r] = q
            is_basic[q] = True
            is_basic[leaving] = False
            at_upper[leaving] = bool(to_upper)
            at_upper[q] = False
            factor.update(r, dB)
        degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0


def simplex(c, A_eq, b_eq, A_ub=None, b_ub=None, lb=None, ub=None, max_iter=None) -> SimplexResult:
    """Two-phase bounded revised simplex (no presolve)."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = sp.csr_matrix(A_eq) if A_eq is not None else sp.csr_matrix((0, n))
    b_eq = np.asarray(b_eq if b_eq is not None else np.zeros(0), dtype=float)
    A_ub = sp.csr_matrix(A_ub) if A_ub is not None else sp.csr_matrix((0, n))
    b_ub = np.asarray(b_ub if b_ub is not None else np.zeros(0), dtype=float)
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(~np.isfinite(lb)):
        raise ValueError("every variable needs a finite lower bound")
    if np.any(ub < lb):
        return SimplexResult("infeasible", lb.copy(), np.nan)
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    if m == 0:
        x = np.where(c < 0, ub, lb)
        if np.any(~np.isfinite(x)):
            return SimplexResult("unbounded", np.where(np.isfinite(x), x, lb), -np.inf)
        return SimplexResult("optimal", x, float(c @ x), y_eq=np.zeros(0), y_ub=np.zeros(0),
                             dual_objective=float(c @ x))

    # structural | slacks | artificials
    A = sp.bmat(
        [[A_eq, None], [A_ub, sp.identity(m_ub, format="csr")]], format="csr"
    ) if m_ub else A_eq
    if A.shape[1] != n + m_ub:
        A = sp.hstack([A, sp.csr_matrix((m, n + m_ub - A.shape[1]))], format="csr")
    b = np.concatenate([b_eq, b_ub])
    lb_s = np.concatenate([lb, np.zeros(m_ub)])
    ub_s = np.concatenate([ub, np.full(m_ub, np.inf)])
    n_s = n + m_ub

    resid = b - A @ lb_s
    sign = np.where(resid >= 0, 1.0, -1.0)
    A_full = sp.hstack([A, sp.diags(sign, format="csr")], format="csc")
    lb_f = np.concatenate([lb_s, np.zeros(m)])
    ub_f = np.concatenate([ub_s, np.full(m, np.inf)])
    basic = np.arange(n_s, n_s + m)
    at_upper = np.zeros(n_s + m, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (m + n_s) + 1000

    c1 = np.concatenate([np.zeros(n_s), np.ones(m)])
    status, xB, it1 = _run_phase(A_full, b, c1, lb_f, ub_f, basic, at_upper, max_iter)
    scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
    infeas = float(xB[basic >= n_s].sum()) if m else 0.0
    if status != "optimal" or infeas > 1e-9 * scale:
        rows = sorted(int(basic[k] - n_s) for k in np.flatnonzero(basic >= n_s) if xB[k] > 1e-9 * scale)
        x = np.where(at_upper, ub_f, lb_f)
        x[basic] = xB
        st = "infeasible" if status == "optimal" else status
        return SimplexResult(st, x[:n], np.nan, it1, infeasible_rows=rows)

    # Phase 2: artificials pinned at zero.
    ub_f[n_s:] = 0.0
    at_upper[n_s:] = False
    c2 = np.concatenate([c, np.zeros(m_ub + m)])
    status, xB, it2 = _run_phase(A_full, b, c2, lb_f, ub_f, basic, at_upper, max_iter)

    factor = _Factor(A_full, basic)
    xN = np.where(at_upper, ub_f, lb_f)
    xN[basic] = 0.0
    xB = factor.ftran(b - A_full @ xN)
    x = xN
    x[basic] = xB
    x = np.clip(x, lb_f, ub_f)
    y = factor.btran(c2[basic])
    d = c2 - A_full.T @ y
    finite_lb, finite_ub = np.isfinite(lb_f), np.isfinite(ub_f)
    dual_obj = float(b @ y)
    pos, neg = np.maximum(d, 0.0), np.minimum(d, 0.0)
    dual_obj += float(np.sum(np.where(finite_lb, lb_f, 0.0) * pos))
    if np.any((neg < -DUAL_TOL) & ~finite_ub):
        dual_obj = -np.inf
    else:
        dual_obj += float(np.sum(np.where(finite_ub, ub_f, 0.0) * neg))
    xb = x[basic]
    degenerate = int(np.sum((np.abs(xb - lb_f[basic]) <= PRIMAL_TOL) | (np.abs(xb - ub_f[basic]) <= PRIMAL_TOL)))
    return SimplexResult(
        status,
        x[:n],
        float(c @ x[:n]),
        it1 + it2,
        y_eq=y[:m_eq],
        y_ub=y[m_eq:],
        dual_objective=dual_obj,
        degenerate_basics=degenerate,
    )


@dataclass
class Presolved:
    keep_cols: np.ndarray
    fixed_values: np.ndarray  # full length; NaN where not fixed
    eq_rows: np.ndarray
    ub_rows: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    infeasible_rows: list


def presolve(A_eq, b_eq, A_ub, b_ub, lb, ub, tol=1e-13) -> Presolved:
    """Fix variables forced by singleton or forcing equality rows, then reduce."""
    A_eq = sp.csr_matrix(A_eq)
    A_ub = sp.csr_matrix(A_ub)
    n = A_eq.shape[1]
    m_eq = A_eq.shape[0]
    cols = sp.csc_matrix(A_eq)
    fixed = np.full(n, np.nan)
    fixed_lb = lb == ub
    fixed[fixed_lb] = lb[fixed_lb]
    infeasible: list[int] = []
    done = np.zeros(m_eq, dtype=bool)
    queue = deque(range(m_eq))
    queued = np.ones(m_eq, dtype=bool)

    def fix(k, value):
        fixed[k] = value
        for r in cols.indices[cols.indptr[k]:cols.indptr[k + 1]]:
            if not queued[r] and not done[r]:
                queued[r] = True
                queue.append(r)

    while queue:
        r = queue.popleft()
        queued[r] = False
        if done[r]:
            continue
        lo, hi = A_eq.indptr[r], A_eq.indptr[r + 1]
        idx, val = A_eq.indices[lo:hi], A_eq.data[lo:hi]
        is_fixed = ~np.isnan(fixed[idx])
        rhs = b_eq[r] - float(val[is_fixed] @ fixed[idx[is_fixed]])
        free = ~is_fixed & (np.abs(val) > 1e-14)
        fidx, fval = idx[free], val[free]
        if fidx.size == 0:
            done[r] = True
            if abs(rhs) > 1e-9 * max(1.0, abs(b_eq[r])):
                infeasible.append(int(r))
            continue
        if fidx.size == 1:
            k = int(fidx[0])
            v = rhs / fval[0]
            if v < lb[k] - 1e-9 or v > ub[k] + 1e-9:
                infeasible.append(int(r))
            done[r] = True
            fix(k, float(np.clip(v, lb[k], ub[k])))
            continue
        # forcing rows: only when every coefficient is material, so that the
        # activity bound is attained exactly rather than approximately
        if np.abs(fval).min() < 1e-6:
            continue
        lo_b, up_b = lb[fidx], ub[fidx]
        at_min = np.where(fval > 0, lo_b, up_b)
        at_max = np.where(fval > 0, up_b, lo_b)
        if np.all(np.isfinite(at_min)) and abs(rhs - float(fval @ at_min)) <= tol:
            done[r] = True
            for k, v in zip(fidx, at_min):
                fix(int(k), float(v))
        elif np.all(np.isfinite(at_max)) and abs(rhs - float(fval @ at_max)) <= tol:
            done[r] = True
            for k, v in zip(fidx, at_max):
                fix(int(k), float(v))

    is_fixed = ~np.isnan(fixed)
    keep_cols = np.flatnonzero(~is_fixed)
    fixed_vals = np.where(is_fixed, fixed, 0.0)

    b_eq_r = b_eq - A_eq @ fixed_vals
    rows_eq = []
    Aeq_keep = A_eq[:, keep_cols]
    nnz_eq = np.diff(Aeq_keep.indptr)
    for r in range(m_eq):
        if done[r]:
            continue
        if nnz_eq[r] == 0:
            if abs(b_eq_r[r]) > 1e-9 * max(1.0, abs(b_eq[r])):
                infeasible.append(r)
            continue
        rows_eq.append(r)
    b_ub_r = b_ub - A_ub @ fixed_vals
    Aub_keep = A_ub[:, keep_cols]
    nnz_ub = np.diff(Aub_keep.indptr)
    rows_ub = []
    for r in range(A_ub.shape[0]):
        if nnz_ub[r] == 0:
            if b_ub_r[r] < -1e-9 * max(1.0, abs(b_ub[r])):
                infeasible.append(m_eq + r)
            continue
        rows_ub.append(r)
    rows_eq = np.array(rows_eq, dtype=np.int64)
    rows_ub = np.array(rows_ub, dtype=np.int64)
    return Presolved(
        keep_cols,
        np.where(is_fixed, fixed, np.nan),
        rows_eq,
        rows_ub,
        Aeq_keep[rows_eq],
        b_eq_r[rows_eq],
        Aub_keep[rows_ub],
        b_ub_r[rows_ub],
        sorted(set(infeasible)),
    )


def solve(c, A_eq, b_eq, A_ub, b_ub, lb, ub, use_presolve=True) -> SimplexResult:
    """Presolve, run the simplex on what remains, and map the answer back."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = sp.csr_matrix(A_eq) if A_eq is not None else sp.csr_matrix((0, n))
    A_ub = sp.csr_matrix(A_ub) if A_ub is not None else sp.csr_matrix((0, n))
    b_eq = np.asarray(b_eq if b_eq is not None else np.zeros(0), dtype=float)
    b_ub = np.asarray(b_ub if b_ub is not None else np.zeros(0), dtype=float)
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if not use_presolve:
        return simplex(c, A_eq, b_eq, A_ub, b_ub, lb, ub)
    pre = presolve(A_eq, b_eq, A_ub, b_ub, lb, ub)
    if pre.infeasible_rows:
        x = np.where(np.isnan(pre.fixed_values), lb, pre.fixed_values)
        return SimplexResult("infeasible", x, np.nan, infeasible_rows=pre.infeasible_rows)
    k = pre.keep_cols
    res = simplex(c[k], pre.A_eq, pre.b_eq, pre.A_ub, pre.b_ub, lb[k], ub[k])
    x = np.where(np.isnan(pre.fixed_values), 0.0, pre.fixed_values)
    x[k] = res.x
    const = float(c @ np.where(np.isnan(pre.fixed_values), 0.0, pre.fixed_values))
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    y_eq = y_ub = None
    if res.y_eq is not None:
        y_eq = np.zeros(A_eq.shape[0])
        y_eq[pre.eq_rows] = res.y_eq
        y_ub = np.zeros(m_ub)
        y_ub[pre.ub_rows] = res.y_ub
    return SimplexResult(
        res.status,
        x,
        res.objective + const if res.status == "optimal" else np.nan,
        res.iterations,
        y_eq=y_eq,
        y_ub=y_ub,
        dual_objective=res.dual_objective + const,
        degenerate_basics=res.degenerate_basics,
        infeasible_rows=[int(pre.eq_rows[r]) if r < len(pre.eq_rows) else int(m_eq + pre.ub_rows[r - len(pre.eq_rows)]) for r in res.infeasible_rows],
        presolve_fixed=int(n - k.size),
    )
