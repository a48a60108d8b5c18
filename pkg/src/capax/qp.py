"""Dense solvers for the small convex problems behind every computation.

Objective convention: minimize ``0.5 x^T Q x - b^T x`` over

* ``nonneg``: ``x >= 0``;
* ``simplex``: ``x >= 0`` and ``sum(x) == 1``;
* ``linear_ineq``: ``A x >= c`` and ``x >= 0``.

Plus a dense two-phase simplex LP, a principal-pivoting LCP solver and
brute-force enumeration oracles for small instances.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotPositiveDefiniteError, SizeError

log = logging.getLogger(__name__)

CONSTRAINTS = ("nonneg", "simplex", "linear_ineq")
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
COND_LIMIT = 1e12
ORACLE_MAX_DIM = 12
ORACLE_MAX_TOTAL = 16
LP_MAX_SIZE = 200


@dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    b: np.ndarray
    constraint: str = "nonneg"
    A_mat: np.ndarray | None = None
    c_vec: np.ndarray | None = None

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError("Q must be square")
        scale = max(1.0, float(np.max(np.abs(Q), initial=0.0)))
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10 * scale:
            raise NotPositiveDefiniteError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size != Q.shape[0]:
            raise DimensionError(f"b has length {b.size}, Q has size {Q.shape[0]}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        A = c = None
        if self.constraint == "linear_ineq":
            if self.A_mat is None or self.c_vec is None:
                raise DimensionError("linear_ineq needs A_mat and c_vec")
            A = np.array(self.A_mat, dtype=float).reshape(-1, Q.shape[0]) if np.size(self.A_mat) else np.zeros((0, Q.shape[0]))
            c = np.array(self.c_vec, dtype=float).reshape(-1)
            if A.shape != (c.size, Q.shape[0]):
                raise DimensionError(f"A_mat shape {A.shape} does not match c_vec length {c.size} and n={Q.shape[0]}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A_mat", A)
        object.__setattr__(self, "c_vec", c)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return 0 if self.A_mat is None else self.A_mat.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x - self.b @ x)


@dataclass
class SolveReport:
    """Outcome of a solve.

    ``active_set`` lists the variables held at zero (and, for
    ``linear_ineq``, is complemented by ``info["active_rows"]``).
    ``multipliers`` holds the bound multipliers (gradient off the support);
    ``shift`` is the Tikhonov shift applied to an ill-conditioned ``Q``.
    """

    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    active_set: tuple[int, ...] = ()
    shift: float = 0.0
    multipliers: np.ndarray | None = None
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# --------------------------------------------------------------------------
# helpers

def _spectrum(Q):
    ev = np.linalg.eigvalsh(Q)
    return float(ev[0]), float(ev[-1])


def _prepare(problem: QpProblem):
    """PD check and the ill-conditioning guard."""
    n = problem.n
    if n == 0:
        return problem.Q, 0.0, 1.0
    lo, hi = _spectrum(problem.Q)
    if not lo > 0:
        raise NotPositiveDefiniteError(f"Q is not positive definite (smallest eigenvalue {lo:.3e})")
    shift = 0.0
    Q = problem.Q
    if hi / lo > COND_LIMIT:
        shift = 1e-12 * float(np.trace(Q)) / n
        Q = Q + shift * np.eye(n)
        log.info("Q condition %.2e exceeds %.0e, shifted by %.3e", hi / lo, COND_LIMIT, shift)
        lo += shift
        hi += shift
    return Q, shift, hi


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _project_nonneg(v):
    return np.maximum(v, 0.0)


def projected_gradient(Q, b, proj, x0, lipschitz, max_iter, tol):
    """Projected gradient with Barzilai-Borwein steps and exact line search.

    Stops when the projected step is below ``tol`` or the sign pattern has
    been stable for 20 iterations (the active-set finish takes over).
    """
    x = proj(np.asarray(x0, dtype=float))
    g = Q @ x - b
    step = 1.0 / lipschitz
    stable = 0
    supp = x > 0
    it = 0
    for it in range(1, max_iter + 1):
        d = proj(x - step * g) - x
        if np.max(np.abs(d), initial=0.0) <= tol * max(step, 1.0 / lipschitz):
            break
        Qd = Q @ d
        dQd = float(d @ Qd)
        t = 1.0 if dQd <= 0 else min(1.0, -float(g @ d) / dQd)
        if t <= 0:
            break
        x = x + t * d
        g = g + t * Qd
        sy = t * t * dQd
        step = (t * t * float(d @ d)) / sy if sy > 0 else 1.0 / lipschitz
        new = x > 0
        stable = stable + 1 if np.array_equal(new, supp) else 0
        supp = new
        if stable >= 20:
            break
    return x, it


def _active_set_nonneg(Q, b, x, tol, max_iter):
    n = len(b)
    x = np.maximum(x, 0.0)
    free = x > 0
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    for it in range(1, max_iter + 1):
        y = np.zeros(n)
        if free.any():
            y[free] = sla.solve(Q[np.ix_(free, free)], b[free], assume_a="sym")
        if np.all(y[free] >= 0):
            x = y
            g = Q @ x - b
            cand = ~free & (g < -tol * scale)
            if not cand.any():
                return x, it, "converged"
            j = int(np.flatnonzero(cand)[np.argmin(g[cand])])
            free[j] = True
        else:
            neg = free & (y < 0)
            ratios = x[neg] / (x[neg] - y[neg])
            a = float(ratios.min())
            x = x + a * (y - x)
            hit = np.flatnonzero(neg)[ratios <= a]
            x[hit] = 0.0
            free[hit] = False
            free &= x > 0
    return x, max_iter, "max_iter"


def _simplex_free_solve(Q, b, free):
    c, low = sla.cho_factor(Q[np.ix_(free, free)])
    u = sla.cho_solve((c, low), b[free])
    v = sla.cho_solve((c, low), np.ones(int(free.sum())))
    nu = (1.0 - u.sum()) / v.sum()
    return u + nu * v, nu


def _active_set_simplex(Q, b, x, tol, max_iter):
    n = len(b)
    x = np.maximum(x, 0.0)
    x /= x.sum()
    free = x > 0
    for it in range(1, max_iter + 1):
        yF, nu = _simplex_free_solve(Q, b, free)
        y = np.zeros(n)
        y[free] = yF
        if np.all(yF >= 0):
            x = y
            g = Q @ x - b
            mult = g - nu
            scale = max(1.0, float(np.max(np.abs(b), initial=0.0)), abs(nu))
            cand = ~free & (mult < -tol * scale)
            if not cand.any():
                return x, it, "converged", nu
            j = int(np.flatnonzero(cand)[np.argmin(mult[cand])])
            free[j] = True
        else:
            neg = free & (y < 0)
            ratios = x[neg] / (x[neg] - y[neg])
            a = float(ratios.min())
            x = x + a * (y - x)
            hit = np.flatnonzero(neg)[ratios <= a]
            x[hit] = 0.0
            free[hit] = False
            free &= x > 0
    return x, max_iter, "max_iter", float("nan")


def kkt_residual(problem: QpProblem, x, multipliers=None, nu=None, Q=None) -> float:
    """Relative KKT residual (stationarity, feasibility, complementarity)."""
    Q = problem.Q if Q is None else Q
    x = np.asarray(x, dtype=float)
    g = Q @ x - problem.b
    scale = max(1.0, float(np.max(np.abs(problem.b), initial=0.0)), float(np.max(np.abs(Q @ x), initial=0.0)))
    feas = float(np.max(-x, initial=0.0))
    if problem.constraint == "nonneg":
        pos = x > 0
        stat = max(float(np.max(np.abs(g[pos]), initial=0.0)), float(np.max(-g[~pos], initial=0.0)))
        comp = float(np.max(np.abs(x * g), initial=0.0))
        return max(stat, feas, comp) / scale
    if problem.constraint == "simplex":
        if nu is None:
            pos = x > 0
            nu = float(np.mean(g[pos])) if pos.any() else 0.0
        scale = max(scale, abs(nu))
        h = g - nu
        pos = x > 0
        stat = max(float(np.max(np.abs(h[pos]), initial=0.0)), float(np.max(-h[~pos], initial=0.0)))
        comp = float(np.max(np.abs(x * h), initial=0.0))
        feas = max(feas, abs(float(x.sum()) - 1.0))
        return max(stat, feas, comp) / scale
    A, c = problem.A_mat, problem.c_vec
    m = problem.m
    lam = np.zeros(m + problem.n) if multipliers is None else np.asarray(multipliers, dtype=float)
    lam_rows, lam_bounds = lam[:m], lam[m:]
    slack = A @ x - c
    stat = float(np.max(np.abs(g - A.T @ lam_rows - lam_bounds), initial=0.0))
    feas = max(feas, float(np.max(-slack, initial=0.0)), float(np.max(-lam, initial=0.0)))
    comp = max(float(np.max(np.abs(lam_rows * slack), initial=0.0)), float(np.max(np.abs(lam_bounds * x), initial=0.0)))
    scale = max(scale, float(np.max(np.abs(c), initial=0.0)))
    return max(stat, feas, comp) / scale


# --------------------------------------------------------------------------
# dual active-set method for linear inequality constraints

def goldfarb_idnani(G, a, C, b0, max_iter=DEFAULT_MAX_ITER):
    """Minimize ``0.5 x^T G x - a^T x`` subject to ``C^T x >= b0``.

    Dual active-set method starting from the unconstrained minimizer and
    adding the most violated constraint at each major step. Maintains
    ``J^T N = [R; 0]`` with ``J J^T = G^{-1}`` for the active columns ``N``.

    Returns ``(x, multipliers, active, iterations, status)``.
    """
    n, m = C.shape
    L = sla.cholesky(G, lower=True)
    J = sla.solve_triangular(L, np.eye(n), lower=True).T
    x = sla.cho_solve((L, True), a)
    R = np.zeros((n, n))
    active: list[int] = []
    u = np.zeros(0)
    col_norm = np.linalg.norm(C, axis=0)
    feas_tol = 1e-12 * (1.0 + np.abs(b0))
    it = 0

    def drop(k):
        nonlocal R, J
        q = len(active)
        Rq = np.delete(R[:q, :q], k, axis=1)
        for i in range(k, q - 1):
            r1, r2 = Rq[i, i], Rq[i + 1, i]
            rr = math.hypot(r1, r2)
            if rr == 0.0:
                continue
            cth, sth = r1 / rr, r2 / rr
            rot = np.array([[cth, sth], [-sth, cth]])
            Rq[i : i + 2, i:] = rot @ Rq[i : i + 2, i:]
            Rq[i + 1, i] = 0.0
            J[:, i : i + 2] = J[:, i : i + 2] @ rot.T
        R[:, :] = 0.0
        R[: q - 1, : q - 1] = Rq[: q - 1]
        active.pop(k)

    while True:
        s = C.T @ x - b0
        if active:
            s[active] = np.inf
        viol = s < -feas_tol * (1.0 + col_norm * np.max(np.abs(x), initial=0.0))
        if not viol.any():
            break
        p = int(np.argmin(np.where(viol, s, np.inf)))
        n_p = C[:, p]
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                lam = np.zeros(m)
                lam[active] = u
                return x, lam, active, it, "max_iter"
            q = len(active)
            d = J.T @ n_p
            z = J[:, q:] @ d[q:]
            r = sla.solve_triangular(R[:q, :q], d[:q]) if q else np.zeros(0)
            t1, k = np.inf, -1
            pos = np.flatnonzero(r > 1e-14 * max(1.0, float(np.max(np.abs(r), initial=0.0))))
            if pos.size:
                ratios = u_plus[pos] / r[pos]
                j = int(np.argmin(ratios))
                t1, k = float(ratios[j]), int(pos[j])
            zn = float(z @ n_p)
            t2 = np.inf
            if np.linalg.norm(z) > 1e-14 * max(1.0, np.linalg.norm(x)) and zn > 0:
                t2 = -float(n_p @ x - b0[p]) / zn
            t = min(t1, t2)
            if not np.isfinite(t):
                lam = np.zeros(m)
                lam[active] = u
                return x, lam, active, it, "infeasible"
            if not np.isfinite(t2):
                u_plus[:q] -= t * r
                u_plus[q] += t
                u_plus = np.delete(u_plus, k)
                drop(k)
                continue
            x = x + t * z
            u_plus[:q] -= t * r
            u_plus[q] += t
            if t2 <= t1:
                dq = d[q:]
                nrm = float(np.linalg.norm(dq))
                alpha = -math.copysign(nrm, dq[0]) if dq[0] != 0 else -nrm
                v = dq.copy()
                v[0] -= alpha
                vv = float(v @ v)
                if vv > 0:
                    Jq = J[:, q:]
                    J[:, q:] = Jq - np.outer(Jq @ v, v) * (2.0 / vv)
                R[:q, q] = d[:q]
                R[q, q] = alpha
                active.append(p)
                u = u_plus
                break
            u_plus = np.delete(u_plus, k)
            drop(k)
    lam = np.zeros(m)
    lam[active] = np.maximum(u, 0.0)
    return x, lam, active, it, "converged"


# --------------------------------------------------------------------------
# public QP entry points

def solve_qp(problem: QpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Solve a convex QP to KKT tolerance ``tol``.

    ``nonneg`` and ``simplex`` problems run projected gradient followed by a
    primal active-set finish on the support it identifies. ``linear_ineq``
    problems use a dual active-set method, which finishes exactly.

    Raises
    ------
    NotPositiveDefiniteError
        If ``Q`` is not positive definite.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = problem.n
    if n == 0:
        return SolveReport(np.zeros(0), 0.0, 0.0, 0, "converged" if problem.constraint != "simplex" else "infeasible")
    Q, shift, lip = _prepare(problem)
    b = problem.b
    nu = None
    multipliers = None
    info: dict[str, Any] = {}
    if problem.constraint in ("nonneg", "simplex"):
        proj = _project_nonneg if problem.constraint == "nonneg" else project_simplex
        x0 = np.full(n, 1.0 / n)
        pg_cap = min(max_iter, 5000)
        x, pg_it = projected_gradient(Q, b, proj, x0, lip, pg_cap, tol)
        rest = max(1, max_iter - pg_it)
        if problem.constraint == "nonneg":
            x, as_it, status = _active_set_nonneg(Q, b, x, tol, rest)
        else:
            x, as_it, status, nu = _active_set_simplex(Q, b, x, tol, rest)
            info["nu"] = nu
        iterations = pg_it + as_it
        info.update(pg_iterations=pg_it, active_set_iterations=as_it)
        g = Q @ x - b
        multipliers = np.where(x > 0, 0.0, g - (nu or 0.0))
        active = tuple(int(i) for i in np.flatnonzero(x == 0))
    else:
        A, c = problem.A_mat, problem.c_vec
        C = np.hstack([A.T, np.eye(n)])
        b0 = np.concatenate([c, np.zeros(n)])
        x, lam, act, iterations, status = goldfarb_idnani(Q, b, C, b0, max_iter)
        bounds = [j - problem.m for j in act if j >= problem.m]
        x = x.copy()
        x[bounds] = 0.0
        # weights at round-off level belong to the zero pattern
        x[x <= 1e-12 * max(float(np.max(np.abs(x), initial=0.0)), 1e-300)] = 0.0
        multipliers = lam
        info["active_rows"] = tuple(sorted(j for j in act if j < problem.m))
        active = tuple(int(i) for i in np.flatnonzero(x == 0))
    res = kkt_residual(problem, x, multipliers, nu, Q)
    if status == "converged" and res > tol:
        log.warning("solve finished with KKT residual %.3e above tol %.1e", res, tol)
        status = "max_iter"
    return SolveReport(x, problem.objective(x), res, int(iterations), status, active, shift, multipliers, info)


def solve_lcp(M, q, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Solve ``x >= 0, w = M x - q >= 0, x^T w = 0`` for symmetric PD ``M``.

    Murty's least-index principal pivoting, started from ``{q > 0}``; on
    iteration overflow the equivalent nonnegative QP is solved instead.
    Entries outside the final basis are exactly zero.
    """
    problem = QpProblem(M, q, "nonneg")
    M, q = problem.Q, problem.b
    n = len(q)
    _prepare(problem)
    free = q > 0
    scale = max(1.0, float(np.max(np.abs(q), initial=0.0)))
    eps = 1e-13 * scale
    x = np.zeros(n)
    for it in range(1, min(max_iter, 50 * n * n + 50) + 1):
        x = np.zeros(n)
        if free.any():
            x[free] = sla.solve(M[np.ix_(free, free)], q[free], assume_a="sym")
        w = M @ x - q
        bad = (free & (x < -eps)) | (~free & (w < -eps))
        if not bad.any():
            x = np.maximum(x, 0.0)
            w = M @ x - q
            res = kkt_residual(problem, x)
            status = "converged" if res <= tol else "max_iter"
            return SolveReport(x, problem.objective(x), res, it, status,
                               tuple(int(i) for i in np.flatnonzero(x == 0)), 0.0, np.where(x > 0, 0.0, w),
                               {"slack": w, "method": "principal_pivoting"})
        i = int(np.flatnonzero(bad)[0])
        free[i] = not free[i]
    log.info("principal pivoting hit its cap; falling back to the QP")
    rep = solve_qp(problem, tol, max_iter)
    rep.info["slack"] = M @ rep.x - q
    rep.info["method"] = "qp"
    return rep


# --------------------------------------------------------------------------
# linear programming

def solve_lp(c, A_mat, b_vec, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Minimize ``c^T x`` subject to ``A x >= b`` and ``x >= 0``.

    Dense two-phase tableau simplex with Bland's lowest-index rule for both
    entering and leaving variables. The basic solution is recomputed from
    the original data at the end; ``info["duals"]`` holds row multipliers.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A = np.asarray(A_mat, dtype=float).reshape(-1, n) if np.size(A_mat) else np.zeros((0, n))
    b = np.asarray(b_vec, dtype=float).reshape(-1)
    m = A.shape[0]
    if b.size != m:
        raise DimensionError(f"b_vec has length {b.size}, A_mat has {m} rows")
    if n > LP_MAX_SIZE or m > LP_MAX_SIZE:
        raise SizeError(f"dense simplex limited to {LP_MAX_SIZE} variables and rows")
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    eps = 1e-11 * scale
    sign = np.where(b < 0, -1.0, 1.0)
    # columns: x (n), surplus s (m), artificial a (m), rhs
    N = n + 2 * m
    T = np.zeros((m, N + 1))
    T[:, :n] = sign[:, None] * A
    T[:, n : n + m] = -np.diag(sign)
    T[:, n + m : N] = np.eye(m)
    T[:, N] = sign * b
    basis = list(range(n + m, N))
    iterations = 0

    def run(cost, allowed):
        nonlocal iterations
        while True:
            iterations += 1
            if iterations > max_iter:
                return "max_iter"
            z = cost[:N] - cost[basis] @ T[:, :N]
            enter = np.flatnonzero(allowed & (z < -eps * max(1.0, float(np.max(np.abs(cost)))) ))
            if enter.size == 0:
                return "optimal"
            j = int(enter[0])
            col = T[:, j]
            rows = np.flatnonzero(col > eps)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, N] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + eps * max(1.0, abs(best))]
            i = int(min(ties, key=lambda r: basis[r]))
            T[i] /= T[i, j]
            for r in range(T.shape[0]):
                if r != i and T[r, j] != 0.0:
                    T[r] -= T[r, j] * T[i]
            basis[i] = j

    allowed = np.ones(N, dtype=bool)
    cost1 = np.zeros(N)
    cost1[n + m :] = 1.0
    status = run(cost1, allowed)
    if status == "max_iter":
        return SolveReport(np.zeros(n), math.nan, math.inf, iterations, "max_iter")
    if float(cost1[basis] @ T[:, N]) > 1e-9 * scale:
        return SolveReport(np.zeros(n), math.nan, math.inf, iterations, "infeasible")
    # drive zero-level artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n + m:
            cand = np.flatnonzero(np.abs(T[i, : n + m]) > eps)
            if cand.size == 0:
                continue
            j = int(cand[0])
            T[i] /= T[i, j]
            for r in range(m):
                if r != i and T[r, j] != 0.0:
                    T[r] -= T[r, j] * T[i]
            basis[i] = j
        keep.append(i)
    T = T[keep]
    basis = [basis[i] for i in keep]
    allowed[n + m :] = False
    cost2 = np.zeros(N)
    cost2[:n] = c
    status = run(cost2, allowed)
    if status != "optimal":
        return SolveReport(np.zeros(n), -math.inf if status == "unbounded" else math.nan, math.inf, iterations, status)
    # recompute the basic solution from the original (unflipped) rows
    full = np.hstack([A, -np.eye(m)])
    B = full[np.ix_(keep, basis)]
    z = np.zeros(n + m)
    try:
        z[basis] = np.linalg.solve(B, b[keep])
    except np.linalg.LinAlgError:
        z[basis] = T[:, N] * 1.0
    z = np.maximum(z, 0.0)
    x = z[:n]
    duals = np.zeros(m)
    try:
        duals[keep] = np.linalg.solve(B.T, np.concatenate([c, np.zeros(m)])[basis])
    except np.linalg.LinAlgError:
        pass
    res = lp_residual(c, A, b, x, duals)
    status = "converged" if res <= max(tol, 1e-9) else "max_iter"
    return SolveReport(x, float(c @ x), res, iterations, status, tuple(int(i) for i in np.flatnonzero(x == 0)),
                       0.0, duals, {"duals": duals, "basis": tuple(basis)})


def lp_residual(c, A, b, x, y) -> float:
    """Relative optimality residual of an LP primal-dual pair."""
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)), float(np.max(np.abs(c), initial=0.0)))
    slack = A @ x - b
    red = c - A.T @ y
    terms = [
        float(np.max(-slack, initial=0.0)),
        float(np.max(-x, initial=0.0)),
        float(np.max(-y, initial=0.0)),
        float(np.max(-red, initial=0.0)),
        float(np.max(np.abs(y * slack), initial=0.0)),
        float(np.max(np.abs(x * red), initial=0.0)),
    ]
    return max(terms) / scale


# --------------------------------------------------------------------------
# brute-force oracles

def _batched_solve(S, rhs):
    """Solve a stack of square systems; singular members fall back to pinv.

    Returns the solutions and a mask of members whose residual is at round-off
    level (inconsistent singular systems are rejected).
    """
    if S.shape[1] == 0:
        return np.zeros(rhs.shape), np.ones(len(S), dtype=bool)
    try:
        out = np.linalg.solve(S, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.einsum("bij,bj->bi", np.linalg.pinv(S), rhs)
    resid = np.abs(np.einsum("bij,bj->bi", S, out) - rhs).max(axis=1)
    size = 1.0 + np.abs(S).max(axis=(1, 2)) * np.abs(out).max(axis=1) + np.abs(rhs).max(axis=1)
    ok = np.all(np.isfinite(out), axis=1) & (resid <= 1e-9 * size)
    return out, ok


def _subsets(n, k):
    combos = list(itertools.combinations(range(n), k))
    return np.array(combos, dtype=int).reshape(len(combos), k)


def _scatter(n, F, vals):
    X = np.zeros((len(F), n))
    if F.shape[1]:
        np.put_along_axis(X, F, vals, axis=1)
    return X


def brute_force_oracle(problem: QpProblem, tol: float = 1e-10) -> SolveReport:
    """Global optimum by enumerating every active set.

    Each candidate free set (and, for ``linear_ineq``, each set of tight
    rows no larger than it) yields an equality-constrained KKT system that is
    solved directly; feasible candidates are compared by objective and ties
    go to the first candidate in enumeration order (smallest free set, then
    lexicographic).

    Raises
    ------
    SizeError
        If ``n > 12`` or, for ``linear_ineq``, ``n + m > 16``.
    """
    n = problem.n
    if n > ORACLE_MAX_DIM:
        raise SizeError(f"oracle enumeration limited to {ORACLE_MAX_DIM} variables, got {n}")
    if problem.constraint == "linear_ineq" and n + problem.m > ORACLE_MAX_TOTAL:
        raise SizeError(f"oracle enumeration limited to n + m <= {ORACLE_MAX_TOTAL}, got {n + problem.m}")
    Q, b = problem.Q, problem.b
    ftol = tol * max(1.0, float(np.max(np.abs(b), initial=0.0)))
    pool: list[np.ndarray] = []
    count = 0
    if problem.constraint == "nonneg":
        for k in range(0, n + 1):
            F = _subsets(n, k)
            sol, ok = _batched_solve(Q[F[:, :, None], F[:, None, :]], b[F])
            count += len(F)
            ok &= np.all(sol >= -ftol, axis=1)
            pool.append(_scatter(n, F[ok], np.maximum(sol[ok], 0.0)))
    elif problem.constraint == "simplex":
        for k in range(1, n + 1):
            F = _subsets(n, k)
            S = np.zeros((len(F), k + 1, k + 1))
            S[:, :k, :k] = Q[F[:, :, None], F[:, None, :]]
            S[:, :k, k] = -1.0
            S[:, k, :k] = 1.0
            rhs = np.concatenate([b[F], np.ones((len(F), 1))], axis=1)
            sol, ok = _batched_solve(S, rhs)
            count += len(F)
            ok &= np.all(sol[:, :k] >= -ftol, axis=1)
            X = _scatter(n, F[ok], np.maximum(sol[ok, :k], 0.0))
            pool.append(X / X.sum(axis=1, keepdims=True) if len(X) else X)
    else:
        A, c = problem.A_mat, problem.c_vec
        m = problem.m
        ctol = tol * max(1.0, float(np.max(np.abs(c), initial=0.0)))
        for f in range(0, n + 1):
            F = _subsets(n, f)
            for t in range(0, min(f, m) + 1):
                T = _subsets(m, t)
                fi = np.repeat(np.arange(len(F)), len(T))
                ti = np.tile(np.arange(len(T)), len(F))
                FF, TT = F[fi], T[ti]
                S = np.zeros((len(FF), f + t, f + t))
                S[:, :f, :f] = Q[FF[:, :, None], FF[:, None, :]]
                AT = A[TT[:, :, None], FF[:, None, :]]
                S[:, :f, f:] = -np.transpose(AT, (0, 2, 1))
                S[:, f:, :f] = AT
                rhs = np.concatenate([b[FF], c[TT]], axis=1)
                sol, ok = _batched_solve(S, rhs)
                count += len(FF)
                ok &= np.all(sol[:, :f] >= -ftol, axis=1)
                X = _scatter(n, FF[ok], np.maximum(sol[ok, :f], 0.0))
                if len(X):
                    X = X[np.all(X @ A.T - c >= -ctol, axis=1)]
                pool.append(X)
    X = np.concatenate(pool, axis=0) if pool else np.zeros((0, n))
    if len(X) == 0:
        return SolveReport(np.zeros(n), math.nan, math.inf, count, "infeasible")
    objs = 0.5 * np.einsum("bi,ij,bj->b", X, Q, X) - X @ b
    best = objs.min()
    j = int(np.flatnonzero(objs <= best + 1e-13 * max(1.0, abs(best)))[0])
    x = X[j]
    nu = None
    if problem.constraint == "simplex":
        nu = float(np.mean((Q @ x - b)[x > 0]))
    mult = _ineq_multipliers(problem, x) if problem.constraint == "linear_ineq" else None
    res = kkt_residual(problem, x, mult, nu)
    return SolveReport(x, problem.objective(x), res, count, "converged",
                       tuple(int(i) for i in np.flatnonzero(x == 0)), 0.0, mult, {"candidates": len(X)})


def _ineq_multipliers(problem, x, tol=1e-9):
    """Nonnegative least-squares multipliers for the tight constraints at ``x``."""
    from scipy.optimize import nnls

    A, c, n, m = problem.A_mat, problem.c_vec, problem.n, problem.m
    g = problem.Q @ x - problem.b
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    tight_rows = np.flatnonzero(A @ x - c <= tol * scale)
    tight_bounds = np.flatnonzero(x <= 0)
    cols = np.hstack([A[tight_rows].T, np.eye(n)[:, tight_bounds]])
    lam = np.zeros(m + n)
    if cols.shape[1]:
        sol, _ = nnls(cols, g)
        lam[tight_rows] = sol[: tight_rows.size]
        lam[m + tight_bounds] = sol[tight_rows.size :]
    return lam


def brute_force_lp(c, A_mat, b_vec, tol: float = 1e-10) -> SolveReport:
    """LP optimum by enumerating basic solutions and extreme rays."""
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A = np.asarray(A_mat, dtype=float).reshape(-1, n) if np.size(A_mat) else np.zeros((0, n))
    b = np.asarray(b_vec, dtype=float).reshape(-1)
    m = A.shape[0]
    if n > ORACLE_MAX_DIM or n + m > ORACLE_MAX_TOTAL:
        raise SizeError(f"LP enumeration limited to n <= {ORACLE_MAX_DIM} and n + m <= {ORACLE_MAX_TOTAL}")
    G = np.vstack([A, np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    rows = _subsets(m + n, n)
    sol, ok = _batched_solve(G[rows], h[rows])
    feas = ok & np.all(sol @ G.T - h >= -tol * scale, axis=1) if len(rows) else np.zeros(0, dtype=bool)
    if not feas.any():
        return SolveReport(np.zeros(n), math.nan, math.inf, len(rows), "infeasible")
    # recession directions: vertices of {d >= 0, A d >= 0, sum d = 1}
    if n > 1:
        rrows = _subsets(m + n, n - 1)
        S = np.concatenate([G[rrows], np.ones((len(rrows), 1, n))], axis=1)
        rhs = np.zeros((len(rrows), n))
        rhs[:, -1] = 1.0
        dsol, dok = _batched_solve(S, rhs)
        dfeas = dok & np.all(dsol @ G.T >= -tol, axis=1)
        if dfeas.any() and float((dsol[dfeas] @ c).min()) < -tol * max(1.0, float(np.max(np.abs(c)))):
            return SolveReport(np.zeros(n), -math.inf, math.inf, len(rows), "unbounded")
    elif np.all(A[:, 0] >= 0) and c[0] < 0:
        return SolveReport(np.zeros(n), -math.inf, math.inf, len(rows), "unbounded")
    vals = sol[feas] @ c
    j = int(np.argmin(vals))
    x = np.maximum(sol[feas][j], 0.0)
    return SolveReport(x, float(c @ x), 0.0, len(rows), "converged", tuple(int(i) for i in np.flatnonzero(x == 0)))
