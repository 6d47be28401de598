"""Linear programming by a homogeneous self-dual interior point method.

Problems are stated as

    minimize c @ x  subject to  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi

and converted to standard form (equalities, nonnegative variables) before the
solve. The iteration is the Mehrotra predictor-corrector applied to the
homogeneous embedding, which also detects infeasible and unbounded problems
without a phase-one step. Normal equations are assembled sparse and factored
with a dense Cholesky, or a sparse LU once the system is too large for dense storage.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


def _as_csr(a, n):
    if a is None:
        return sp.csr_matrix((0, n))
    return sp.csr_matrix(a, dtype=float)


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    A_eq: sp.csr_matrix | None = None
    b_eq: np.ndarray | None = None
    A_ub: sp.csr_matrix | None = None
    b_ub: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    # optional label per inequality / equality row, used by feasibility reports
    ub_groups: list | None = None
    eq_groups: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = _as_csr(self.A_eq, n)
        self.A_ub = _as_csr(self.A_ub, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.broadcast_to(
            np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.broadcast_to(
            np.asarray(self.hi, dtype=float), (n,)).copy()
        if self.A_eq.shape[1] != n or self.A_ub.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if self.A_eq.shape[0] != self.b_eq.size or self.A_ub.shape[0] != self.b_ub.size:
            raise ValueError("right-hand sides must have one entry per constraint row")
        for name in ("c", "b_eq", "b_ub"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} must be finite")
        if not (np.isfinite(self.A_eq.data).all() and np.isfinite(self.A_ub.data).all()):
            raise ValueError("constraint matrices must be finite")
        if np.isnan(self.lo).any() or np.isnan(self.hi).any():
            raise ValueError("bounds must not be NaN")
        if (self.lo == np.inf).any() or (self.hi == -np.inf).any():
            raise ValueError("lower bounds must be < inf and upper bounds > -inf")
        if self.ub_groups is not None and len(self.ub_groups) != self.b_ub.size:
            raise ValueError("one group label per inequality row")
        if self.eq_groups is not None and len(self.eq_groups) != self.b_eq.size:
            raise ValueError("one group label per equality row")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    x: np.ndarray | None
    objective_value: float
    status: str
    iterations: int = 0
    tol_used: float = np.nan
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class FeasibilityReport:
    eq: float
    ineq: float
    bounds: float
    by_group: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.eq, self.ineq, self.bounds)

    def feasible(self, tol: float) -> bool:
        return self.max_violation <= tol


def check_feasibility(lp: LinearProgram, x, tol: float = 1e-7) -> FeasibilityReport:
    """Largest violation per constraint class (and per row group, if labelled)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (lp.n,):
        raise ValueError(f"x must have length {lp.n}")
    eq_res = np.abs(lp.A_eq @ x - lp.b_eq)
    ub_res = np.maximum(lp.A_ub @ x - lp.b_ub, 0.0)
    bnd = np.maximum(np.maximum(lp.lo - x, x - lp.hi), 0.0)
    groups = {}
    for labels, res in ((lp.eq_groups, eq_res), (lp.ub_groups, ub_res)):
        if labels is None:
            continue
        for lab, r in zip(labels, res):
            groups[lab] = max(groups.get(lab, 0.0), float(r))
    return FeasibilityReport(float(eq_res.max(initial=0.0)), float(ub_res.max(initial=0.0)),
                             float(bnd.max(initial=0.0)), groups)


# -- standard form ---------------------------------------------------------------

@dataclass
class _Standard:
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    T: sp.csr_matrix      # original x = T @ x_std + x0
    x0: np.ndarray
    c0: float
    row_scale: np.ndarray
    col_scale: np.ndarray


def _to_standard(lp: LinearProgram) -> _Standard | str:
    n = lp.n
    lo, hi = lp.lo, lp.hi
    if (lo > hi).any():
        return INFEASIBLE
    fixed = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    has_lo = np.isfinite(lo) & ~fixed
    has_hi = np.isfinite(hi) & ~fixed
    x0 = np.where(fixed, lo, 0.0)
    # columns of T: one per kept variable, plus a negative part for free vars
    t_rows, t_cols, t_vals = [], [], []
    col = 0
    box_cols, box_width = [], []
    for j in range(n):
        if fixed[j]:
            continue
        if has_lo[j]:
            x0[j] = lo[j]
            t_rows.append(j); t_cols.append(col); t_vals.append(1.0)
            if has_hi[j]:
                box_cols.append(col); box_width.append(hi[j] - lo[j])
            col += 1
        elif has_hi[j]:
            x0[j] = hi[j]
            t_rows.append(j); t_cols.append(col); t_vals.append(-1.0)
            col += 1
        else:
            t_rows += [j, j]; t_cols += [col, col + 1]; t_vals += [1.0, -1.0]
            col += 2
    n_var = col
    T = sp.csr_matrix((t_vals, (t_rows, t_cols)), shape=(n, n_var))
    A_eq = lp.A_eq @ T
    A_ub = lp.A_ub @ T
    b_eq = lp.b_eq - lp.A_eq @ x0
    b_ub = lp.b_ub - lp.A_ub @ x0
    m_ub, m_box = A_ub.shape[0], len(box_cols)
    # slacks for inequalities, then for upper bounds of boxed variables
    blocks = [
        sp.hstack([A_eq, sp.csr_matrix((A_eq.shape[0], m_ub + m_box))]),
        sp.hstack([A_ub, sp.identity(m_ub, format="csr"), sp.csr_matrix((m_ub, m_box))]),
        sp.hstack([sp.csr_matrix((np.ones(m_box), (np.arange(m_box), box_cols)), shape=(m_box, n_var)),
                   sp.csr_matrix((m_box, m_ub)), sp.identity(m_box, format="csr")]),
    ]
    A = sp.vstack(blocks, format="csr")
    b = np.concatenate([b_eq, b_ub, np.asarray(box_width, dtype=float)])
    c = np.concatenate([T.T @ lp.c, np.zeros(m_ub + m_box)])
    c0 = float(lp.c @ x0)
    T_full = sp.hstack([T, sp.csr_matrix((n, m_ub + m_box))], format="csr")
    A.eliminate_zeros()
    # empty rows are either redundant or contradictory
    nnz_row = np.diff(A.indptr)
    empty = nnz_row == 0
    if empty.any():
        if (np.abs(b[empty]) > 1e-9).any():
            return INFEASIBLE
        A = A[~empty]
        b = b[~empty]
    A, b, c, r, s = _equilibrate(A, b, c)
    return _Standard(A, b, c, T_full, x0, c0, r, s)


def _equilibrate(A: sp.csr_matrix, b, c, passes: int = 10):
    """Ruiz scaling: alternately divide rows and columns by sqrt of their max."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    B = A.copy().tocsr()
    for _ in range(passes):
        if B.nnz == 0:
            break
        absB = abs(B)
        rmax = np.asarray(absB.max(axis=1).todense()).ravel()
        cmax = np.asarray(absB.max(axis=0).todense()).ravel()
        rf = 1.0 / np.sqrt(np.where(rmax > 0, rmax, 1.0))
        cf = 1.0 / np.sqrt(np.where(cmax > 0, cmax, 1.0))
        B = sp.diags(rf) @ B @ sp.diags(cf)
        r *= rf
        s *= cf
        if np.abs(rmax - 1).max(initial=0) < 1e-3 and np.abs(cmax - 1).max(initial=0) < 1e-3:
            break
    return B.tocsr(), b * r, c * s, r, s


# -- interior point core ------------------------------------------------------------

class _NormalSolver:
    """Factor M = A diag(d) A^T once per iteration and solve repeatedly."""

    def __init__(self, A: sp.csr_matrix, d: np.ndarray, dense: bool):
        M = (A @ sp.diags(d) @ A.T).tocsc()
        m = M.shape[0]
        self._lu = self._chol = None
        self._M = M
        if dense:
            Md = M.toarray()
            try:
                self._chol = la.cho_factor(Md, lower=False, check_finite=False)
                return
            except la.LinAlgError:
                Md[np.diag_indices(m)] += 1e-12 * max(1.0, np.abs(np.diag(Md)).max())
                try:
                    self._chol = la.cho_factor(Md, lower=False, check_finite=False)
                    return
                except la.LinAlgError:
                    self._dense = Md
                    return
        else:
            reg = 1e-14 * max(1.0, abs(M.diagonal()).max())
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    self._lu = spla.splu(M + reg * sp.identity(m, format="csc"),
                                         permc_spec="MMD_AT_PLUS_A",
                                         options={"SymmetricMode": True})
                    return
                except RuntimeError:
                    self._dense = M.toarray()

    def solve(self, r):
        if self._chol is not None:
            return la.cho_solve(self._chol, r, check_finite=False)
        if self._lu is not None:
            return self._lu.solve(r)
        return np.linalg.lstsq(self._dense, r, rcond=None)[0]


def _step_length(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _hsd(A: sp.csr_matrix, b, c, tol: float, max_iter: int, dense: bool):
    m, n = A.shape
    x = np.ones(n)
    z = np.ones(n)
    y = np.zeros(m)
    tau = kappa = 1.0
    AT = A.T.tocsr()
    bnorm = max(1.0, np.linalg.norm(b))
    cnorm = max(1.0, np.linalg.norm(c))

    def residuals():
        rp = b * tau - A @ x
        rd = c * tau - AT @ y - z
        rg = c @ x - b @ y + kappa
        mu = (x @ z + tau * kappa) / (n + 1)
        return rp, rd, rg, mu

    rp, rd, rg, mu = residuals()
    rp0 = max(np.linalg.norm(rp), 1.0)
    rd0 = max(np.linalg.norm(rd), 1.0)
    rg0 = max(abs(rg), 1.0)
    mu0 = mu
    status = ITERATION_LIMIT
    it = 0
    alpha0 = 0.99995
    for it in range(1, max_iter + 1):
        d = x / z
        solver = _NormalSolver(A, d, dense)
        # directions shared by predictor and corrector
        p = solver.solve(A @ (d * c) + b)
        u = d * (AT @ p - c)
        denom_base = b @ p - c @ u + kappa / tau

        def direction(eta, rxs, rtk):
            q_rhs = eta * rp - A @ (d * (rxs / x - eta * rd))
            q = solver.solve(q_rhs)
            v = d * (AT @ q + rxs / x - eta * rd)
            dtau = (eta * rg + rtk / tau - b @ q + c @ v) / denom_base
            dx = u * dtau + v
            dy = p * dtau + q
            dz = (rxs - z * dx) / x
            dkappa = (rtk - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        def max_alpha(dx, dz, dtau, dkappa):
            a = min(_step_length(x, dx), _step_length(z, dz),
                    _step_length(np.array([tau]), np.array([dtau])),
                    _step_length(np.array([kappa]), np.array([dkappa])))
            return a

        # predictor (affine scaling)
        dx, dy, dz, dtau, dkappa = direction(1.0, -x * z, -tau * kappa)
        a_aff = max_alpha(dx, dz, dtau, dkappa)
        gamma = (1 - a_aff) ** 2 * min(0.1, 1 - a_aff)
        eta = 1 - gamma
        # corrector
        rxs = gamma * mu - x * z - dx * dz
        rtk = gamma * mu - tau * kappa - dtau * dkappa
        dx, dy, dz, dtau, dkappa = direction(eta, rxs, rtk)
        alpha = min(1.0, alpha0 * max_alpha(dx, dz, dtau, dkappa))
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.isfinite(x).all() and np.isfinite(y).all() and np.isfinite(tau)):
            status = ITERATION_LIMIT
            break

        rp, rd, rg, mu = residuals()
        rho_p = np.linalg.norm(b - A @ x / tau) / bnorm
        rho_d = np.linalg.norm(c - AT @ y / tau - z / tau) / cnorm
        rho_a = abs(c @ x - b @ y) / (tau + abs(b @ y))
        if rho_p <= tol and rho_d <= tol and rho_a <= tol:
            status = OPTIMAL
            break
        # tau -> 0 with vanishing residuals certifies infeasibility
        small_res = (np.linalg.norm(rp) / rp0 < tol and np.linalg.norm(rd) / rd0 < tol
                     and abs(rg) / rg0 < tol)
        inf1 = small_res and tau < tol * max(1.0, kappa)
        inf2 = mu / mu0 < tol and tau < tol * min(1.0, kappa)
        if inf1 or inf2:
            status = INFEASIBLE if b @ y > tol else UNBOUNDED
            break
    return status, x / max(tau, 1e-300), it, (x, y, z, tau, kappa)


def solve_lp(lp: LinearProgram, tol: float = 1e-8, max_iter: int = 200,
             relax_to: float = 1e-6, dense_limit: int = 5000) -> LpSolution:
    """Solve ``lp``; on an iteration limit, accept a solution meeting ``relax_to``."""
    std = _to_standard(lp)
    if isinstance(std, str):
        return LpSolution(None, np.nan, std, 0, tol, "detected during presolve")
    m, n = std.A.shape
    dense = m <= dense_limit
    if n == 0:
        x_std = np.zeros(0)
        status, it = OPTIMAL, 0
        if (np.abs(std.b) > tol).any():
            status = INFEASIBLE
    else:
        status, x_std, it, state = _hsd(std.A, std.b, std.c, tol, max_iter, dense)
        if status == ITERATION_LIMIT and relax_to > tol:
            x_, y_, z_, tau_, _ = state
            xs = x_ / tau_
            rho_p = np.linalg.norm(std.b - std.A @ xs) / max(1.0, np.linalg.norm(std.b))
            rho_d = np.linalg.norm(std.c - std.A.T @ (y_ / tau_) - z_ / tau_) / max(
                1.0, np.linalg.norm(std.c))
            rho_a = abs(std.c @ x_ - std.b @ y_) / (tau_ + abs(std.b @ y_))
            if max(rho_p, rho_d, rho_a) <= relax_to:
                status, x_std, tol = OPTIMAL, xs, relax_to
    if status != OPTIMAL:
        return LpSolution(None, np.nan, status, it, tol)
    x = std.T @ (x_std * std.col_scale) + std.x0
    x = np.clip(x, lp.lo, lp.hi)
    return LpSolution(x, float(lp.c @ x), OPTIMAL, it, tol)


def dump_lp(lp: LinearProgram, path) -> None:
    """Write ``lp`` as plain text.

    Format: a header line ``minimize n_vars n_eq n_ub``, one ``c`` line with the
    objective coefficients, one ``bounds j lo hi`` line per variable, then one
    line per constraint as ``eq|ub  rhs  j:coef j:coef ...``.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"minimize {lp.n} {lp.b_eq.size} {lp.b_ub.size}\n")
        fh.write("c " + " ".join(repr(float(v)) for v in lp.c) + "\n")
        for j in range(lp.n):
            fh.write(f"bounds {j} {float(lp.lo[j])!r} {float(lp.hi[j])!r}\n")
        for kind, A, rhs in (("eq", lp.A_eq, lp.b_eq), ("ub", lp.A_ub, lp.b_ub)):
            for i in range(A.shape[0]):
                row = A.getrow(i)
                terms = " ".join(f"{j}:{float(v)!r}" for j, v in zip(row.indices, row.data))
                fh.write(f"{kind} {float(rhs[i])!r} {terms}\n")


def load_lp(path) -> LinearProgram:
    """Read the format written by :func:`dump_lp`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _, n, m_eq, m_ub = lines[0].split()
    n, m_eq, m_ub = int(n), int(m_eq), int(m_ub)
    c = np.array([float(v) for v in lines[1].split()[1:]])
    lo = np.empty(n)
    hi = np.empty(n)
    for line in lines[2:2 + n]:
        _, j, a, b = line.split()
        lo[int(j)], hi[int(j)] = float(a), float(b)
    rows = {"eq": ([], [], [], []), "ub": ([], [], [], [])}
    for line in lines[2 + n:]:
        kind, rhs, *terms = line.split()
        r, cidx, vals, b = rows[kind]
        i = len(b)
        b.append(float(rhs))
        for t in terms:
            j, v = t.split(":")
            r.append(i); cidx.append(int(j)); vals.append(float(v))
    mats = {}
    for kind, m in (("eq", m_eq), ("ub", m_ub)):
        r, cidx, vals, b = rows[kind]
        mats[kind] = (sp.csr_matrix((vals, (r, cidx)), shape=(m, n)), np.array(b))
    return LinearProgram(c, mats["eq"][0], mats["eq"][1], mats["ub"][0], mats["ub"][1], lo, hi)
