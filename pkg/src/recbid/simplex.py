"""Bounded-variable primal simplex for dense LPs.

Self-contained two-phase solver used by the exact reference oracle, so its
results never depend on a third-party optimizer. Variables carry finite
lower bounds (upper bounds may be infinite); rows may be <=, = or >=.
Pricing is Dantzig by default and falls back to Bland's rule when the
objective stalls, which restores the termination guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RC_TOL = 1e-9  # reduced-cost tolerance
FEAS_TOL = 1e-9
REFACTOR_EVERY = 64
STALL_LIMIT = 200

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float | None
    iterations: int = 0
    reduced_costs: np.ndarray | None = None  # structural block, maximize sense


class _Tableau:
    """Revised simplex state over [structurals | slacks | artificials].

    Slack column i is +e_i; artificial column i is ``art_sign[i] * e_i``.
    Only the structural block is stored as a matrix.
    """

    def __init__(self, A, b, lb, ub, art_sign):
        self.A = A  # m x n_struct
        self.b = b
        self.lb = lb
        self.ub = ub
        self.art_sign = art_sign
        self.m, self.ns = A.shape
        self.n = self.ns + 2 * self.m
        self.status = np.full(self.n, AT_LOWER, dtype=np.int8)
        self.x = lb.copy()
        self.basis = np.empty(self.m, dtype=int)
        self.binv = np.empty((self.m, self.m))
        self.pivots = 0

    def column(self, j: int) -> np.ndarray:
        if j < self.ns:
            return self.A[:, j]
        col = np.zeros(self.m)
        if j < self.ns + self.m:
            col[j - self.ns] = 1.0
        else:
            i = j - self.ns - self.m
            col[i] = self.art_sign[i]
        return col

    def set_basis(self, basis):
        self.basis = np.array(basis, dtype=int)  # own copy: pivots mutate it
        self.status[self.basis] = BASIC
        self.refactor()

    def refactor(self):
        B = np.column_stack([self.column(j) for j in self.basis])
        self.binv = np.linalg.solve(B, np.eye(self.m))
        self.resync()

    def resync(self):
        rhs = self.b.copy()
        ns, m = self.ns, self.m
        struct_nb = np.flatnonzero(self.status[:ns] != BASIC)
        rhs -= self.A[:, struct_nb] @ self.x[struct_nb]
        for j in range(ns, self.n):
            if self.status[j] != BASIC and self.x[j] != 0.0:
                rhs -= self.column(j) * self.x[j]
        self.x[self.basis] = self.binv @ rhs

    def reduced_costs(self, c):
        y = c[self.basis] @ self.binv
        rc = np.empty(self.n)
        rc[: self.ns] = c[: self.ns] - y @ self.A
        rc[self.ns : self.ns + self.m] = c[self.ns : self.ns + self.m] - y
        rc[self.ns + self.m :] = c[self.ns + self.m :] - y * self.art_sign
        return rc

    def direction(self, j: int) -> np.ndarray:
        if j < self.ns:
            return self.binv @ self.A[:, j]
        if j < self.ns + self.m:
            return self.binv[:, j - self.ns].copy()
        i = j - self.ns - self.m
        return self.binv[:, i] * self.art_sign[i]

    def pivot(self, entering, leave_pos, direction):
        piv = direction[leave_pos]
        eta = -direction / piv
        eta[leave_pos] = 1.0 / piv - 1.0
        self.binv += np.outer(eta, self.binv[leave_pos])
        self.basis[leave_pos] = entering
        self.pivots += 1
        if self.pivots % REFACTOR_EVERY == 0:
            self.refactor()


def _maximize(tab: _Tableau, c: np.ndarray, max_iter: int):
    """Run primal iterations on a feasible tableau; returns (status, iters, rc)."""
    fixed = tab.ub - tab.lb <= FEAS_TOL
    best = -np.inf
    stalled = 0
    bland = False
    for it in range(max_iter):
        rc = tab.reduced_costs(c)
        improving_low = (tab.status == AT_LOWER) & ~fixed & (rc > RC_TOL)
        improving_up = (tab.status == AT_UPPER) & ~fixed & (rc < -RC_TOL)
        candidates = np.flatnonzero(improving_low | improving_up)
        if candidates.size == 0:
            return "optimal", it, rc
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(rc[candidates]))])
        sigma = 1.0 if tab.status[j] == AT_LOWER else -1.0

        d = tab.direction(j)
        # Largest step before a basic variable or the entering variable
        # itself reaches a bound.
        xb = tab.x[tab.basis]
        lo_b = tab.lb[tab.basis]
        up_b = tab.ub[tab.basis]
        step = np.full(tab.m, np.inf)
        pos = sigma * d > FEAS_TOL
        neg = sigma * d < -FEAS_TOL
        step[pos] = (xb[pos] - lo_b[pos]) / (sigma * d[pos])
        step[neg] = (up_b[neg] - xb[neg]) / (-sigma * d[neg])
        step_min = step.min(initial=np.inf)
        own = tab.ub[j] - tab.lb[j]
        t = min(step_min, own)
        if not np.isfinite(t):
            return "unbounded", it, rc

        if own <= step_min:
            # bound flip, basis unchanged
            tab.x[tab.basis] = xb - sigma * own * d
            tab.x[j] = tab.ub[j] if tab.status[j] == AT_LOWER else tab.lb[j]
            tab.status[j] = AT_UPPER if tab.status[j] == AT_LOWER else AT_LOWER
        else:
            hits = np.flatnonzero(step <= t + FEAS_TOL)
            if bland:
                leave_pos = int(hits[np.argmin(tab.basis[hits])])
            else:
                # most stable pivot among the ties
                leave_pos = int(hits[np.argmax(np.abs(d[hits]))])
            t = max(step[leave_pos], 0.0)
            leaving = tab.basis[leave_pos]
            tab.x[tab.basis] = xb - sigma * t * d
            tab.x[j] = tab.x[j] + sigma * t
            tab.x[leaving] = tab.lb[leaving] if sigma * d[leave_pos] > 0 else tab.ub[leaving]
            tab.status[leaving] = AT_LOWER if sigma * d[leave_pos] > 0 else AT_UPPER
            tab.status[j] = BASIC
            # x is maintained incrementally; refactor() resyncs periodically
            tab.pivot(j, leave_pos, d)

        obj = float(c @ tab.x)
        if obj > best + 1e-12:
            best = obj
            stalled = 0
        else:
            stalled += 1
            if stalled > STALL_LIMIT:
                bland = True
    raise RuntimeError(f"simplex did not terminate within {max_iter} iterations")


def solve_lp(
    c,
    A,
    senses,
    b,
    lb,
    ub,
    maximize: bool = True,
    max_iter: int = 50000,
) -> LpResult:
    """Solve max (or min) c'x subject to row senses and variable bounds.

    ``senses`` holds one of "<=", "=", ">=" per row. Lower bounds must be
    finite. Returns status "optimal" with the optimizer, or "infeasible" /
    "unbounded".
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be a 2-D array")
    m, n = A.shape
    if not np.all(np.isfinite(lb)):
        raise ValueError("all lower bounds must be finite")
    if np.any(lb > ub + FEAS_TOL):
        return LpResult("infeasible", None, None)
    if not maximize:
        res = solve_lp(-c, A, senses, b, lb, ub, maximize=True, max_iter=max_iter)
        if res.objective is not None:
            res.objective = -res.objective
        if res.reduced_costs is not None:
            res.reduced_costs = -res.reduced_costs
        return res
    if m == 0:
        # Row-free program: every variable sits at its favorable bound.
        x = np.where(c > 0, ub, lb)
        x[c == 0] = lb[c == 0]
        if not np.all(np.isfinite(x)):
            return LpResult("unbounded", None, None)
        return LpResult("optimal", x, float(c @ x), 0, reduced_costs=c.copy())

    # Normalize to <= / = rows; each row gets a slack (fixed at 0 for =).
    A = A.copy()
    b = b.copy()
    for i, sense in enumerate(senses):
        if sense == ">=":
            A[i] *= -1.0
            b[i] *= -1.0
        elif sense not in ("<=", "="):
            raise ValueError(f"row {i}: unknown sense {sense!r}")
    slack_ub = np.array([0.0 if s == "=" else np.inf for s in senses])

    resid = b - A @ lb
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    tab = _Tableau(
        A,
        b,
        np.concatenate([lb, np.zeros(2 * m)]),
        np.concatenate([ub, slack_ub, np.full(m, np.inf)]),
        art_sign,
    )
    # Crash basis: a <= row whose start residual is non-negative can use its
    # slack directly; other rows start on an artificial.
    basis = np.empty(m, dtype=int)
    need_art = np.zeros(m, dtype=bool)
    for i in range(m):
        if slack_ub[i] > 0 and resid[i] >= 0:
            basis[i] = n + i
        else:
            basis[i] = n + m + i
            need_art[i] = True
    tab.set_basis(basis)

    it1 = 0
    if need_art.any():
        c_phase1 = np.zeros(n + 2 * m)
        c_phase1[n + m :] = -1.0
        status, it1, _rc1 = _maximize(tab, c_phase1, max_iter)
        art_sum = float(tab.x[n + m :].sum())
        if status != "optimal" or art_sum > 1e-7 * (1.0 + abs(b).max(initial=0.0)):
            return LpResult("infeasible", None, None, it1)

        # Lock artificials at zero; pivot basic ones out where possible.
        tab.ub[n + m :] = 0.0
        for i in range(m):
            if tab.basis[i] < n + m:
                continue
            row = tab.binv[i] @ tab.A
            slack_row = tab.binv[i]
            usable = [
                int(jj)
                for jj in np.flatnonzero(np.abs(row) > 1e-9)
                if tab.status[jj] != BASIC and tab.ub[jj] - tab.lb[jj] > FEAS_TOL
            ]
            if not usable:
                usable = [
                    int(jj) + n
                    for jj in np.flatnonzero(np.abs(slack_row) > 1e-9)
                    if tab.status[jj + n] != BASIC and tab.ub[jj + n] - tab.lb[jj + n] > FEAS_TOL
                ]
            if usable:
                j = usable[0]
                d = tab.direction(j)
                leaving = tab.basis[i]
                tab.x[leaving] = 0.0
                tab.status[leaving] = AT_LOWER
                tab.status[j] = BASIC
                tab.pivot(j, i, d)
                tab.resync()
    else:
        tab.ub[n + m :] = 0.0

    c_phase2 = np.concatenate([c, np.zeros(2 * m)])
    status, it2, rc2 = _maximize(tab, c_phase2, max_iter)
    if status == "unbounded":
        return LpResult("unbounded", None, None, it1 + it2)
    x = tab.x[:n].copy()
    return LpResult("optimal", x, float(c @ x), it1 + it2, reduced_costs=rc2[:n].copy())
