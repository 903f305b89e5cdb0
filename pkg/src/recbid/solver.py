"""Solving MilpInstances: exchange files, external subprocess, exact oracle.

Two routes exist on purpose. The external route writes the instance in LP
format and shells out to whatever command ``REC_SOLVER_CMD`` names (by
default a bundled HiGHS-based runner), so production-scale instances go to
a real MILP solver. The reference route is a self-contained exact search:
depth-first enumeration of the binary variables with bound propagation and
LP-relaxation pruning, each relaxation solved by the in-package simplex.
It exists to cross-check the external solver on desk-scale instances.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .milp import MilpInstance, Solution
from .simplex import solve_lp

DEFAULT_SOLVER_CMD = (
    "{python} -m recbid.highs_runner {lp} {sol} --time-limit {time_limit} --gap {gap}"
)
SOLVER_CMD_ENV = "REC_SOLVER_CMD"

BND_TOL = 1e-9


@dataclass
class SolveRequest:
    instance: MilpInstance
    time_limit_s: float = 300.0
    rel_gap: float = 1e-6
    backend: str = "external"  # external | reference

    def __post_init__(self):
        if self.time_limit_s <= 0:
            raise ValueError(f"time_limit_s must be > 0, got {self.time_limit_s}")
        if self.rel_gap < 0:
            raise ValueError(f"rel_gap must be >= 0, got {self.rel_gap}")
        if self.backend not in ("external", "reference"):
            raise ValueError(f"unknown backend {self.backend!r}")


def _fmt(x: float) -> str:
    return repr(float(x) + 0.0)


def emit_exchange(inst: MilpInstance) -> str:
    """Deterministic LP-format text of an instance.

    Variables and rows appear in declaration order; floats use shortest
    round-trip formatting, so equal instances emit byte-identical text.
    """
    for i, name in enumerate(inst.names):
        if not name:
            raise ValueError(f"variable {i} has no name")
    out = ["Maximize"]
    terms = []
    for vid in sorted(inst.objective):
        coef = inst.objective[vid]
        if coef == 0.0:
            continue
        sign = "+" if coef >= 0 else "-"
        terms.append(f"{sign} {_fmt(abs(coef))} {inst.names[vid]}")
    out.append(" obj: " + " ".join(terms) if terms else " obj:")
    out.append("Subject To")
    for name, row_terms, sense, rhs in inst.rows:
        parts = []
        for vid, coef in row_terms:
            sign = "+" if coef >= 0 else "-"
            parts.append(f"{sign} {_fmt(abs(coef))} {inst.names[vid]}")
        op = {"<=": "<=", ">=": ">=", "=": "="}[sense]
        out.append(f" {name}: {' '.join(parts)} {op} {_fmt(rhs)}")
    out.append("Bounds")
    for i, name in enumerate(inst.names):
        lo, hi = inst.lb[i], inst.ub[i]
        if np.isinf(hi):
            out.append(f" {name} >= {_fmt(lo)}")
        else:
            out.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    binaries = [inst.names[i] for i in inst.binary_ids()]
    if binaries:
        out.append("Binaries")
        out.extend(f" {name}" for name in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


@dataclass
class ParsedLp:
    """LP text decoded back into arrays (the canonical subset we emit)."""

    maximize: bool
    names: list[str]
    objective: dict[str, float]
    rows: list[tuple[str, dict[str, float], str, float]]
    lb: dict[str, float]
    ub: dict[str, float]
    binaries: set[str] = field(default_factory=set)


_TERM_RE = re.compile(r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)?\s*([A-Za-z_][\w.]*)")


def _parse_expr(expr: str) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    for sign, num, name in _TERM_RE.findall(expr):
        coef = float(num) if num else 1.0
        if sign == "-":
            coef = -coef
        coeffs[name] = coeffs.get(name, 0.0) + coef
    return coeffs


def parse_lp(text: str) -> ParsedLp:
    """Parse the LP subset written by emit_exchange."""
    section = None
    maximize = True
    objective: dict[str, float] = {}
    rows: list[tuple[str, dict[str, float], str, float]] = []
    lb: dict[str, float] = {}
    ub: dict[str, float] = {}
    binaries: set[str] = set()
    order: list[str] = []
    bounds_order: list[str] = []
    seen: set[str] = set()

    def note(name: str, in_bounds: bool = False):
        if name not in seen:
            seen.add(name)
            order.append(name)
            lb.setdefault(name, 0.0)
            ub.setdefault(name, np.inf)
        if in_bounds and name not in bounds_order:
            bounds_order.append(name)

    for raw in text.splitlines():
        line = raw.split("\\")[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "maximise", "max"):
            section, maximize = "obj", True
            continue
        if low in ("minimize", "minimise", "min"):
            section, maximize = "obj", False
            continue
        if low in ("subject to", "such that", "st", "s.t."):
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low == "end":
            break
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            for name, coef in _parse_expr(body).items():
                note(name)
                objective[name] = objective.get(name, 0.0) + coef
        elif section == "rows":
            if ":" in line:
                rname, body = line.split(":", 1)
                rname = rname.strip()
            else:
                rname, body = f"r{len(rows)}", line
            m = re.search(r"(<=|>=|=)\s*([+-]?[\d.eE+-]+)\s*$", body)
            if not m:
                raise ValueError(f"cannot parse constraint line: {raw!r}")
            sense, rhs = m.group(1), float(m.group(2))
            coeffs = _parse_expr(body[: m.start()])
            for name in coeffs:
                note(name)
            rows.append((rname, coeffs, sense, rhs))
        elif section == "bounds":
            m = re.match(
                r"([+-]?[\d.eE+-]+)\s*<=\s*([A-Za-z_][\w.]*)\s*<=\s*([+-]?[\d.eE+-]+)$", line
            )
            if m:
                name = m.group(2)
                note(name, in_bounds=True)
                lb[name] = float(m.group(1))
                ub[name] = float(m.group(3))
                continue
            m = re.match(r"([A-Za-z_][\w.]*)\s*(<=|>=)\s*([+-]?[\d.eE+-]+)$", line)
            if m:
                name = m.group(1)
                note(name, in_bounds=True)
                if m.group(2) == ">=":
                    lb[name] = float(m.group(3))
                else:
                    ub[name] = float(m.group(3))
                continue
            m = re.match(r"([A-Za-z_][\w.]*)\s+free$", line, re.IGNORECASE)
            if m:
                name = m.group(1)
                note(name, in_bounds=True)
                lb[name] = -np.inf
                continue
            raise ValueError(f"cannot parse bounds line: {raw!r}")
        elif section == "bin":
            name = line.strip()
            note(name)
            binaries.add(name)
            ub[name] = min(ub.get(name, 1.0), 1.0)
    if set(bounds_order) >= set(order):
        # A complete Bounds section fixes the canonical variable order.
        order = bounds_order
    return ParsedLp(maximize, order, objective, rows, lb, ub, binaries)


def parse_solution(text: str, inst: MilpInstance) -> Solution:
    """Decode a solver's solution file against an instance.

    The file starts with ``status <word>`` and, for solved instances, one
    ``<variable> <value>`` line per variable. The objective is re-evaluated
    from the parsed values, never trusted from the file.
    """
    status = None
    gap = 0.0
    values: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "status":
            status = rest.strip()
        elif key == "objective":
            continue
        elif key == "gap":
            gap = float(rest)
        else:
            values[key] = float(rest)
    if status is None:
        raise ValueError("solution file has no status line")
    if status not in ("optimal", "infeasible", "unbounded", "gap_limit"):
        raise ValueError(f"unknown solver status {status!r}")
    if status in ("infeasible", "unbounded"):
        return Solution(status=status, objective_value=None, values=None, mip_gap=gap)
    vec = np.empty(inst.n_vars)
    for i, name in enumerate(inst.names):
        if name not in values:
            raise ValueError(f"solution file is missing variable {name!r}")
        vec[i] = values[name]
    return Solution(
        status=status,
        objective_value=inst.evaluate_objective(vec),
        values=vec,
        mip_gap=gap,
    )


def solver_command() -> str:
    template = os.environ.get(SOLVER_CMD_ENV, DEFAULT_SOLVER_CMD)
    return template.replace("{python}", sys.executable)


def solve_external(
    inst: MilpInstance,
    workdir: str | Path,
    time_limit_s: float = 300.0,
    rel_gap: float = 1e-6,
) -> Solution:
    """Write instance.lp, run the configured solver command, read solution.sol."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    lp_path = workdir / "instance.lp"
    sol_path = workdir / "solution.sol"
    lp_path.write_text(emit_exchange(inst))
    cmd = solver_command().format(
        lp=str(lp_path), sol=str(sol_path), time_limit=time_limit_s, gap=rel_gap
    )
    proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"solver command failed ({proc.returncode}): {cmd}\n{proc.stderr[-2000:]}"
        )
    if not sol_path.exists():
        raise RuntimeError(f"solver command produced no solution file: {cmd}")
    return parse_solution(sol_path.read_text(), inst)


def solve(request: SolveRequest, workdir: str | Path | None = None) -> Solution:
    if request.backend == "reference":
        return reference_solve(request.instance)
    if workdir is None:
        raise ValueError("external backend needs a working directory for exchange files")
    return solve_external(
        request.instance, workdir, time_limit_s=request.time_limit_s, rel_gap=request.rel_gap
    )


# ---------------------------------------------------------------------------
# Exact reference oracle: propagation + LP-bounded depth-first enumeration.
# ---------------------------------------------------------------------------

# Branching order: decide bid postures first, then price picks, then the
# exclusivity switches. Heuristic only; exactness never depends on it.
_BRANCH_PRIORITY = {"sell_on": 0, "buy_on": 0, "pick_sell": 1, "pick_buy": 1}


class _Propagator:
    """Vectorized activity-based bound tightening over <=-normalized rows."""

    def __init__(self, inst: MilpInstance, binary_mask: np.ndarray):
        from scipy import sparse

        self.binary_mask = binary_mask
        rows, cols, vals, rhs = [], [], [], []
        r = 0
        for _name, terms, sense, rr in inst.rows:
            if sense in ("<=", "="):
                for vid, coef in terms:
                    rows.append(r)
                    cols.append(vid)
                    vals.append(coef)
                rhs.append(rr)
                r += 1
            if sense in (">=", "="):
                for vid, coef in terms:
                    rows.append(r)
                    cols.append(vid)
                    vals.append(-coef)
                rhs.append(-rr)
                r += 1
        self.n_rows = r
        self.rhs = np.array(rhs)
        self.nz_row = np.array(rows, dtype=int)
        self.nz_col = np.array(cols, dtype=int)
        self.nz_val = np.array(vals)
        n = inst.n_vars
        S = sparse.csr_matrix((self.nz_val, (self.nz_row, self.nz_col)), shape=(r, n))
        self.S_pos = S.maximum(0).tocsr()
        self.S_neg = S.minimum(0).tocsr()
        self.pos_nz = self.nz_val > 0
        self.neg_nz = ~self.pos_nz

    def run(self, lb, ub, obj_cut=None, max_passes: int = 12) -> bool:
        """Tighten lb/ub in place; False when some row proves infeasible.

        ``obj_cut`` is an optional dense (coef, rhs) pair in <= form, used
        to carry the incumbent-objective bound into the tightening.
        """
        bmask = self.binary_mask
        for _ in range(max_passes):
            min_act = self.S_pos @ lb + self.S_neg @ ub
            if np.any(min_act > self.rhs + 1e-7):
                return False
            slack = self.rhs - min_act
            s_nz = slack[self.nz_row]

            ub_cand = ub.copy()
            pos = self.pos_nz
            cand = lb[self.nz_col[pos]] + s_nz[pos] / self.nz_val[pos]
            np.minimum.at(ub_cand, self.nz_col[pos], cand)

            lb_cand = lb.copy()
            neg = self.neg_nz
            cand = ub[self.nz_col[neg]] + s_nz[neg] / self.nz_val[neg]
            np.maximum.at(lb_cand, self.nz_col[neg], cand)

            if obj_cut is not None:
                co, rr = obj_cut
                lo_terms = np.where(co > 0, co * lb, co * ub)
                mact = lo_terms.sum()
                if mact > rr + 1e-7:
                    return False
                sl = rr - mact
                nzj = np.flatnonzero(co)
                for j in nzj:
                    a = co[j]
                    if a > 0:
                        ub_cand[j] = min(ub_cand[j], lb[j] + sl / a)
                    else:
                        lb_cand[j] = max(lb_cand[j], ub[j] + sl / a)

            # Binary rounding of fractional bounds.
            snap_hi = bmask & (ub_cand >= -1e-9) & (ub_cand < 1.0 - 1e-9)
            ub_cand[snap_hi] = 0.0
            snap_lo = bmask & (lb_cand > 1e-9) & (lb_cand <= 1.0 + 1e-9)
            lb_cand[snap_lo] = 1.0

            tighter_ub = ub_cand < ub - 1e-9
            tighter_lb = lb_cand > lb + 1e-9
            if not (tighter_ub.any() or tighter_lb.any()):
                return True
            ub[tighter_ub] = ub_cand[tighter_ub]
            lb[tighter_lb] = lb_cand[tighter_lb]
            if np.any(lb > ub + 1e-9):
                return False
        return True


class _Oracle:
    def __init__(self, inst: MilpInstance):
        self.inst = inst
        self.A, self.senses, self.b = inst.to_arrays()
        self.A_pos = np.maximum(self.A, 0.0)
        self.A_neg = np.minimum(self.A, 0.0)
        self.sense_arr = np.array([{"<=": 0, "=": 1, ">=": 2}[s] for s in self.senses])
        self.c = inst.objective_vector()
        self.binaries = np.array(inst.binary_ids(), dtype=int)
        self.binary_mask = np.zeros(inst.n_vars, dtype=bool)
        self.binary_mask[self.binaries] = True
        self.prop = _Propagator(inst, self.binary_mask)
        prio = np.full(inst.n_vars, 2)
        for sym, entries in inst.index.items():
            p = _BRANCH_PRIORITY.get(sym)
            if p is not None:
                for vid in entries.values():
                    prio[vid] = p
        self.priority = prio

    def relax(self, lb, ub):
        """LP relaxation with fixed variables substituted and redundant rows dropped."""
        fixed = (ub - lb) <= BND_TOL
        free = ~fixed
        xfix = lb.copy()
        xfix[free] = 0.0
        const = float(self.c[fixed] @ lb[fixed])
        row_min = self.A_pos @ lb + self.A_neg @ ub
        row_max = self.A_pos @ ub + self.A_neg @ lb
        sa = self.sense_arr
        bad = (
            ((sa == 0) & (row_min > self.b + 1e-7))
            | ((sa == 2) & (row_max < self.b - 1e-7))
            | ((sa == 1) & ((row_min > self.b + 1e-7) | (row_max < self.b - 1e-7)))
        )
        if bad.any():
            return "infeasible", None, None, None
        redundant = (
            ((sa == 0) & (row_max <= self.b + 1e-9))
            | ((sa == 2) & (row_min >= self.b - 1e-9))
            | ((sa == 1) & (row_max <= self.b + 1e-9) & (row_min >= self.b - 1e-9))
        )
        if not free.any():
            return "optimal", const, xfix, np.zeros(len(lb))
        keep = ~redundant
        free_idx = np.flatnonzero(free)
        keep &= (self.A[:, free_idx] != 0.0).any(axis=1)
        keep_idx = np.flatnonzero(keep)
        b_adj = self.b[keep_idx] - self.A[np.ix_(keep_idx, np.flatnonzero(fixed))] @ lb[fixed]
        res = solve_lp(
            self.c[free_idx],
            self.A[np.ix_(keep_idx, free_idx)],
            [self.senses[i] for i in keep_idx],
            b_adj,
            lb[free_idx],
            ub[free_idx],
        )
        if res.status != "optimal":
            return res.status, None, None, None
        x = xfix
        x[free_idx] = res.x
        rc = np.zeros(len(lb))
        if res.reduced_costs is not None:
            rc[free_idx] = res.reduced_costs
        return "optimal", res.objective + const, x, rc

    def dive(self, lb, ub, x):
        """Fix binaries at the rounding of x; returns (obj, x) or None."""
        lo = lb.copy()
        hi = ub.copy()
        r = np.round(np.clip(x[self.binaries], lb[self.binaries], ub[self.binaries]))
        lo[self.binaries] = r
        hi[self.binaries] = r
        if not self.prop.run(lo, hi):
            return None
        status, obj, xx, _rc = self.relax(lo, hi)
        if status != "optimal":
            return None
        return obj, xx

    def feasible_point(self, x) -> bool:
        lhs = self.A @ x
        sa = self.sense_arr
        if np.any((sa == 0) & (lhs > self.b + 1e-7)):
            return False
        if np.any((sa == 2) & (lhs < self.b - 1e-7)):
            return False
        return not np.any((sa == 1) & (np.abs(lhs - self.b) > 1e-7))

    def polish(self, x, lb, ub):
        """Round lazily fractional binaries that feasibility lets move.

        Keeps the continuous part untouched; every accepted rounding keeps
        the point feasible, so the result is always relaxation-feasible.
        Returns (point, all_binaries_integral).
        """
        x2 = x.copy()
        clean = True
        for j in self.binaries:
            if min(x2[j], 1.0 - x2[j]) <= 1e-9:
                continue
            near = float(round(x2[j]))
            done = False
            for val in (near, 1.0 - near):
                if val < lb[j] - 1e-9 or val > ub[j] + 1e-9:
                    continue
                old = x2[j]
                x2[j] = val
                if self.feasible_point(x2):
                    done = True
                    break
                x2[j] = old
            clean &= done
        return x2, clean


def reference_solve(
    inst: MilpInstance,
    binary_limit: int = 24,
    node_limit: int = 200000,
) -> Solution:
    """Exact optimum by pruned enumeration of the binary variables.

    Every feasible binary assignment is visited unless bound propagation
    proves it infeasible or its LP relaxation cannot beat the incumbent;
    the surviving continuous program is solved by the bounded simplex.
    Refuses instances with more binaries than ``binary_limit``.
    """
    binaries = inst.binary_ids()
    if len(binaries) > binary_limit:
        raise ValueError(
            f"instance has {len(binaries)} binary variables, over the limit {binary_limit}"
        )
    oracle = _Oracle(inst)
    lb0 = np.asarray(inst.lb, dtype=float)
    ub0 = np.asarray(inst.ub, dtype=float)

    best_obj = -np.inf
    best_x = None
    nodes = 0
    saw_unbounded = False
    neg_c = -oracle.c

    stack = [(lb0.copy(), ub0.copy())]
    while stack:
        lb, ub = stack.pop()
        nodes += 1
        if nodes > node_limit:
            raise RuntimeError(f"reference solver exceeded {node_limit} nodes")
        obj_cut = (neg_c, -(best_obj + 1e-9)) if np.isfinite(best_obj) else None
        if not oracle.prop.run(lb, ub, obj_cut=obj_cut):
            continue
        status, obj, x, rc = oracle.relax(lb, ub)
        if status == "infeasible":
            continue
        if status == "unbounded":
            saw_unbounded = True
            continue
        if obj <= best_obj + 1e-9:
            continue
        if np.isfinite(best_obj):
            # Reduced-cost fixing: flips that provably cannot reach the
            # incumbent are pinned for this subtree before branching.
            for j in binaries:
                if ub[j] - lb[j] <= BND_TOL:
                    continue
                if x[j] <= lb[j] + 1e-9 and obj + rc[j] <= best_obj + 1e-9:
                    ub[j] = lb[j]
                elif x[j] >= ub[j] - 1e-9 and obj - rc[j] <= best_obj + 1e-9:
                    lb[j] = ub[j]
        frac = [j for j in binaries if min(x[j], 1.0 - x[j]) > 1e-9]
        if not frac:
            snapped = x.copy()
            snapped[binaries] = np.round(snapped[binaries])
            best_obj = obj
            best_x = snapped
            continue
        # Fractional flags that nothing actually constrains are rounded in
        # place; genuinely conflicting ones stay for branching.
        polished, clean = oracle.polish(x, lb, ub)
        if clean:
            pobj = float(oracle.c @ polished)
            if pobj > best_obj:
                best_obj = pobj
                best_x = polished.copy()
                best_x[binaries] = np.round(best_x[binaries])
            if pobj >= obj - 1e-9:
                continue  # the relaxation bound is attained, subtree closed
        else:
            x = polished
            frac = [j for j in binaries if min(x[j], 1.0 - x[j]) > 1e-9]
        # Branch: bid binaries first, then the most fractional, lowest index.
        scores = [(oracle.priority[j], -min(x[j], 1.0 - x[j]), j) for j in frac]
        _, _, branch = min(scores)
        lo1, up1 = lb.copy(), ub.copy()
        lo0, up0 = lb, ub
        lo1[branch] = 1.0
        up0[branch] = 0.0
        if x[branch] >= 0.5:
            stack.append((lo0, up0))
            stack.append((lo1, up1))  # explored first (LIFO)
        else:
            stack.append((lo1, up1))
            stack.append((lo0, up0))

    if best_x is None:
        if saw_unbounded:
            return Solution(status="unbounded", objective_value=None, values=None)
        return Solution(status="infeasible", objective_value=None, values=None)
    return Solution(status="optimal", objective_value=float(best_obj), values=best_x, mip_gap=0.0)
