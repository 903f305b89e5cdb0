"""Default external MILP solver: HiGHS via scipy, driven by LP files.

Runs as a subprocess (``python -m recbid.highs_runner instance.lp out.sol``)
so the main process only ever talks to exchange files; point
``REC_SOLVER_CMD`` at any other solver wrapper with the same contract to
swap it out. The solution file carries a status line, the reported
objective and gap, then one ``name value`` pair per variable.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .solver import ParsedLp, parse_lp

_STATUS = {0: "optimal", 1: "gap_limit", 2: "infeasible", 3: "unbounded"}


def solve_parsed(parsed: ParsedLp, time_limit: float, gap: float):
    names = parsed.names
    pos = {name: i for i, name in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, coef in parsed.objective.items():
        c[pos[name]] = coef
    if parsed.maximize:
        c = -c
    lb = np.array([parsed.lb[name] for name in names])
    ub = np.array([parsed.ub[name] for name in names])
    integrality = np.array([1 if name in parsed.binaries else 0 for name in names])

    rows, cols, vals, clo, chi = [], [], [], [], []
    for i, (_rname, coeffs, sense, rhs) in enumerate(parsed.rows):
        for name, coef in coeffs.items():
            rows.append(i)
            cols.append(pos[name])
            vals.append(coef)
        if sense == "<=":
            clo.append(-np.inf)
            chi.append(rhs)
        elif sense == ">=":
            clo.append(rhs)
            chi.append(np.inf)
        else:
            clo.append(rhs)
            chi.append(rhs)
    constraints = []
    if parsed.rows:
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(parsed.rows), n))
        constraints = [LinearConstraint(mat, np.array(clo), np.array(chi))]

    res = milp(
        c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options={"time_limit": time_limit, "mip_rel_gap": gap, "presolve": True},
    )
    return res


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("lp_file")
    ap.add_argument("sol_file")
    ap.add_argument("--time-limit", type=float, default=300.0)
    ap.add_argument("--gap", type=float, default=1e-6)
    args = ap.parse_args(argv)

    with open(args.lp_file) as fh:
        parsed = parse_lp(fh.read())
    res = solve_parsed(parsed, args.time_limit, args.gap)

    status = _STATUS.get(res.status, "unknown")
    if status == "gap_limit" and res.x is None:
        status = "unknown"
    lines = [f"status {status}"]
    if res.x is not None:
        obj = float(res.fun) if res.fun is not None else 0.0
        if parsed.maximize:
            obj = -obj
        lines.append(f"objective {obj!r}")
        gap = getattr(res, "mip_gap", 0.0) or 0.0
        lines.append(f"gap {gap!r}")
        for name, val in zip(parsed.names, res.x):
            lines.append(f"{name} {float(val)!r}")
    with open(args.sol_file, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if status == "unknown":
        print(f"solver finished with unmapped status {res.status}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
