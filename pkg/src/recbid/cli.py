"""Command-line front end: plan one day, simulate a week, compare cases.

Data directory layout (CSV, hourly rows, whole days):
    energy_history.csv      timestamp,pv_kwh,load_kwh,member_demand_kwh
    msd_price_history.csv   timestamp,msd_sell_max_eur_kwh,msd_buy_min_eur_kwh
    realized_energy.csv     (same columns as energy_history, simulated days)
    realized_msd_prices.csv (same columns as msd_price_history)
    known_prices.csv        timestamp,export_price_eur_kwh,import_price_eur_kwh
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .core import RecConfig, load_config_json, validate_config
from .harness import RunSpec, compare_cases, load_week_data, run_day, run_week
from .milp import build_instance
from .solver import emit_exchange


def _add_common(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--config", type=Path, help="JSON config file (defaults used if omitted)")
    ap.add_argument("--data-dir", type=Path, required=True)
    ap.add_argument("--out-dir", type=Path, required=True)
    ap.add_argument("--case", choices=["base", "no_msd", "no_incentive", "neither"], default="base")
    ap.add_argument("--nm", type=int, default=10, help="price scenario count")
    ap.add_argument("--nr", type=int, default=10, help="energy scenario count")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--backend", choices=["external", "reference"], default="external")
    ap.add_argument("--time-limit", type=float, default=300.0, help="seconds per solve")
    ap.add_argument("--gap", type=float, default=1e-6, help="relative MIP gap")


def _spec(args) -> RunSpec:
    config = load_config_json(args.config) if args.config else RecConfig()
    problems = validate_config(config)
    if problems:
        raise SystemExit("invalid config:\n  " + "\n  ".join(problems))
    return RunSpec(
        config=config,
        data_dir=args.data_dir,
        case=args.case,
        n_m=args.nm,
        n_r=args.nr,
        seed=args.seed,
        backend=args.backend,
        out_dir=args.out_dir,
        time_limit_s=args.time_limit,
        rel_gap=args.gap,
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="recbid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="optimize a single day and report the program")
    _add_common(p_plan)
    p_plan.add_argument("--day", type=int, default=0)

    p_sim = sub.add_parser("simulate", help="run the rolling simulation over all realized days")
    _add_common(p_sim)

    p_cmp = sub.add_parser("compare", help="run all four cases and tabulate weekly nets")
    _add_common(p_cmp)

    p_emit = sub.add_parser("emit", help="write one day's MILP exchange file and stop")
    _add_common(p_emit)
    p_emit.add_argument("--day", type=int, default=0)

    args = ap.parse_args(argv)
    spec = _spec(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "plan":
        data = load_week_data(spec.data_dir, spec.config.horizon_hours)
        result = run_day(spec, data, args.day, spec.config.soc_initial, out / f"day{args.day}")
        payload = {
            "day": result.day,
            "planner_objective": result.planner_objective,
            "expected": result.expected,
            "realized": result.report.totals(),
            "soc_final": result.soc_final,
            "bids": [
                None
                if b is None
                else {
                    "hour": b.hour,
                    "side": b.side,
                    "price": b.price,
                    "quantity": b.quantity,
                    "accepted": result.accepted[b.hour],
                }
                for b in result.program.bids
            ],
        }
        (out / "plan.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(json.dumps(payload["realized"], indent=2, sort_keys=True))
    elif args.command == "simulate":
        result = run_week(spec)
        print(json.dumps(result.weekly_totals(), indent=2, sort_keys=True))
    elif args.command == "compare":
        table = compare_cases(spec)
        header = f"{'case':<14}{'net EUR':>12}{'vs neither %':>14}{'vs no_msd %':>13}"
        print(header)
        for row in table:
            dn = row["delta_vs_neither_pct"]
            dm = row["delta_vs_no_msd_pct"]
            print(
                f"{row['case']:<14}{row['weekly_net_eur']:>12.2f}"
                f"{dn if dn is not None else float('nan'):>14.1f}"
                f"{dm if dm is not None else float('nan'):>13.1f}"
            )
    elif args.command == "emit":
        from .core import DayTrajectory
        from .harness import build_day_scenarios

        data = load_week_data(spec.data_dir, spec.config.horizon_hours)
        prices, energies = build_day_scenarios(spec, data, args.day)
        from .harness import apply_case

        config, allow_bids = apply_case(spec.config, spec.case)
        K = config.horizon_hours
        sl = slice(args.day * K, (args.day + 1) * K)
        known = (
            DayTrajectory(data.known_prices[sl, 0], "price_export"),
            DayTrajectory(data.known_prices[sl, 1], "price_import"),
        )
        inst = build_instance(
            config,
            prices,
            energies,
            known,
            soc_initial=config.soc_initial,
            allow_bids=allow_bids,
        )
        lp_path = out / "instance.lp"
        lp_path.write_text(emit_exchange(inst))
        sidecar = {
            name: {"symbol": sym, "indices": list(idx)}
            for sym, entries in inst.index.items()
            for idx, vid in entries.items()
            for name in [inst.names[vid]]
        }
        (out / "instance.vars.json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
        )
        print(f"wrote {lp_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
