#!/usr/bin/env python3
"""Full-size experiment: 24-hour days, ten price and ten energy scenarios,
one simulated week, all four study cases.

Runs on the bundled synthetic data by default. Expect minutes per day per
case with the bundled HiGHS backend; pass a looser --gap to trade
optimality margin for time.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from recbid.core import RecConfig, load_config_json
from recbid.harness import RunSpec, compare_cases


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", type=Path, default=Path("data/synthetic_week"))
    ap.add_argument("--out-dir", type=Path, default=Path("out/paper_scale"))
    ap.add_argument("--config", type=Path, help="JSON RecConfig; defaults to the bundled plant")
    ap.add_argument("--nm", type=int, default=10)
    ap.add_argument("--nr", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--gap", type=float, default=1e-3)
    ap.add_argument("--time-limit", type=float, default=1800.0)
    args = ap.parse_args()

    config = load_config_json(args.config) if args.config else RecConfig()
    spec = RunSpec(
        config=config,
        data_dir=args.data_dir,
        n_m=args.nm,
        n_r=args.nr,
        seed=args.seed,
        backend="external",
        out_dir=args.out_dir,
        rel_gap=args.gap,
        time_limit_s=args.time_limit,
    )
    table = compare_cases(spec)
    print(json.dumps(table, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
