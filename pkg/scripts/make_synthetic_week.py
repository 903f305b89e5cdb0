#!/usr/bin/env python3
"""Generate the bundled synthetic data set: training history plus one
simulated week for a small community (50 kWp PV, 15 households).

The series are smooth daily shapes with mild day-to-day variation, so the
binned Markov chain trained on the history forecasts the simulated week
well. Service-market sell prices sit above the export tariff and buy
prices below the import tariff, which makes market participation
worthwhile, as in the setting the tool targets.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

K = 24


def _timestamps(day0: int, days: int):
    base = np.datetime64("2022-06-01T00:00") + np.timedelta64(day0, "D")
    return [str(base + np.timedelta64(d, "D") + np.timedelta64(h, "h")) for d in range(days) for h in range(K)]


def pv_day(rng, scale: float) -> np.ndarray:
    h = np.arange(K)
    shape = np.sin(np.pi * (h - 6) / 12.0)
    shape[(h < 6) | (h > 18)] = 0.0
    shape = np.clip(shape, 0.0, None)
    noise = 1.0 + rng.normal(0.0, 0.04, K)
    return np.clip(40.0 * scale * shape * noise, 0.0, None)


def load_day(rng) -> np.ndarray:
    h = np.arange(K)
    shape = 4.0 + 1.5 * np.sin(np.pi * (h - 8) / 12.0) ** 2
    return np.clip(shape + rng.normal(0.0, 0.15, K), 0.1, None)


def member_demand_day(rng) -> np.ndarray:
    h = np.arange(K)
    morning = np.exp(-0.5 * ((h - 8.0) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((h - 19.0) / 2.5) ** 2)
    shape = 12.0 + 9.0 * morning + 14.0 * evening
    return np.clip(shape * (1.0 + rng.normal(0.0, 0.05, K)), 0.5, None)


def msd_prices_day(rng) -> tuple[np.ndarray, np.ndarray]:
    # Service prices sit between the export and import tariffs: selling a
    # deviation beats the feed-in price, while a purchase deviation still
    # costs more than the feed-in revenue it displaces.
    h = np.arange(K)
    peak = np.exp(-0.5 * ((h - 19.0) / 3.0) ** 2) + 0.6 * np.exp(-0.5 * ((h - 9.0) / 3.0) ** 2)
    day_scale = rng.uniform(0.85, 1.3)
    sell_max = (0.17 + 0.11 * peak) * day_scale + rng.normal(0.0, 0.012, K)
    buy_min = (0.125 + 0.05 * peak) * day_scale + rng.normal(0.0, 0.006, K)
    return np.clip(sell_max, 0.12, None), np.clip(buy_min, 0.105, None)


def known_prices_day() -> tuple[np.ndarray, np.ndarray]:
    h = np.arange(K)
    peak = np.exp(-0.5 * ((h - 19.0) / 3.0) ** 2)
    export = 0.085 + 0.015 * peak
    imprt = 0.27 + 0.03 * peak
    return export, imprt


def write_csv(path: Path, header: list[str], stamps, cols) -> None:
    lines = [",".join(header)]
    for i, ts in enumerate(stamps):
        lines.append(",".join([ts] + [f"{col[i]:.6f}" for col in cols]))
    path.write_text("\n".join(lines) + "\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("data/synthetic_week"))
    ap.add_argument("--seed", type=int, default=20220701)
    ap.add_argument("--history-days", type=int, default=35)
    ap.add_argument("--week-days", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    n_hist, n_week = args.history_days, args.week_days
    total = n_hist + n_week
    pv, load, md, sell, buy = [], [], [], [], []
    for _d in range(total):
        scale = rng.uniform(0.75, 1.1)
        pv.append(pv_day(rng, scale))
        load.append(load_day(rng))
        md.append(member_demand_day(rng))
        s, b = msd_prices_day(rng)
        sell.append(s)
        buy.append(b)
    pv = np.concatenate(pv)
    load = np.concatenate(load)
    md = np.concatenate(md)
    sell = np.concatenate(sell)
    buy = np.concatenate(buy)

    hist = slice(0, n_hist * K)
    week = slice(n_hist * K, total * K)
    stamps_hist = _timestamps(0, n_hist)
    stamps_week = _timestamps(n_hist, n_week)

    write_csv(
        out / "energy_history.csv",
        ["timestamp", "pv_kwh", "load_kwh", "member_demand_kwh"],
        stamps_hist,
        [pv[hist], load[hist], md[hist]],
    )
    write_csv(
        out / "msd_price_history.csv",
        ["timestamp", "msd_sell_max_eur_kwh", "msd_buy_min_eur_kwh"],
        stamps_hist,
        [sell[hist], buy[hist]],
    )
    write_csv(
        out / "realized_energy.csv",
        ["timestamp", "pv_kwh", "load_kwh", "member_demand_kwh"],
        stamps_week,
        [pv[week], load[week], md[week]],
    )
    write_csv(
        out / "realized_msd_prices.csv",
        ["timestamp", "msd_sell_max_eur_kwh", "msd_buy_min_eur_kwh"],
        stamps_week,
        [sell[week], buy[week]],
    )
    exp_day, imp_day = known_prices_day()
    write_csv(
        out / "known_prices.csv",
        ["timestamp", "export_price_eur_kwh", "import_price_eur_kwh"],
        stamps_week,
        [np.tile(exp_day, n_week), np.tile(imp_day, n_week)],
    )
    print(f"wrote {n_hist} history days and a {n_week}-day week under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
