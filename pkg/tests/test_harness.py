import json
from pathlib import Path

import numpy as np
import pytest

from recbid.cli import main as cli_main
from recbid.core import RecConfig
from recbid.harness import (
    RunSpec,
    WeekData,
    apply_case,
    build_day_scenarios,
    compare_cases,
    load_week_data,
    run_day,
    run_week,
)
from recbid.settlement import decide_acceptance

from conftest import small_config

K = 3  # short days keep the reference oracle within its binary budget


def flat_week(n_hist_days=4, n_days=2, pv=(20.0, 8.0, 0.0), load=(3.0, 3.0, 3.0),
              md=(6.0, 8.0, 12.0), sell=(0.30, 0.28, 0.34), buy=(0.12, 0.11, 0.13),
              ce=(0.09, 0.09, 0.10), ci=(0.24, 0.24, 0.26)):
    """Every training and realized day identical: fully predictable world."""
    e_day = np.column_stack([pv, load, md])
    p_day = np.column_stack([sell, buy])
    kp_day = np.column_stack([ce, ci])
    return WeekData(
        energy_history=np.tile(e_day, (n_hist_days, 1)),
        price_history=np.tile(p_day, (n_hist_days, 1)),
        realized_energy=np.tile(e_day, (n_days, 1)),
        realized_prices=np.tile(p_day, (n_days, 1)),
        known_prices=np.tile(kp_day, (n_days, 1)),
        horizon=K,
    )


def tiny_spec(**overrides):
    cfg = overrides.pop(
        "config",
        small_config(
            K=K,
            battery_capacity_kwh=0.0,
            battery_power_kwh_per_slot=0.0,
            soc_final_min=0.0,
            soc_final_max=1.0,
        ),
    )
    base = dict(config=cfg, n_m=1, n_r=1, seed=3, backend="reference")
    base.update(overrides)
    return RunSpec(**base)


def week_to_csvs(data: WeekData, out: Path) -> None:
    def dump(name, header, arr):
        lines = [header]
        for i in range(arr.shape[0]):
            lines.append(",".join([f"t{i}"] + [repr(float(v)) for v in arr[i]]))
        (out / name).write_text("\n".join(lines) + "\n")

    out.mkdir(parents=True, exist_ok=True)
    dump("energy_history.csv", "timestamp,pv_kwh,load_kwh,member_demand_kwh", data.energy_history)
    dump("msd_price_history.csv", "timestamp,msd_sell_max_eur_kwh,msd_buy_min_eur_kwh", data.price_history)
    dump("realized_energy.csv", "timestamp,pv_kwh,load_kwh,member_demand_kwh", data.realized_energy)
    dump("realized_msd_prices.csv", "timestamp,msd_sell_max_eur_kwh,msd_buy_min_eur_kwh", data.realized_prices)
    dump("known_prices.csv", "timestamp,export_price_eur_kwh,import_price_eur_kwh", data.known_prices)


class TestCases:
    def test_apply_case_toggles(self):
        cfg = small_config(incentive_shared=0.119)
        assert apply_case(cfg, "base") == (cfg, True)
        assert apply_case(cfg, "no_msd") == (cfg, False)
        cfg2, bids = apply_case(cfg, "no_incentive")
        assert cfg2.incentive_shared == 0.0 and bids
        cfg3, bids = apply_case(cfg, "neither")
        assert cfg3.incentive_shared == 0.0 and not bids

    def test_bad_case_rejected(self):
        with pytest.raises(ValueError, match="case"):
            RunSpec(config=small_config(), case="case4")


class TestScenarioTraining:
    def test_price_window_uses_trailing_days(self):
        data = flat_week(n_hist_days=6, n_days=2)
        spec = tiny_spec(n_m=3, price_window_days=4)
        prices, energies = build_day_scenarios(spec, data, 0)
        assert prices.n <= 3
        assert energies.n == 1
        # all training days identical: single distinct price trajectory
        assert np.allclose(prices.values, prices.values[0])

    def test_training_excludes_current_and_future_days(self):
        data = flat_week(n_hist_days=4, n_days=2)
        # Poison the realized series of day 1; day 0 training must not see it.
        poisoned = WeekData(
            energy_history=data.energy_history,
            price_history=data.price_history,
            realized_energy=data.realized_energy.copy(),
            realized_prices=data.realized_prices.copy(),
            known_prices=data.known_prices,
            horizon=K,
        )
        poisoned.realized_energy[K:, 0] = 999.0
        spec = tiny_spec()
        a, _ = build_day_scenarios(spec, data, 0)
        b, _ = build_day_scenarios(spec, poisoned, 0)
        assert np.array_equal(a.values, b.values)


class TestRunDay:
    def test_zero_energy_day_settles_to_zero(self, tmp_path):
        # Service prices inside the tariff band leave no profitable bid for
        # an empty plant, so the optimum is the all-zero program.
        data = flat_week(
            pv=(0, 0, 0), load=(0, 0, 0), md=(0, 0, 0),
            sell=(0.15, 0.15, 0.15), buy=(0.12, 0.12, 0.12),
        )
        spec = tiny_spec()
        res = run_day(spec, data, 0, spec.config.soc_initial, tmp_path)
        assert res.report.totals()["net"] == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(res.dispatch.grid_export, 0.0)
        assert np.allclose(res.dispatch.grid_import, 0.0)

    def test_single_scenario_parity_with_planner_objective(self, tmp_path):
        cfg = small_config(
            K=K,
            battery_capacity_kwh=50.0,
            battery_power_kwh_per_slot=20.0,
            soc_final_min=0.2,
            soc_final_max=0.8,
            epsilon_max=0.0,
        )
        data = flat_week()
        spec = tiny_spec(config=cfg)
        res = run_day(spec, data, 0, cfg.soc_initial, tmp_path)
        # deterministic world: no shortfalls, parity up to the baseline term
        assert float(res.dispatch.shortfall_sell.sum()) == pytest.approx(0.0, abs=1e-8)
        realized = res.report.totals()
        adj = realized["export_revenue"] - res.expected["export_revenue"]
        adj -= realized["import_cost"] - res.expected["import_cost"]
        assert realized["net"] == pytest.approx(res.planner_objective + adj, abs=1e-6)

    def test_infeasible_day_mentions_instance_path(self, tmp_path):
        cfg = small_config(
            K=K,
            battery_capacity_kwh=50.0,
            battery_power_kwh_per_slot=5.0,
            soc_initial=0.0,
            soc_final_min=0.99,  # unreachable terminal window
            soc_final_max=1.0,
        )
        data = flat_week(pv=(0.0, 0.0, 0.0))
        spec = tiny_spec(config=cfg)
        with pytest.raises(RuntimeError, match="instance.lp"):
            run_day(spec, data, 0, cfg.soc_initial, tmp_path)


class TestRunWeek:
    def test_flat_week_repeats_daily_report(self, tmp_path):
        data = flat_week(n_days=3)
        spec = tiny_spec(out_dir=tmp_path / "run")
        result = run_week(spec, data)
        totals = [d.report.totals() for d in result.days]
        for t in totals[1:]:
            for key, val in totals[0].items():
                assert t[key] == pytest.approx(val, abs=1e-9)

    def test_soc_chain_continuity(self):
        cfg = small_config(
            K=K,
            battery_capacity_kwh=50.0,
            battery_power_kwh_per_slot=20.0,
            soc_final_min=0.2,
            soc_final_max=0.8,
        )
        data = flat_week(n_days=3)
        result = run_week(tiny_spec(config=cfg), data)
        for prev, cur in zip(result.days, result.days[1:]):
            assert cur.dispatch.soc[0] == pytest.approx(prev.soc_final, abs=0)

    def test_bid_log_consistency(self):
        data = flat_week(n_days=2)
        cfg = small_config(
            K=K, battery_capacity_kwh=50.0, battery_power_kwh_per_slot=20.0,
            soc_final_min=0.2, soc_final_max=0.8,
        )
        result = run_week(tiny_spec(config=cfg), data)
        for day, d in enumerate(result.days):
            sl = slice(day * K, (day + 1) * K)
            again = decide_acceptance(
                d.program.bids,
                data.realized_prices[sl, 0],
                data.realized_prices[sl, 1],
            )
            assert again == d.accepted

    def test_outputs_written(self, tmp_path):
        data = flat_week(n_days=2)
        out = tmp_path / "run"
        run_week(tiny_spec(out_dir=out), data)
        for name in ("report.json", "cashflow.csv", "cashflow_long.csv",
                     "bids.csv", "soc.csv", "soc_planned.csv"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 3
        assert len(report["days"]) == 2
        assert (out / "day0" / "instance.lp").exists()


class TestCompareCases:
    def test_collapsed_toggles_make_all_cases_equal(self):
        # Service prices that can never pay and no incentive: the four cases
        # optimize to the same program.
        data = flat_week(sell=(0.01, 0.01, 0.01), buy=(0.5, 0.5, 0.5))
        cfg = small_config(
            K=K, battery_capacity_kwh=0.0, battery_power_kwh_per_slot=0.0,
            incentive_shared=0.0, soc_final_min=0.0, soc_final_max=1.0,
        )
        table = compare_cases(tiny_spec(config=cfg), data)
        nets = [row["weekly_net_eur"] for row in table]
        assert max(nets) - min(nets) <= 1e-9

    def test_table_format_and_planner_ordering(self, tmp_path):
        data = flat_week(n_days=2)
        cfg = small_config(
            K=K, battery_capacity_kwh=50.0, battery_power_kwh_per_slot=20.0,
            soc_final_min=0.2, soc_final_max=0.8,
        )
        out = tmp_path / "cmp"
        table = compare_cases(tiny_spec(config=cfg, out_dir=out), data)
        assert [row["case"] for row in table] == ["base", "no_msd", "no_incentive", "neither"]
        for row in table:
            assert set(row) == {
                "case",
                "weekly_net_eur",
                "planner_objective_sum",
                "delta_vs_neither_pct",
                "delta_vs_no_msd_pct",
            }
        by_case = {row["case"]: row["planner_objective_sum"] for row in table}
        assert by_case["base"] >= by_case["no_msd"] - 1e-9
        assert by_case["base"] >= by_case["no_incentive"] - 1e-9
        assert by_case["no_incentive"] >= by_case["neither"] - 1e-9
        assert by_case["no_msd"] >= by_case["neither"] - 1e-9
        assert (out / "comparison.csv").exists()
        assert (out / "comparison.json").exists()


@pytest.mark.slow
class TestCli:
    def test_simulate_and_compare_roundtrip(self, tmp_path, capsys):
        data = flat_week(n_days=2)
        data_dir = tmp_path / "data"
        week_to_csvs(data, data_dir)
        cfg_path = tmp_path / "cfg.json"
        cfg = small_config(
            K=K, battery_capacity_kwh=0.0, battery_power_kwh_per_slot=0.0,
            soc_final_min=0.0, soc_final_max=1.0,
        )
        cfg_path.write_text(json.dumps({k: getattr(cfg, k) for k in RecConfig.__dataclass_fields__}))
        out = tmp_path / "out"
        rc = cli_main([
            "simulate", "--config", str(cfg_path), "--data-dir", str(data_dir),
            "--out-dir", str(out), "--nm", "1", "--nr", "1", "--backend", "reference",
        ])
        assert rc == 0
        assert (out / "report.json").exists()
        payload = json.loads(capsys.readouterr().out)
        assert "net" in payload

    def test_emit_writes_exchange_and_sidecar(self, tmp_path):
        data = flat_week(n_days=1)
        data_dir = tmp_path / "data"
        week_to_csvs(data, data_dir)
        cfg = small_config(
            K=K, battery_capacity_kwh=0.0, battery_power_kwh_per_slot=0.0,
            soc_final_min=0.0, soc_final_max=1.0,
        )
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({k: getattr(cfg, k) for k in RecConfig.__dataclass_fields__}))
        out = tmp_path / "out"
        rc = cli_main([
            "emit", "--config", str(cfg_path), "--data-dir", str(data_dir),
            "--out-dir", str(out), "--nm", "1", "--nr", "1",
        ])
        assert rc == 0
        assert (out / "instance.lp").exists()
        sidecar = json.loads((out / "instance.vars.json").read_text())
        assert sidecar["sell_qty_k0"]["symbol"] == "sell_qty"

    def test_plan_single_day(self, tmp_path):
        data = flat_week(n_days=1)
        data_dir = tmp_path / "data"
        week_to_csvs(data, data_dir)
        cfg = small_config(
            K=K, battery_capacity_kwh=0.0, battery_power_kwh_per_slot=0.0,
            soc_final_min=0.0, soc_final_max=1.0,
        )
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({k: getattr(cfg, k) for k in RecConfig.__dataclass_fields__}))
        out = tmp_path / "out"
        rc = cli_main([
            "plan", "--config", str(cfg_path), "--data-dir", str(data_dir),
            "--out-dir", str(out), "--nm", "1", "--nr", "1", "--backend", "reference",
            "--day", "0",
        ])
        assert rc == 0
        plan = json.loads((out / "plan.json").read_text())
        assert "planner_objective" in plan
        assert len(plan["bids"]) == K


def test_load_week_data_roundtrip(tmp_path):
    data = flat_week(n_days=2)
    week_to_csvs(data, tmp_path)
    loaded = load_week_data(tmp_path, K)
    assert np.allclose(loaded.energy_history, data.energy_history)
    assert np.allclose(loaded.known_prices, data.known_prices)
    assert loaded.n_days == 2
