import hypothesis
import numpy as np
import pytest

from recbid.core import DayTrajectory, RecConfig, ScenarioSet
from recbid.milp import build_instance

hypothesis.settings.register_profile(
    "suite", max_examples=25, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("suite")


def small_config(K=3, **overrides) -> RecConfig:
    base = dict(
        horizon_hours=K,
        p_export_max=60.0,
        p_import_max=60.0,
        battery_capacity_kwh=80.0,
        battery_power_kwh_per_slot=30.0,
        eta_charge=0.95,
        eta_discharge=0.95,
        soc_initial=0.5,
        soc_final_min=0.3,
        soc_final_max=0.7,
        incentive_shared=0.119,
        renewable_only_charging=True,
    )
    base.update(overrides)
    return RecConfig(**base)


def price_set(sell, buy, probs=None) -> ScenarioSet:
    sell = np.atleast_2d(np.asarray(sell, dtype=float))
    buy = np.atleast_2d(np.asarray(buy, dtype=float))
    n = sell.shape[0]
    probs = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float)
    return ScenarioSet(
        channels=("price_sell_max", "price_buy_min"),
        values=np.stack([sell, buy], axis=1),
        probabilities=probs,
    )


def energy_set(pv, load, md, probs=None) -> ScenarioSet:
    pv = np.atleast_2d(np.asarray(pv, dtype=float))
    load = np.atleast_2d(np.asarray(load, dtype=float))
    md = np.atleast_2d(np.asarray(md, dtype=float))
    n = pv.shape[0]
    probs = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float)
    return ScenarioSet(
        channels=("pv", "load", "member_demand"),
        values=np.stack([pv, load, md], axis=1),
        probabilities=probs,
    )


def known_prices(ce, ci):
    return (
        DayTrajectory(np.asarray(ce, dtype=float), "price_export"),
        DayTrajectory(np.asarray(ci, dtype=float), "price_import"),
    )


def random_inputs(seed, K=3, nm=2, nr=2):
    """One member of the randomized community-instance family.

    Export tariffs sit below import tariffs and service prices are spread
    between them, which is the economically ordinary regime.
    """
    rng = np.random.default_rng(seed)
    cfg = small_config(
        K=K,
        p_export_max=float(rng.uniform(40, 80)),
        p_import_max=float(rng.uniform(40, 80)),
        battery_capacity_kwh=float(rng.choice([0.0, rng.uniform(40, 120)])),
        battery_power_kwh_per_slot=float(rng.uniform(10, 40)),
        eta_charge=float(rng.uniform(0.85, 1.0)),
        eta_discharge=float(rng.uniform(0.85, 1.0)),
        soc_initial=float(rng.uniform(0.3, 0.7)),
        soc_final_min=float(rng.uniform(0.0, 0.3)),
        soc_final_max=float(rng.uniform(0.7, 1.0)),
        incentive_shared=float(rng.choice([0.0, rng.uniform(0.05, 0.15)])),
        renewable_only_charging=bool(rng.integers(0, 2)),
    )
    sell = rng.uniform(0.15, 0.40, (nm, K))
    buy = rng.uniform(0.10, 0.16, (nm, K))
    prices = price_set(sell, buy)
    pv = rng.uniform(0.0, 35.0, (nr, K))
    pv[rng.random((nr, K)) < 0.2] = 0.0
    load = rng.uniform(2.0, 12.0, (nr, K))
    md = rng.uniform(5.0, 25.0, (nr, K))
    energies = energy_set(pv, load, md)
    kp = known_prices(rng.uniform(0.05, 0.09, K), rng.uniform(0.20, 0.30, K))
    return cfg, prices, energies, kp


def random_instance(seed, K=3, nm=2, nr=2):
    cfg, prices, energies, kp = random_inputs(seed, K=K, nm=nm, nr=nr)
    return build_instance(cfg, prices, energies, kp)


@pytest.fixture
def tiny_instance():
    """Battery-free single-hour instance with a hand-checkable optimum."""
    cfg = small_config(
        K=1,
        p_export_max=50.0,
        p_import_max=50.0,
        battery_capacity_kwh=0.0,
        battery_power_kwh_per_slot=0.0,
        soc_final_min=0.0,
        soc_final_max=1.0,
        incentive_shared=0.0,
        epsilon_max=0.0,
        renewable_only_charging=False,
    )
    prices = price_set([[0.30]], [[0.10]])
    energies = energy_set([[40.0]], [[10.0]], [[20.0]])
    kp = known_prices([0.10], [0.25])
    return build_instance(cfg, prices, energies, kp)
