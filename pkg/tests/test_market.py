"""Spot price process, capacity schedule, fulfillment, and preemption rules."""

from __future__ import annotations

import random

import pytest

from spotsim.market import (CapacityProfile, Market, MarketSpec, PREEMPT_CAPACITY,
                            PREEMPT_PRICE, SpotPriceParams, local_weekday_hour)
from spotsim.money import usd


def make_market(on_demand=1.0, base_capacity=10, trough=0.6, weekend=1.0,
                **price_kw) -> Market:
    params = dict(floor_fraction=0.02, mean_fraction=0.3, volatility=0.0,
                  mean_reversion_rate=1.0, spike_rate=0.0,
                  spike_magnitude_fraction=0.0)
    params.update(price_kw)
    spec = MarketSpec(region="us-east-1", zone="a", instance_type="t",
                      cores=4, memory_gib=8, on_demand_musd=usd(on_demand),
                      base_capacity=base_capacity,
                      price_params=SpotPriceParams(**params),
                      capacity_profile=CapacityProfile(
                          weekday_trough_fraction=trough,
                          business_hours=(9, 17), weekend_fraction=weekend))
    return Market(spec)


# -- price process ------------------------------------------------------------


def test_price_fixed_point_at_mean():
    market = make_market()
    before = market.spot_musd
    assert before == round(0.3 * usd(1.0))
    market.advance_price(300, random.Random(1))
    assert market.spot_musd == before


def test_price_strictly_decreases_toward_mean_from_above():
    market = make_market()
    market.spot_musd = 2 * market.mean_musd
    seen = market.spot_musd
    for _ in range(10):
        market.advance_price(300, random.Random(1))
        assert market.spot_musd < seen
        assert market.spot_musd >= market.mean_musd
        seen = market.spot_musd


def test_price_clamps_to_floor_and_ceiling():
    market = make_market(spike_rate=50.0 * 12, spike_magnitude_fraction=10.0)
    market.advance_price(300, random.Random(3))
    assert market.spot_musd <= market.ceiling_musd == 10 * usd(1.0)

    market = make_market(mean_fraction=0.021)
    market.spot_musd = market.floor_musd
    market.advance_price(300, random.Random(3))
    assert market.spot_musd >= market.floor_musd


def test_price_long_run_mean_tracks_configured_mean():
    # Monte-Carlo oracle: time-average over 10,000 simulated hours should sit
    # within 5% of mean_fraction * on_demand (small lognormal bias included).
    market = make_market(volatility=0.2, mean_reversion_rate=1.0)
    rng = random.Random(99)
    total = 0
    steps = 10000 * 12  # 300 s ticks
    for _ in range(steps):
        total += market.advance_price(300, rng)
    average = total / steps
    target = 0.3 * usd(1.0)
    assert abs(average - target) / target < 0.05


def test_advance_price_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        make_market().advance_price(0, random.Random(1))


# -- capacity schedule ---------------------------------------------------------


def test_capacity_offhours_weekday_is_base():
    market = make_market(base_capacity=1000)
    # Monday 03:00
    assert market.capacity(3 * 3600, epoch_weekday=0) == 1000


def test_capacity_business_hours_trough():
    market = make_market(base_capacity=1000, trough=0.6)
    # Monday 14:00
    assert market.capacity(14 * 3600, epoch_weekday=0) == 600


def test_capacity_weekend_fraction_one_restores_base():
    market = make_market(base_capacity=1000, trough=0.6, weekend=1.0)
    # epoch Monday; Sunday 14:00 is day 6
    t = 6 * 86400 + 14 * 3600
    assert local_weekday_hour(t, 0) == (6, 14)
    assert market.capacity(t, epoch_weekday=0) == 1000


def test_capacity_weekend_fraction_scales():
    market = make_market(base_capacity=1000, weekend=0.5)
    t = 5 * 86400 + 12 * 3600  # Saturday noon
    assert market.capacity(t, epoch_weekday=0) == 500


def test_epoch_weekday_shifts_the_week():
    market = make_market(base_capacity=1000, trough=0.6)
    # epoch on Saturday: t=0 14:00 is a weekend hour
    assert market.capacity(14 * 3600, epoch_weekday=5) == 1000


# -- fulfillment ----------------------------------------------------------------


def test_fulfill_zero_when_bid_not_above_spot():
    market = make_market()
    assert market.fulfillable(market.spot_musd - 1, 5, 0, 0) == 0
    assert market.fulfillable(market.spot_musd, 5, 0, 0) == 0  # strict


def test_fulfill_clamps_to_free_capacity():
    market = make_market(base_capacity=10)
    for iid in range(7):
        market.add_instance(iid, usd(0.5))
    assert market.fulfillable(usd(0.5), 5, 0, 0) == 3


def test_fulfill_rejects_negative_count():
    with pytest.raises(ValueError):
        make_market().fulfillable(usd(0.5), -1, 0, 0)


# -- preemption -----------------------------------------------------------------


def test_price_rise_preempts_underbid_instances():
    market = make_market()
    market.add_instance(1, usd(0.25))
    market.add_instance(2, usd(0.40))
    market.spot_musd = usd(0.30)
    victims = market.check_preemptions(0, 0)
    assert victims == [(1, PREEMPT_PRICE)]
    assert list(market.provisioned) == [2]


def test_no_preemption_when_price_below_bids_and_capacity_ok():
    market = make_market()
    market.add_instance(1, usd(0.25))
    market.add_instance(2, usd(0.25))
    assert market.check_preemptions(0, 0) == []
    assert len(market.provisioned) == 2


def test_capacity_drop_evicts_lowest_bids_oldest_first():
    # Brute-force oracle: sort every provisioned instance by (bid, id) and
    # take exactly k from the front; the market must select the same set.
    rng = random.Random(5)
    for _ in range(50):
        market = make_market(base_capacity=20, trough=0.5)
        population = []
        for iid in range(12):
            bid = usd(rng.choice([0.30, 0.35, 0.40]))
            market.add_instance(iid, bid)
            population.append((bid, iid))
        market.spot_musd = usd(0.29)  # below all bids
        t = 14 * 3600  # business hours: capacity 10, provisioned 12
        expected_k = 12 - market.capacity(t, 0)
        oracle = [iid for _, iid in sorted(population)[:expected_k]]
        victims = market.check_preemptions(t, 0)
        assert [iid for iid, _ in victims] == oracle
        assert all(cause == PREEMPT_CAPACITY for _, cause in victims)
        assert len(market.provisioned) == market.capacity(t, 0)


def test_preemption_mixes_price_and_capacity_victims():
    market = make_market(base_capacity=3)
    market.add_instance(1, usd(0.25))
    market.add_instance(2, usd(0.40))
    market.add_instance(3, usd(0.45))
    market.add_instance(4, usd(0.50))  # over capacity on purpose
    market.spot_musd = usd(0.30)
    victims = dict(market.check_preemptions(0, 0))
    assert victims[1] == PREEMPT_PRICE
    # capacity 3, three survivors fit: no capacity eviction needed
    assert len(victims) == 1

    market.spot_musd = usd(0.41)
    victims = dict(market.check_preemptions(0, 0))
    assert victims[2] == PREEMPT_PRICE
    assert len(market.provisioned) == 2


def test_spot_price_params_validation():
    bad = SpotPriceParams(floor_fraction=0.5, mean_fraction=0.3, volatility=-1,
                          mean_reversion_rate=1, spike_rate=0,
                          spike_magnitude_fraction=0)
    issues = bad.violations()
    assert any("floor" in issue for issue in issues)
    assert any("volatility" in issue for issue in issues)
