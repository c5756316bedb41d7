import numpy as np
import pytest

import hand_values as hv
from hybridsizer.plant import DesignVector, PlantParams, PlantState, energy_margins
from hybridsizer.serial_bidding import (AgentAction, ExponentialSmoothingForecaster, PerfectForecaster,
                                        PersistenceForecaster, PvForecast, battery_margins, build_colocated_bids,
                                        build_hybrid_bids, combine_bids, energy_bid, forecast_pv, regdn_bid,
                                        regup_bid, reserve_bid)

RUNNING = {"b_res": 5.0, "M_bat_up": 0.0, "M_pv": 4.2, "b_up": 4.2, "b_up_pv": 4.2, "M_bat_dn": 5.0,
           "b_dn": 0.8, "b_dn_bat": 0.8, "B_dis": 0.0, "B_chg": 4.2, "poi_lo": 0.8, "poi_hi": 0.8,
           "pred_lo": -2.4, "pred_hi": 1.8}


def test_frozen_running_example_matches_exact_arithmetic():
    exact = hv.running_example()
    for k, v in RUNNING.items():
        assert float(exact[k]) == pytest.approx(v, abs=1e-12), k


def test_forecasters():
    assert forecast_pv([1.0, 6.0]).p_pred == 6.0
    assert forecast_pv([3.0, 0.0]).p_pred == 0.0
    assert PersistenceForecaster()([2.0]).p_pred == 2.0
    assert ExponentialSmoothingForecaster(0.5)([4.0, 8.0]).p_pred == 6.0
    assert PerfectForecaster()([1.0, 7.5]).p_pred == 7.5
    with pytest.raises(ValueError):
        forecast_pv([])
    with pytest.raises(ValueError):
        PvForecast(-1.0)


def test_action_clamped():
    a = AgentAction(1.5, -0.2, 0.3, 0.4, 2.0)
    assert a.as_array().tolist() == [1.0, 0.0, 0.3, 0.4, 1.0]
    with pytest.raises(ValueError):
        AgentAction(float("nan"))


def test_reserve_bid(design, params):
    assert reserve_bid(0.8, 7.6, design, params) == 5.0
    assert reserve_bid(0.0, 7.6, design, params) == 0.0
    assert reserve_bid(0.8, 0.0, design, params) == 0.0


def test_regup_bid(design, params):
    b_up, b_up_pv, b_up_bat = regup_bid(1.0, 5.0, 7.6, 6.0, design, params)
    assert (b_up, b_up_pv, b_up_bat) == pytest.approx((4.2, 4.2, 0.0), abs=1e-12)
    assert regup_bid(0.0, 5.0, 7.6, 6.0, design, params) == (0.0, 0.0, 0.0)
    # no PV: the battery covers everything up to its power
    b_up, b_up_pv, b_up_bat = regup_bid(1.0, 0.0, 7.6, 0.0, design, params)
    assert (b_up, b_up_pv, b_up_bat) == (5.0, 0.0, 5.0)


def test_regdn_bid(design, params):
    e_dn = energy_margins(PlantState(0.5), design, params)[1]
    b_dn, b_dn_bat = regdn_bid(1.0, 5.0, 4.2, 4.2, e_dn, 6.0, design, params)
    assert (b_dn, b_dn_bat) == pytest.approx((0.8, 0.8), abs=1e-12)
    assert regdn_bid(0.0, 5.0, 4.2, 4.2, e_dn, 6.0, design, params) == (0.0, 0.0)
    assert regdn_bid(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, design, params) == (0.0, 0.0)


def test_energy_bid_running_example(design, params):
    e_up, e_dn = energy_margins(PlantState(0.5), design, params)
    for a_e in (0.0, 0.37, 1.0):
        b_e, B_dis, B_chg = energy_bid(a_e, 5.0, 4.2, 0.8, 4.2, 0.0, 0.8, e_up, e_dn, 6.0, design, params)
        assert b_e == pytest.approx(0.8, abs=1e-12)
        assert B_dis == pytest.approx(0.0, abs=1e-12)
        assert B_chg == pytest.approx(4.2, abs=1e-12)


def test_energy_bid_no_as(design, params):
    e_up, e_dn = energy_margins(PlantState(0.5), design, params)
    b_e, B_dis, B_chg = energy_bid(1.0, 0, 0, 0, 0, 0, 0, e_up, e_dn, 6.0, design, params)
    assert (b_e, B_dis, B_chg) == (10.0, 5.0, 5.0)
    # a_e = 0 sits on the lower prediction edge p_pred - B_chg = 1
    assert energy_bid(0.0, 0, 0, 0, 0, 0, 0, e_up, e_dn, 6.0, design, params)[0] == 1.0


def test_energy_bid_poi_wins_when_ranges_disjoint(params):
    # prediction range [12, 12] lies above the POI range [0, 10]
    d = DesignVector(20, 0, 0)
    assert energy_bid(0.0, 0, 0, 0, 0, 0, 0, 0, 0, 12.0, d, params)[0] == 10.0


def test_build_hybrid_running_example(design, params):
    b = build_hybrid_bids(AgentAction(0.3, 0.8, 1.0, 1.0, 0.0), PlantState(0.5), PvForecast(6.0), design, params)
    assert (b.b_res, b.b_up, b.b_dn, b.b_e) == pytest.approx((5.0, 4.2, 0.8, 0.8), abs=1e-12)
    assert b.b_up == b.b_up_pv + b.b_up_bat


def test_build_hybrid_zero_actions(design, params):
    b = build_hybrid_bids(AgentAction(), PlantState(0.5), PvForecast(6.0), design, params)
    assert (b.b_res, b.b_up, b.b_dn) == (0.0, 0.0, 0.0)
    assert b.b_e == max(6.0 - b.B_chg, params.P_poi_min)


def test_build_hybrid_without_battery(params):
    d = DesignVector(11, 0, 0)
    b = build_hybrid_bids(AgentAction(0.9, 1.0, 0.5, 0.0, 1.0), PlantState(0.5), PvForecast(6.0), d, params)
    assert b.b_res == 0.0
    assert b.b_up == pytest.approx(min(0.5 * 10, 0.7 * 6.0))
    assert b.B_dis == b.B_chg == 0.0
    assert b.b_e == pytest.approx(6.0 - b.b_up_pv)


def test_colocated_zero_actions(design, params):
    pv, bat = build_colocated_bids(AgentAction(), PlantState(params.S_max), PvForecast(6.0), design, params)
    assert pv.b_e == 6.0
    assert (pv.b_up, pv.b_dn, bat.b_res, bat.b_up, bat.b_dn, bat.b_e) == (0, 0, 0, 0, 0, 0)
    pv, bat = build_colocated_bids(AgentAction(), PlantState(0.5), PvForecast(0.0), design, params)
    assert pv.b_e == 0.0


def test_colocated_pv_bid_net_of_regulation_headroom(params):
    # battery absent: b_up = a_up * P_poi = 2 comes from PV, so b_e_pv = 6 - 2
    d = DesignVector(11, 0, 0)
    pv, bat = build_colocated_bids(AgentAction(0.5, 0.0, 0.2, 0.0), PlantState(0.5), PvForecast(6.0), d, params)
    assert pv.b_up_pv == pytest.approx(2.0)
    assert pv.b_e == pytest.approx(4.0)


def test_colocated_residual_clipped_to_battery_margin(params):
    # energy-limited battery: B_dis = E_up = 0.95 * 20 * (0.15 - 0.1) = 0.95
    d = DesignVector(11, 20, 5)
    soc = 0.1 + 1.0 / (0.95 * 20)  # E_up = 1.0 MWh
    pv, bat = build_colocated_bids(AgentAction(1.0), PlantState(soc), PvForecast(7.0), d, params)
    assert bat.B_dis == pytest.approx(1.0)
    assert pv.b_e == 7.0
    # desired aggregate min(10, 7 + 1) = 8, residual 1 against B_dis 1
    assert bat.b_e == pytest.approx(1.0)
    pv, bat = build_colocated_bids(AgentAction(1.0), PlantState(soc), PvForecast(6.0), d, params)
    assert bat.b_e == pytest.approx(1.0)


def test_combined_colocated_bids_respect_poi(design, params):
    rng = np.random.default_rng(0)
    for _ in range(500):
        a = AgentAction(*rng.uniform(0, 1, 5))
        pv, bat = build_colocated_bids(a, PlantState(rng.uniform(0.1, 0.9)), PvForecast(rng.uniform(0, 14)),
                                       design, params)
        b = combine_bids(pv, bat)
        assert params.P_poi_min + b.b_dn - 1e-9 <= b.b_e <= params.P_poi_max - b.b_res - b.b_up + 1e-9
        assert -b.B_chg - 1e-12 <= bat.b_e <= b.B_dis + 1e-12


def test_reserve_first_reduces_regup(design, params):
    e_up = 7.6
    with_res = regup_bid(1.0, reserve_bid(1.0, e_up, design, params), e_up, 0.0, design, params)[0]
    without = regup_bid(1.0, 0.0, e_up, 0.0, design, params)[0]
    assert with_res <= without


def test_battery_margins_nonnegative(design, params):
    assert battery_margins(5.0, 5.0, 5.0, 0.0, 0.0, design, params) == (0.0, 0.0)
