import numpy as np
import pytest
from hypothesis import given, strategies as st

import hand_values as hv
from hybridsizer.plant import (CostParams, DesignVector, PlantParams, PlantState, SocBoundError, annualized_capex,
                               degradation_cost, energy_margins, soc_step)

E_DN_REF = 8.421052631578947  # 20 * 0.4 / 0.95


def test_frozen_values_match_exact_arithmetic():
    e_up, e_dn = hv.margins(hv.F(1, 2), hv.F(20))
    assert float(e_up) == 7.6
    assert float(e_dn) == pytest.approx(E_DN_REF, abs=1e-15)
    pv, bat = hv.capex()
    assert (pv, bat) == (594_000, 1_336_000)


def test_energy_margins_reference(design, params):
    e_up, e_dn = energy_margins(PlantState(0.5), design, params)
    assert e_up == pytest.approx(7.6, abs=1e-12)
    assert e_dn == pytest.approx(E_DN_REF, abs=1e-12)


def test_energy_margins_at_soc_min(design, params):
    assert energy_margins(PlantState(params.S_min), design, params)[0] == 0.0


def test_energy_margins_without_battery(params):
    assert energy_margins(PlantState(0.5), DesignVector(11, 0, 5), params) == (0.0, 0.0)
    assert energy_margins(PlantState(0.5), DesignVector(11, 20, 1e-7), params) == (0.0, 0.0)


def test_soc_step_charge(design, params):
    assert soc_step(PlantState(0.5), 2.0, 0.0, 0.0, 0.0, design, params).soc == pytest.approx(0.595, abs=1e-12)


def test_soc_step_zero_flows(design, params):
    assert soc_step(PlantState(0.5), 0, 0, 0, 0, design, params).soc == 0.5


def test_soc_step_overcharge_faults(design, params):
    with pytest.raises(SocBoundError):
        soc_step(PlantState(0.9), 1.0, 0, 0, 0, design, params)


def test_soc_step_rejects_negative_flow(design, params):
    with pytest.raises(ValueError):
        soc_step(PlantState(0.5), -1.0, 0, 0, 0, design, params)


def test_flow_into_missing_battery_faults(params):
    with pytest.raises(SocBoundError):
        soc_step(PlantState(0.5), 1.0, 0, 0, 0, DesignVector(5, 0, 0), params)


def test_degradation_cost(params):
    assert degradation_cost(2, 1, params) == 3.0
    assert degradation_cost(0, 0, params) == 0.0
    assert degradation_cost(2, 1, PlantParams(beta_deg=0.0)) == 0.0


def test_annualized_capex_parts():
    c = CostParams()
    assert annualized_capex(DesignVector(11, 0, 0), c) == pytest.approx(594_000.0)
    assert annualized_capex(DesignVector(0, 20, 5), c) == pytest.approx(1_336_000.0)
    assert annualized_capex(DesignVector(0, 0, 0), c) == 0.0


def test_discounted_capex_exceeds_straight_line():
    d = DesignVector(11, 20, 5)
    assert annualized_capex(d, CostParams(discount_rate=0.05)) > annualized_capex(d, CostParams())


@pytest.mark.parametrize("kwargs", [dict(P_poi_min=1.0), dict(eta_c=0.0), dict(eta_d=1.5), dict(S_min=0.9, S_max=0.1),
                                    dict(kappa=1.2), dict(phi_pv=-0.1), dict(H_res=0.0), dict(dt=0.0)])
def test_plant_params_invariants(kwargs):
    with pytest.raises(ValueError):
        PlantParams(**kwargs)


def test_design_vector_rejects_negative():
    with pytest.raises(ValueError):
        DesignVector(-1.0, 0, 0)
    assert DesignVector.from_array([-1.0, 2.0, 3.0]) == DesignVector(0.0, 2.0, 3.0)


@given(st.floats(0.1, 0.9), st.floats(0.0, 1.0), st.floats(0.1, 100.0))
def test_charge_then_discharge_is_inverse(soc, frac, E):
    p = PlantParams()
    d = DesignVector(0, E, 1.0)
    room = E * (p.S_max - soc) / p.eta_c
    x = frac * room
    s1 = soc_step(PlantState(soc), x, 0, 0, 0, d, p)
    s2 = soc_step(s1, 0, 0, p.eta_c * p.eta_d * x, 0, d, p)
    assert abs(s2.soc - soc) <= 1e-12


@given(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.0, 100.0))
def test_energy_margins_monotone_in_soc(s1, s2, E):
    p = PlantParams()
    d = DesignVector(0, E, 1.0)
    lo, hi = min(s1, s2), max(s1, s2)
    u_lo, d_lo = energy_margins(PlantState(lo), d, p)
    u_hi, d_hi = energy_margins(PlantState(hi), d, p)
    assert u_lo <= u_hi and d_lo >= d_hi


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 10))
def test_costs_homogeneous_degree_one(a, b, k):
    p = PlantParams()
    c = CostParams()
    assert degradation_cost(k * a, k * b, p) == pytest.approx(k * degradation_cost(a, b, p), rel=1e-12, abs=1e-9)
    d = DesignVector(a, b, a / 2)
    dk = DesignVector(k * a, k * b, k * a / 2)
    assert annualized_capex(dk, c) == pytest.approx(k * annualized_capex(d, c), rel=1e-12, abs=1e-6)
    assert degradation_cost(a + b, a, p) == pytest.approx(degradation_cost(a, 0, p) + degradation_cost(b, a, p))
