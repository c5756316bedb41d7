"""Serial capacity allocation: normalized actions to hard-feasible bids.

Capacity is allocated in the order reserve -> regulation up -> regulation
down -> energy. Each stage consumes power and energy headroom before the
next one sees it, so the resulting bid set is deliverable under the worst
case activation durations H_res, H_up and H_dn.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np

from .plant import DesignVector, PlantParams, PlantState, energy_margins


@dataclass(frozen=True)
class AgentAction:
    """Five normalized decisions, clamped into [0, 1] at construction."""

    a_e: float = 0.0
    a_res: float = 0.0
    a_up: float = 0.0
    a_dn: float = 0.0
    a_imb: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not np.isfinite(v):
                raise ValueError(f"{f.name} is not finite")
            object.__setattr__(self, f.name, min(max(v, 0.0), 1.0))

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "AgentAction":
        return cls(*(float(x) for x in arr))

    def as_array(self) -> np.ndarray:
        return np.array([self.a_e, self.a_res, self.a_up, self.a_dn, self.a_imb])


@dataclass(frozen=True)
class PvForecast:
    p_pred: float

    def __post_init__(self):
        if not self.p_pred >= 0:
            raise ValueError(f"p_pred must be >= 0, got {self.p_pred}")


@dataclass(frozen=True)
class BidSet:
    """Cleared commitments for one interval (MW).

    ``b_e`` is the scheduled POI injection; ``b_res``/``b_up``/``b_dn`` are
    AS capacities. The remaining fields record how regulation is split
    between PV and battery and what battery margin is left for energy.
    """

    b_e: float = 0.0
    b_res: float = 0.0
    b_up: float = 0.0
    b_dn: float = 0.0
    b_up_pv: float = 0.0
    b_up_bat: float = 0.0
    b_dn_bat: float = 0.0
    B_dis: float = 0.0
    B_chg: float = 0.0
    M_pv: float = 0.0
    # co-located split of the energy schedule (hybrid: b_e_pv=b_e, b_e_bat=0 unused)
    b_e_pv: float = 0.0
    b_e_bat: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# forecasting

def forecast_pv(pv_history: Sequence[float]) -> PvForecast:
    """Persistence forecast: the next interval repeats the last observation."""
    if len(pv_history) == 0:
        raise ValueError("empty PV history")
    return PvForecast(max(float(pv_history[-1]), 0.0))


class PersistenceForecaster:
    name = "persistence"

    def __call__(self, pv_history: Sequence[float]) -> PvForecast:
        return forecast_pv(pv_history)


class ExponentialSmoothingForecaster:
    """Simple exponential smoothing seeded with the first observation."""

    name = "exp_smoothing"

    def __init__(self, alpha: float = 0.5):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self.alpha = alpha

    def __call__(self, pv_history: Sequence[float]) -> PvForecast:
        if len(pv_history) == 0:
            raise ValueError("empty PV history")
        s = float(pv_history[0])
        for x in pv_history[1:]:
            s = self.alpha * float(x) + (1.0 - self.alpha) * s
        return PvForecast(max(s, 0.0))


class PerfectForecaster:
    """Scenario-only forecaster that is handed the realized value.

    The environment detects ``peeks`` and passes the true availability of
    the current interval instead of the history. This deliberately breaks
    causality and exists for controlled comparisons only.
    """

    name = "perfect"
    peeks = True

    def __call__(self, realized: Sequence[float]) -> PvForecast:
        return PvForecast(max(float(realized[-1]), 0.0))


Forecaster = Callable[[Sequence[float]], PvForecast]


# ---------------------------------------------------------------------------
# individual allocation stages

def reserve_bid(a_res: float, E_up: float, design: DesignVector, params: PlantParams) -> float:
    """Contingency reserve, battery only."""
    if not design.has_battery:
        return 0.0
    return max(min(a_res * params.P_poi, design.P_bat, E_up / params.H_res), 0.0)


def regup_bid(a_up: float, b_res: float, E_up: float, p_pred: float, design: DesignVector,
              params: PlantParams, M_pv: float | None = None) -> tuple[float, float, float]:
    """Regulation up and its split into (total, PV share, battery share)."""
    if M_pv is None:
        M_pv = params.kappa * p_pred
    P_bat = design.effective_P_bat
    M_bat_up = max(min(P_bat - b_res, (E_up - b_res * params.H_res) / params.H_up), 0.0)
    b_up = max(min(a_up * (params.P_poi - b_res), M_bat_up + M_pv), 0.0)
    b_up_pv = max(b_up - M_bat_up, 0.0)
    return b_up, b_up_pv, b_up - b_up_pv


def regdn_bid(a_dn: float, b_res: float, b_up: float, b_up_pv: float, E_dn: float, p_pred: float,
              design: DesignVector, params: PlantParams, M_pv: float | None = None) -> tuple[float, float]:
    """Regulation down and the part of it that must be absorbed by charging."""
    if M_pv is None:
        M_pv = params.kappa * p_pred
    M_bat_dn = min(design.effective_P_bat, E_dn / params.H_dn)
    b_dn = max(min(a_dn * (params.P_poi - b_res - b_up), M_bat_dn + M_pv - b_up_pv), 0.0)
    b_dn_bat = min(max(b_dn - (M_pv - b_up_pv), 0.0), b_dn)
    return b_dn, b_dn_bat


def battery_margins(b_res: float, b_up_bat: float, b_dn_bat: float, E_up: float, E_dn: float,
                    design: DesignVector, params: PlantParams) -> tuple[float, float]:
    """Battery discharge/charge power left for the energy market (MW)."""
    P_bat = design.effective_P_bat
    B_dis = min(P_bat - b_res - b_up_bat, (E_up - b_res * params.H_res - b_up_bat * params.H_up) / params.dt)
    B_chg = min(P_bat - b_dn_bat, (E_dn - b_dn_bat * params.H_dn) / params.dt)
    return max(B_dis, 0.0), max(B_chg, 0.0)


def energy_bid(a_e: float, b_res: float, b_up: float, b_dn: float, b_up_pv: float, b_up_bat: float,
               b_dn_bat: float, E_up: float, E_dn: float, p_pred: float, design: DesignVector,
               params: PlantParams) -> tuple[float, float, float]:
    """Energy schedule within the POI range, steered toward the PV prediction.

    Returns ``(b_e, B_dis, B_chg)``. The desired point is first clamped into
    the prediction-based range; the POI range is applied last and wins when
    the two ranges are disjoint.
    """
    B_dis, B_chg = battery_margins(b_res, b_up_bat, b_dn_bat, E_up, E_dn, design, params)
    lo_poi = params.P_poi_min + b_dn
    hi_poi = params.P_poi_max - b_res - b_up
    b_tilde = a_e * hi_poi + (1.0 - a_e) * lo_poi
    center = p_pred - b_up_pv
    b_e = min(max(b_tilde, center - B_chg), center + B_dis)
    b_e = min(max(b_e, lo_poi), hi_poi)
    return b_e, B_dis, B_chg


# ---------------------------------------------------------------------------
# composed strategies

def build_hybrid_bids(action: AgentAction, state: PlantState, forecast: PvForecast,
                      design: DesignVector, params: PlantParams) -> BidSet:
    E_up, E_dn = energy_margins(state, design, params)
    p_pred = forecast.p_pred
    b_res = reserve_bid(action.a_res, E_up, design, params)
    b_up, b_up_pv, b_up_bat = regup_bid(action.a_up, b_res, E_up, p_pred, design, params)
    b_dn, b_dn_bat = regdn_bid(action.a_dn, b_res, b_up, b_up_pv, E_dn, p_pred, design, params)
    b_e, B_dis, B_chg = energy_bid(action.a_e, b_res, b_up, b_dn, b_up_pv, b_up_bat, b_dn_bat,
                                   E_up, E_dn, p_pred, design, params)
    return BidSet(b_e=b_e, b_res=b_res, b_up=b_up, b_dn=b_dn, b_up_pv=b_up_pv, b_up_bat=b_up_bat,
                  b_dn_bat=b_dn_bat, B_dis=B_dis, B_chg=B_chg, M_pv=params.kappa * p_pred,
                  b_e_pv=b_e, b_e_bat=0.0)


def build_colocated_bids(action: AgentAction, state: PlantState, forecast: PvForecast,
                         design: DesignVector, params: PlantParams,
                         P_inv: float | None = None) -> tuple[BidSet, BidSet]:
    """Bids for AC-coupled PV and battery submitted as separate resources.

    AS capacity is allocated exactly as in the hybrid case except that the
    PV contribution is capped by the PV inverter. The energy schedule is
    split into a PV bid (predicted inverter output net of regulation-up
    headroom) and a battery bid obtained by clipping the residual to the
    battery margins. Returns ``(pv_bids, battery_bids)``; use
    :func:`combine_bids` for the aggregate seen at the POI.
    """
    if P_inv is None:
        P_inv = params.inverter_limit
    E_up, E_dn = energy_margins(state, design, params)
    p_pred = forecast.p_pred
    pv_hat = min(p_pred, P_inv)
    M_pv = min(params.kappa * p_pred, P_inv)
    b_res = reserve_bid(action.a_res, E_up, design, params)
    b_up, b_up_pv, b_up_bat = regup_bid(action.a_up, b_res, E_up, p_pred, design, params, M_pv=M_pv)
    b_dn, b_dn_bat = regdn_bid(action.a_dn, b_res, b_up, b_up_pv, E_dn, p_pred, design, params, M_pv=M_pv)
    b_e, B_dis, B_chg = energy_bid(action.a_e, b_res, b_up, b_dn, b_up_pv, b_up_bat, b_dn_bat,
                                   E_up, E_dn, pv_hat, design, params)
    b_e_pv = pv_hat - b_up_pv
    residual = b_e - b_e_pv
    b_e_bat = min(residual, B_dis) if residual > 0 else max(residual, -B_chg)
    # the POI range still binds the aggregate schedule; with a bidirectional
    # POI and large AS bids the PV schedule may have to go negative, which
    # then settles as surplus imbalance
    lo_poi = params.P_poi_min + b_dn
    hi_poi = params.P_poi_max - b_res - b_up
    if b_e_pv + b_e_bat > hi_poi:
        b_e_pv = hi_poi - b_e_bat
    elif b_e_pv + b_e_bat < lo_poi:
        b_e_pv = lo_poi - b_e_bat
    pv = BidSet(b_e=b_e_pv, b_up=b_up_pv, b_dn=b_dn - b_dn_bat, b_up_pv=b_up_pv, M_pv=M_pv,
                b_e_pv=b_e_pv)
    bat = BidSet(b_e=b_e_bat, b_res=b_res, b_up=b_up_bat, b_dn=b_dn_bat, b_up_bat=b_up_bat,
                 b_dn_bat=b_dn_bat, B_dis=B_dis, B_chg=B_chg, b_e_bat=b_e_bat)
    return pv, bat


def combine_bids(pv: BidSet, bat: BidSet) -> BidSet:
    """Aggregate co-located bids into the POI-level view used for settlement."""
    return BidSet(b_e=pv.b_e + bat.b_e, b_res=bat.b_res, b_up=pv.b_up + bat.b_up,
                  b_dn=pv.b_dn + bat.b_dn, b_up_pv=pv.b_up_pv, b_up_bat=bat.b_up_bat,
                  b_dn_bat=bat.b_dn_bat, B_dis=bat.B_dis, B_chg=bat.B_chg, M_pv=pv.M_pv,
                  b_e_pv=pv.b_e, b_e_bat=bat.b_e)
