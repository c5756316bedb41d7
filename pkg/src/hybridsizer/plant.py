"""Physical model of the DC-coupled PV-battery plant.

Units: power in MW, energy in MWh, time in hours, money in dollars.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

# Below this size (MW or MWh) the battery is treated as absent.
EPS_BAT = 1e-6
SOC_TOL = 1e-9


class SocBoundError(RuntimeError):
    """Raised when a SOC update leaves [S_min, S_max].

    The bidding strategy guarantees feasibility, so this always signals an
    upstream bug and is never clamped away.
    """


@dataclass(frozen=True)
class DesignVector:
    P_pv: float
    E_bat: float
    P_bat: float

    def __post_init__(self):
        for name in ("P_pv", "E_bat", "P_bat"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @property
    def has_battery(self) -> bool:
        return self.E_bat >= EPS_BAT and self.P_bat >= EPS_BAT

    @property
    def effective_P_bat(self) -> float:
        return self.P_bat if self.has_battery else 0.0

    @property
    def effective_E_bat(self) -> float:
        return self.E_bat if self.has_battery else 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.P_pv, self.E_bat, self.P_bat], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "DesignVector":
        a = np.maximum(np.asarray(arr, dtype=float), 0.0)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class PlantParams:
    """Plant, market-requirement and settlement constants.

    Defaults follow the reference case: a 10 MW unidirectional POI, 95 %
    one-way efficiencies, SOC window [0.1, 0.9] and hourly settlement.
    """

    P_poi_min: float = 0.0
    P_poi_max: float = 10.0
    eta_c: float = 0.95
    eta_d: float = 0.95
    S_min: float = 0.1
    S_max: float = 0.9
    beta_deg: float = 1.0
    dt: float = 1.0
    H_res: float = 0.5
    H_up: float = 0.35
    H_dn: float = 0.35
    kappa: float = 0.7
    H_cr: float = 4.0
    phi_pv: float = 0.4
    pi_imb: float = 1.0
    # PV inverter rating, only used by the co-located configuration;
    # None means equal to P_poi_max.
    P_inv: float | None = None

    def __post_init__(self):
        if not (self.P_poi_min <= 0.0 <= self.P_poi_max) or self.P_poi_max <= self.P_poi_min:
            raise ValueError("need P_poi_min <= 0 <= P_poi_max with a non-empty range")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if not (0 <= self.S_min < self.S_max <= 1):
            raise ValueError("need 0 <= S_min < S_max <= 1")
        if not (0 <= self.kappa <= 1 and 0 <= self.phi_pv <= 1):
            raise ValueError("kappa and phi_pv must lie in [0, 1]")
        for name in ("dt", "H_res", "H_up", "H_dn", "H_cr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.beta_deg < 0 or self.pi_imb < 0:
            raise ValueError("beta_deg and pi_imb must be >= 0")
        if self.P_inv is not None and self.P_inv < 0:
            raise ValueError("P_inv must be >= 0")

    @property
    def P_poi(self) -> float:
        return self.P_poi_max - self.P_poi_min

    @property
    def inverter_limit(self) -> float:
        return self.P_poi_max if self.P_inv is None else self.P_inv

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PlantState:
    soc: float


@dataclass(frozen=True)
class CostParams:
    """Capital cost assumptions ($/kW, $/kWh, years, $/kW-month)."""

    c_pv: float = 1080.0
    life_pv: float = 20.0
    c_bat_e: float = 241.0
    c_bat_p: float = 372.0
    life_bat: float = 5.0
    lambda_cap: float = 8.31
    discount_rate: float = 0.0

    def __post_init__(self):
        for name in ("c_pv", "life_pv", "c_bat_e", "c_bat_p", "life_bat", "lambda_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.life_pv <= 0 or self.life_bat <= 0:
            raise ValueError("lifetimes must be > 0")
        if self.discount_rate < 0:
            raise ValueError("discount_rate must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def check_soc(soc: float, params: PlantParams) -> None:
    if not (params.S_min - SOC_TOL <= soc <= params.S_max + SOC_TOL):
        raise ValueError(f"soc {soc} outside [{params.S_min}, {params.S_max}]")


def energy_margins(state: PlantState, design: DesignVector, params: PlantParams) -> tuple[float, float]:
    """Dischargeable and chargeable energy (MWh) measured at the DC bus."""
    if not design.has_battery:
        return 0.0, 0.0
    e_up = params.eta_d * design.E_bat * (state.soc - params.S_min)
    e_dn = design.E_bat * (params.S_max - state.soc) / params.eta_c
    return max(e_up, 0.0), max(e_dn, 0.0)


def soc_step(state: PlantState, x_chgE: float, x_chgAS: float, x_disE: float, x_disAS: float,
             design: DesignVector, params: PlantParams) -> PlantState:
    """Advance the SOC by one interval given realized battery energy flows (MWh)."""
    flows = (x_chgE, x_chgAS, x_disE, x_disAS)
    if min(flows) < 0:
        raise ValueError(f"battery flows must be >= 0, got {flows}")
    if not design.has_battery:
        if max(flows) > 0:
            raise SocBoundError("nonzero battery flow with no battery installed")
        return state
    soc = (state.soc
           + params.eta_c * (x_chgE + x_chgAS) / design.E_bat
           - (x_disE + x_disAS) / (params.eta_d * design.E_bat))
    if soc < params.S_min - SOC_TOL or soc > params.S_max + SOC_TOL:
        raise SocBoundError(f"soc {soc!r} outside [{params.S_min}, {params.S_max}] "
                            f"(flows chg={x_chgE + x_chgAS}, dis={x_disE + x_disAS})")
    # rounding-level excursions only
    return PlantState(min(max(soc, params.S_min), params.S_max))


def degradation_cost(x_chg_total: float, x_dis_total: float, params: PlantParams) -> float:
    return params.beta_deg * (x_chg_total + x_dis_total)


def _annuity(life: float, rate: float) -> float:
    if rate == 0:
        return 1.0 / life
    return rate / (1.0 - (1.0 + rate) ** (-life))


def annualized_capex(design: DesignVector, costs: CostParams) -> float:
    """Annualized capital cost in $/yr (straight-line unless a discount rate is set)."""
    pv = costs.c_pv * design.P_pv * _annuity(costs.life_pv, costs.discount_rate)
    bat = (costs.c_bat_e * design.E_bat + costs.c_bat_p * design.P_bat) * _annuity(costs.life_bat, costs.discount_rate)
    return 1000.0 * (pv + bat)
