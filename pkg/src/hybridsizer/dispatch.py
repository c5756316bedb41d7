"""Real-time resolution of PV deviations, AS activations and SOC update."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .plant import DesignVector, PlantParams, PlantState, energy_margins, soc_step
from .serial_bidding import BidSet


@dataclass(frozen=True)
class ActivationOutcome:
    """Realized activation durations within the interval (hours)."""

    h_res: float = 0.0
    h_up: float = 0.0
    h_dn: float = 0.0

    def check(self, params: PlantParams) -> None:
        if not (0 <= self.h_res <= params.H_res and 0 <= self.h_up <= params.H_up
                and 0 <= self.h_dn <= params.H_dn):
            raise ValueError(f"activation {self} outside the required durations")

    @classmethod
    def worst_case(cls, params: PlantParams) -> "ActivationOutcome":
        return cls(params.H_res, params.H_up, params.H_dn)


@dataclass(frozen=True)
class ActivationModel:
    """Configuration of realized AS activations.

    ``kind="none"`` (default) never activates. ``kind="stochastic"`` fires
    the full reserve duration with probability ``p_res_event`` and draws
    regulation durations uniformly on their admissible ranges.
    ``kind="worst_case"`` always activates for the full durations.
    """

    kind: str = "none"
    p_res_event: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "stochastic", "worst_case"):
            raise ValueError(f"unknown activation model {self.kind!r}")
        if not 0 <= self.p_res_event <= 1:
            raise ValueError("p_res_event must lie in [0, 1]")


def sample_activation(model: ActivationModel, rng: np.random.Generator, params: PlantParams) -> ActivationOutcome:
    if model.kind == "none":
        return ActivationOutcome()
    if model.kind == "worst_case":
        return ActivationOutcome.worst_case(params)
    h_res = params.H_res if rng.random() < model.p_res_event else 0.0
    return ActivationOutcome(h_res, rng.uniform(0.0, params.H_up), rng.uniform(0.0, params.H_dn))


def sample_activations(model: ActivationModel, rng: np.random.Generator, params: PlantParams, T: int) -> np.ndarray:
    """Draw ``T`` outcomes as a (T, 3) array, consuming ``rng`` as T scalar draws would."""
    out = np.zeros((T, 3))
    if model.kind == "none":
        return out
    for t in range(T):
        a = sample_activation(model, rng, params)
        out[t] = (a.h_res, a.h_up, a.h_dn)
    return out


@dataclass(frozen=True)
class DispatchRecord:
    """Realized flows of one interval (MWh unless noted).

    ``x_e`` is the realized net energy injection and ``delta_E = x_e - b_e*dt``.
    ``pv_delivered`` is PV energy sold into the energy market after
    regulation-up headroom and curtailment, so that
    ``x_e = pv_delivered - x_chgE + x_disE``.
    """

    x_e: float
    delta_E: float
    x_chgE: float
    x_disE: float
    x_chgAS: float
    x_disAS: float
    x_cur: float
    p_poi: float
    pv_delivered: float
    soc_before: float
    soc_after: float

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_realtime(bids: BidSet, p_avail: float, a_imb: float, state: PlantState,
                     design: DesignVector, params: PlantParams) -> tuple[float, float, float, float]:
    """Hybrid plant: battery absorbs or covers the PV deviation as far as ``a_imb`` allows.

    Returns ``(x_chgE, x_disE, x_cur, delta_E)``.
    """
    dt = params.dt
    avail_e = p_avail - bids.b_up_pv
    if bids.b_e > avail_e:
        gap = bids.b_e - avail_e
        x_disE = min(a_imb * gap, bids.B_dis) * dt
        return 0.0, x_disE, 0.0, -(gap * dt - x_disE)
    _, E_dn = energy_margins(state, design, params)
    surplus = avail_e - bids.b_e
    b_dn_bat_hat = max(bids.b_dn - avail_e, 0.0)
    B_chg_hat = max(min(design.effective_P_bat - bids.b_dn_bat, (E_dn - b_dn_bat_hat * params.H_dn) / dt), 0.0)
    x_chgE = min(a_imb * surplus, B_chg_hat) * dt
    x_cur = max(p_avail * dt - x_chgE - params.P_poi_max * dt, 0.0)
    return x_chgE, 0.0, x_cur, surplus * dt - x_chgE - x_cur


def as_activation_flows(bids: BidSet, activation: ActivationOutcome, x_chgE: float, E_dn: float) -> tuple[float, float]:
    """Battery energy moved by AS activations: ``(x_chgAS, x_disAS)``.

    Only the battery-settled share of regulation down charges the battery;
    the PV-covered share is met by reducing PV output.
    """
    x_chgAS = max(min(bids.b_dn_bat * activation.h_dn, E_dn - x_chgE), 0.0)
    x_disAS = bids.b_res * activation.h_res + bids.b_up_bat * activation.h_up
    return x_chgAS, x_disAS


def apply_step(state: PlantState, bids: BidSet, p_avail: float, activation: ActivationOutcome, a_imb: float,
               design: DesignVector, params: PlantParams) -> tuple[PlantState, DispatchRecord]:
    """Resolve one hybrid interval and advance the SOC."""
    dt = params.dt
    _, E_dn = energy_margins(state, design, params)
    x_chgE, x_disE, x_cur, delta_E = resolve_realtime(bids, p_avail, a_imb, state, design, params)
    x_chgAS, x_disAS = as_activation_flows(bids, activation, x_chgE, E_dn)
    new_state = soc_step(state, x_chgE, x_chgAS, x_disE, x_disAS, design, params)
    x_e = bids.b_e * dt + delta_E
    pv_delivered = (p_avail - bids.b_up_pv) * dt - x_cur
    rec = DispatchRecord(x_e=x_e, delta_E=delta_E, x_chgE=x_chgE, x_disE=x_disE, x_chgAS=x_chgAS,
                         x_disAS=x_disAS, x_cur=x_cur, p_poi=x_e / dt, pv_delivered=pv_delivered,
                         soc_before=state.soc, soc_after=new_state.soc)
    return new_state, rec


def apply_step_colocated(state: PlantState, bids: BidSet, p_avail: float, activation: ActivationOutcome,
                         design: DesignVector, params: PlantParams) -> tuple[PlantState, DispatchRecord]:
    """Resolve one co-located interval; ``bids`` is the aggregate from ``combine_bids``.

    The battery follows its own schedule exactly, so all imbalance comes
    from the PV resource. PV above the inverter rating is clipped, and PV
    output is curtailed further if the POI would otherwise be exceeded.
    """
    dt = params.dt
    P_inv = params.inverter_limit
    _, E_dn = energy_margins(state, design, params)
    pv_eff = min(p_avail, P_inv)
    x_chgE = max(-bids.b_e_bat, 0.0) * dt
    x_disE = max(bids.b_e_bat, 0.0) * dt
    cur_poi = max(pv_eff + bids.b_e_bat - params.P_poi_max, 0.0) * dt
    x_cur = max(p_avail - P_inv, 0.0) * dt + cur_poi
    pv_delivered = (pv_eff - bids.b_up_pv) * dt - cur_poi
    delta_E = pv_delivered - bids.b_e_pv * dt
    x_chgAS, x_disAS = as_activation_flows(bids, activation, x_chgE, E_dn)
    new_state = soc_step(state, x_chgE, x_chgAS, x_disE, x_disAS, design, params)
    x_e = bids.b_e * dt + delta_E
    rec = DispatchRecord(x_e=x_e, delta_E=delta_E, x_chgE=x_chgE, x_disE=x_disE, x_chgAS=x_chgAS,
                         x_disAS=x_disAS, x_cur=x_cur, p_poi=x_e / dt, pv_delivered=pv_delivered,
                         soc_before=state.soc, soc_after=new_state.soc)
    return new_state, rec
