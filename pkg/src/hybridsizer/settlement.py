"""Revenue and cost terms: energy with imbalance penalty, AS capacity,
capacity remuneration, per-step reward and the design-level episode return."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

from .dispatch import DispatchRecord
from .plant import DesignVector, PlantParams, degradation_cost
from .serial_bidding import BidSet

# $/kW-month -> $/MW-year
CAP_PRICE_FACTOR = 12.0 * 1000.0


@dataclass(frozen=True)
class PriceQuote:
    lambda_e: float
    lambda_res: float = 0.0
    lambda_up: float = 0.0
    lambda_dn: float = 0.0
    pi_imb: float = 1.0
    lambda_cap: float = 0.0

    def __post_init__(self):
        if self.pi_imb < 0:
            raise ValueError("pi_imb must be >= 0")
        if min(self.lambda_res, self.lambda_up, self.lambda_dn, self.lambda_cap) < 0:
            raise ValueError("AS and capacity prices must be >= 0")


@dataclass(frozen=True)
class StepSettlement:
    """Per-interval settlement (dollars).

    ``F_e = energy_gross - imbalance_penalty``; ``reward = F_e + F_as - C_deg``.
    """

    F_e: float
    F_as: float
    C_deg: float
    reward: float
    energy_gross: float = 0.0
    imbalance_penalty: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def energy_revenue(quote: PriceQuote, x_e: float, b_e: float, dt: float) -> float:
    return quote.lambda_e * (x_e - quote.pi_imb * abs(x_e - b_e * dt))


def implied_imbalance_price(quote: PriceQuote, delta_E: float) -> float:
    """Imbalance price that makes the two-settlement form equal the penalty form."""
    if delta_E > 0:
        return quote.lambda_e * (1.0 - quote.pi_imb)
    return quote.lambda_e * (1.0 + quote.pi_imb)


def two_settlement_revenue(quote: PriceQuote, x_e: float, b_e: float, dt: float) -> float:
    """Forward settlement plus ex-post imbalance settlement."""
    delta_E = x_e - b_e * dt
    return quote.lambda_e * b_e * dt + implied_imbalance_price(quote, delta_E) * delta_E


def as_revenue(quote: PriceQuote, bids: BidSet) -> float:
    return quote.lambda_res * bids.b_res + quote.lambda_up * bids.b_up + quote.lambda_dn * bids.b_dn


def accredited_capacity(design: DesignVector, params: PlantParams) -> float:
    """Firm capacity (MW) under the duration rule, capped at the POI."""
    battery = min(design.P_bat, design.E_bat / params.H_cr)
    return min(params.P_poi_max, params.phi_pv * design.P_pv + battery)


def capacity_revenue(quote: PriceQuote, design: DesignVector, params: PlantParams) -> float:
    """Annual capacity payment in $/yr; ``quote.lambda_cap`` is in $/kW-month."""
    return CAP_PRICE_FACTOR * quote.lambda_cap * accredited_capacity(design, params)


def step_reward(quote: PriceQuote, record: DispatchRecord, bids: BidSet, params: PlantParams) -> StepSettlement:
    gross = quote.lambda_e * record.x_e
    penalty = quote.lambda_e * quote.pi_imb * abs(record.delta_E)
    F_e = gross - penalty
    F_as = as_revenue(quote, bids)
    C_deg = degradation_cost(record.x_chgE + record.x_chgAS, record.x_disE + record.x_disAS, params)
    return StepSettlement(F_e=F_e, F_as=F_as, C_deg=C_deg, reward=F_e + F_as - C_deg,
                          energy_gross=gross, imbalance_penalty=penalty)


def episode_return(steps: Iterable[StepSettlement], capacity_rev: float, capex: float, W_anu: float,
                   eta: float, include_degradation: bool = True) -> float:
    """Annualized net value of one episode for the design update.

    Degradation is charged inside the market sum unless
    ``include_degradation`` is False.
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    market = 0.0
    for s in steps:
        market += s.F_e + s.F_as
        if include_degradation:
            market -= s.C_deg
    return W_anu * market + capacity_rev - capex * (1.0 - eta)


def episode_return_from_sums(market_sum: float, deg_sum: float, capacity_rev: float, capex: float,
                             W_anu: float, eta: float, include_degradation: bool = True) -> float:
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    m = market_sum - deg_sum if include_degradation else market_sum
    return W_anu * m + capacity_rev - capex * (1.0 - eta)
