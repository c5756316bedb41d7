"""Synthetic price and PV series for scenarios, examples and tests.

Prices follow a daily shape with a midday dip and an evening peak; PV is a
clear-sky bell, optionally modulated by an AR(1) cloud factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_data import MarketSeries, PvSeries


@dataclass(frozen=True)
class SyntheticSpec:
    days: int = 7
    dt: float = 1.0
    start: str = "2021-01-01T00:00:00"
    pv_peak: float = 12.0
    cloud_noise: float = 0.0
    cloud_persistence: float = 0.8
    price_base: float = 30.0
    price_midday_dip: float = 15.0
    price_evening_peak: float = 70.0
    price_noise: float = 0.0
    lambda_res: float = 4.0
    lambda_up: float = 6.0
    lambda_dn: float = 3.0
    seasonal_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.days < 1 or self.dt <= 0 or self.pv_peak < 0:
            raise ValueError("days >= 1, dt > 0 and pv_peak >= 0 required")
        if not 0 <= self.cloud_persistence < 1:
            raise ValueError("cloud_persistence must lie in [0, 1)")


def clear_sky(hour: np.ndarray) -> np.ndarray:
    """Normalized bell between 06:00 and 18:00."""
    x = np.sin(np.pi * (hour - 6.0) / 12.0)
    return np.where((hour > 6.0) & (hour < 18.0), np.maximum(x, 0.0) ** 1.2, 0.0)


def make_series(spec: SyntheticSpec = SyntheticSpec()) -> tuple[MarketSeries, PvSeries]:
    n = int(round(spec.days * 24 / spec.dt))
    step = np.timedelta64(int(round(spec.dt * 3600)), "s")
    ts = np.datetime64(spec.start, "s") + np.arange(n) * step
    hour = (np.arange(n) * spec.dt) % 24.0
    day = np.arange(n) * spec.dt / 24.0
    rng = np.random.default_rng(spec.seed)

    season = 1.0 + spec.seasonal_amplitude * np.cos(2 * np.pi * (day - 172) / 365.0)
    pv = spec.pv_peak * clear_sky(hour + 0.5 * spec.dt) * np.minimum(season, 1.0 + spec.seasonal_amplitude)
    if spec.cloud_noise > 0:
        z = np.empty(n)
        z[0] = 0.0
        shocks = rng.standard_normal(n) * spec.cloud_noise
        for i in range(1, n):
            z[i] = spec.cloud_persistence * z[i - 1] + shocks[i]
        pv = pv * np.clip(1.0 - np.abs(z), 0.0, 1.0)
    pv = np.minimum(pv, spec.pv_peak)

    dip = spec.price_midday_dip * clear_sky(hour + 0.5 * spec.dt)
    evening = spec.price_evening_peak * np.exp(-0.5 * ((hour - 19.0) / 1.5) ** 2)
    lam_e = spec.price_base - dip + evening
    if spec.price_noise > 0:
        lam_e = lam_e + rng.normal(0.0, spec.price_noise, n)
    scale = np.ones(n)
    lam_res = spec.lambda_res * scale * (1.0 + 0.5 * (evening > 1.0))
    lam_up = spec.lambda_up * scale
    lam_dn = spec.lambda_dn * scale
    market = MarketSeries(ts, lam_e, lam_res, lam_up, lam_dn, spec.dt)
    return market, PvSeries(ts, pv, spec.dt, nameplate=spec.pv_peak if spec.pv_peak > 0 else None)


def clipped_energy_scenario(days: int = 7, poi: float = 10.0) -> tuple[MarketSeries, PvSeries]:
    """PV oversized 20 % against the POI, evening price peak, no forecast noise."""
    spec = SyntheticSpec(days=days, pv_peak=1.2 * poi, cloud_noise=0.0, price_noise=0.0,
                         lambda_res=0.0, lambda_up=0.0, lambda_dn=0.0)
    return make_series(spec)


def noisy_pv_scenario(days: int = 14, seed: int = 0, poi: float = 10.0) -> tuple[MarketSeries, PvSeries]:
    """Cloudy PV so that persistence forecasts miss, with mild price noise."""
    spec = SyntheticSpec(days=days, pv_peak=poi, cloud_noise=0.25, cloud_persistence=0.5, price_noise=3.0,
                         seed=seed)
    return make_series(spec)
