"""Episodic, partially observed environment around the bidding and dispatch models.

The agent observes data of the previous interval, the current SOC and the
design. Bids are built from a PV forecast that only uses lagged data, and
dispatch settles against the true availability of the interval.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from ._kernels_py import fill_row, reference_step
from .dispatch import ActivationModel, ActivationOutcome, DispatchRecord, sample_activations
from .market_data import PRICE_FIELDS, EpisodeWindow, MarketSeries, PvSeries, episode_window
from .plant import DesignVector, PlantParams, PlantState, check_soc
from .serial_bidding import (AgentAction, BidSet, ExponentialSmoothingForecaster, PersistenceForecaster,
                             PvForecast)
from .settlement import PriceQuote, StepSettlement

COL = kernels.COL
MODES = {"hybrid": kernels.MODE_HYBRID, "colocated": kernels.MODE_COLOCATED}


@dataclass(frozen=True)
class Observation:
    p_avail_prev: float
    lambda_e_prev: float
    lambda_res_prev: float
    lambda_up_prev: float
    lambda_dn_prev: float
    soc: float
    design: DesignVector

    def as_array(self) -> np.ndarray:
        return np.array([self.p_avail_prev, self.lambda_e_prev, self.lambda_res_prev, self.lambda_up_prev,
                         self.lambda_dn_prev, self.soc, self.design.P_pv, self.design.E_bat, self.design.P_bat])

    @classmethod
    def from_array(cls, a) -> "Observation":
        return cls(*(float(x) for x in a[:6]), design=DesignVector(float(a[6]), float(a[7]), float(a[8])))


@dataclass(frozen=True)
class StepRecord:
    observation: Observation
    action: AgentAction
    bids: BidSet
    dispatch: DispatchRecord
    settlement: StepSettlement


_BID_COLS = ("b_e", "b_res", "b_up", "b_dn", "b_up_pv", "b_up_bat", "b_dn_bat", "B_dis", "B_chg", "M_pv",
             "b_e_pv", "b_e_bat")
_FLOW_COLS = ("x_e", "delta_E", "x_chgE", "x_disE", "x_chgAS", "x_disAS", "x_cur")
_SETTLE_COLS = ("F_e", "F_as", "C_deg", "reward", "energy_gross", "imbalance_penalty")


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """Array-backed record of one episode; rows follow ``kernels.TRACE_COLUMNS``."""

    design: DesignVector
    window: EpisodeWindow
    data: np.ndarray
    observations: np.ndarray
    mode: str = "hybrid"
    timestamps: np.ndarray | None = None
    dt: float = 1.0

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    @property
    def total_reward(self) -> float:
        return float(sum(self.column("reward").tolist()))

    def totals(self) -> dict:
        """Episode sums of the settlement and energy terms (unannualized)."""
        out = {}
        for name in ("energy_gross", "imbalance_penalty", "F_e", "F_as", "C_deg", "reward", "x_cur", "x_e"):
            out[name] = float(sum(self.column(name).tolist()))
        out["abs_delta_E"] = float(np.abs(self.column("delta_E")).sum())
        return out

    def records(self) -> list[StepRecord]:
        recs = []
        for row, o in zip(self.data, self.observations):
            g = {k: float(row[COL[k]]) for k in kernels.TRACE_COLUMNS}
            recs.append(StepRecord(
                observation=Observation.from_array(o),
                action=AgentAction(g["a_e"], g["a_res"], g["a_up"], g["a_dn"], g["a_imb"]),
                bids=BidSet(**{k: g[k] for k in _BID_COLS}),
                dispatch=DispatchRecord(p_poi=g["x_e"] / self.dt, pv_delivered=g["pv_delivered"], soc_before=g["soc"],
                                        soc_after=g["soc_next"], **{k: g[k] for k in _FLOW_COLS}),
                settlement=StepSettlement(**{k: g[k] for k in _SETTLE_COLS}),
            ))
        return recs

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "timestamp") + kernels.TRACE_COLUMNS[:-1])
            for t, row in enumerate(self.data):
                ts = "" if self.timestamps is None else str(self.timestamps[t])
                w.writerow([t, ts] + [repr(float(x)) for x in row[:-1]])


def forecast_path(forecaster, profile: np.ndarray, start: int, T: int) -> np.ndarray:
    """PV forecasts for series indices ``start .. start+T-1``.

    Each forecast only sees ``profile[:i]``, except for forecasters that
    declare ``peeks`` and are handed ``profile[:i+1]``.
    """
    if start < 1:
        raise ValueError("the first forecast needs a predecessor row")
    idx = range(start, start + T)
    if getattr(forecaster, "peeks", False):
        return np.array([forecaster(profile[:i + 1]).p_pred for i in idx])
    if isinstance(forecaster, PersistenceForecaster):
        return np.maximum(profile[start - 1:start + T - 1], 0.0)
    if isinstance(forecaster, ExponentialSmoothingForecaster):
        # one sequential pass; s_i is the smoothed value after observing profile[i]
        s = np.empty(start + T - 1)
        s[0] = profile[0]
        for i in range(1, s.size):
            s[i] = forecaster.alpha * profile[i] + (1.0 - forecaster.alpha) * s[i - 1]
        return np.maximum(s[start - 1:], 0.0)
    return np.array([forecaster(profile[:i]).p_pred for i in idx])


class HybridEnv:
    """Simulator for one plant configuration over a shared, immutable data set.

    ``reset``/``step`` is the generic interface for any policy. ``rollout``
    runs a whole episode and uses the compiled kernel when the policy
    exposes packed MLP weights.
    """

    def __init__(self, market: MarketSeries, pv: PvSeries, params: PlantParams | None = None,
                 mode: str = "hybrid", forecaster=None, activation: ActivationModel | None = None,
                 initial_soc: float = 0.5, windows: list[EpisodeWindow] | None = None):
        if len(market) != len(pv):
            raise ValueError("market and PV series differ in length")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {sorted(MODES)}")
        self.market = market
        self.pv = pv
        self.params = params or PlantParams()
        self.mode = mode
        self.forecaster = forecaster or PersistenceForecaster()
        self.activation = activation or ActivationModel()
        check_soc(initial_soc, self.params)
        self.initial_soc = initial_soc
        self.windows = list(windows) if windows else [episode_window(len(market), len(market) - 1,
                                                                     self.params.dt, 1)]
        self._prices = market.prices_matrix()
        self._params_vec = kernels.params_vector(self.params)
        self._episode = None

    def with_mode(self, mode: str) -> "HybridEnv":
        return HybridEnv(self.market, self.pv, self.params, mode, self.forecaster, self.activation,
                         self.initial_soc, self.windows)

    # -- episode inputs -----------------------------------------------------

    def _check_window(self, window: EpisodeWindow) -> None:
        if window.start < 1:
            raise ValueError("window starts at row 0, which has no predecessor for the first observation")
        if window.start + window.T > len(self.market):
            raise ValueError("window exceeds the data")

    def episode_inputs(self, design: DesignVector, window: EpisodeWindow, seed) -> dict:
        """Arrays consumed by one episode; row 0 of ``p_avail``/``prices`` is the predecessor interval."""
        self._check_window(window)
        s, T = window.start, window.T
        profile = self.pv.profile_for(design.P_pv)
        rng = np.random.default_rng(seed)
        return {
            "p_avail": np.ascontiguousarray(profile[s - 1:s + T], dtype=float),
            "p_pred": np.ascontiguousarray(forecast_path(self.forecaster, profile, s, T), dtype=float),
            "prices": np.ascontiguousarray(self._prices[s - 1:s + T], dtype=float),
            "activations": np.ascontiguousarray(sample_activations(self.activation, rng, self.params, T)),
        }

    # -- generic interface --------------------------------------------------

    def reset(self, design: DesignVector, window: EpisodeWindow | None = None, seed=0,
              initial_soc: float | None = None) -> Observation:
        window = window or self.windows[0]
        soc0 = self.initial_soc if initial_soc is None else initial_soc
        check_soc(soc0, self.params)
        inputs = self.episode_inputs(design, window, seed)
        self._episode = {
            "design": design, "window": window, "t": 0, "state": PlantState(float(soc0)),
            "rows": np.zeros((window.T, kernels.N_COLS)), "obs": np.zeros((window.T, kernels.OBS_DIM)),
            **inputs,
        }
        return self._observation()

    def _observation(self) -> Observation:
        ep = self._episode
        t = ep["t"]
        pr = ep["prices"][t]
        return Observation(float(ep["p_avail"][t]), *(float(x) for x in pr), soc=ep["state"].soc,
                           design=ep["design"])

    @property
    def done(self) -> bool:
        ep = self._episode
        return ep is not None and ep["t"] >= ep["window"].T

    def step(self, action: AgentAction) -> tuple[Observation | None, float, bool, StepRecord]:
        ep = self._episode
        if ep is None:
            raise RuntimeError("step() called before reset()")
        if self.done:
            raise RuntimeError("episode is done; call reset()")
        if not isinstance(action, AgentAction):
            action = AgentAction.from_array(action)
        t = ep["t"]
        obs = self._observation()
        ep["obs"][t] = obs.as_array()
        pr = ep["prices"][t + 1]
        quote = PriceQuote(*(float(x) for x in pr), pi_imb=self.params.pi_imb)
        act = ep["activations"][t]
        activation = ActivationOutcome(float(act[0]), float(act[1]), float(act[2]))
        p_pred = float(ep["p_pred"][t])
        p_avail = float(ep["p_avail"][t + 1])
        new_state, bids, rec, st = reference_step(ep["state"], action, PvForecast(p_pred), p_avail, quote,
                                                  activation, ep["design"], self.params, MODES[self.mode])
        fill_row(ep["rows"][t], action, p_pred, p_avail, quote, activation, bids, rec, st)
        ep["state"] = new_state
        ep["t"] = t + 1
        record = StepRecord(obs, action, bids, rec, st)
        nxt = None if self.done else self._observation()
        return nxt, st.reward, self.done, record

    def trace(self) -> EpisodeTrace:
        """Trace of the current episode once it is done."""
        if not self.done:
            raise RuntimeError("episode not finished")
        ep = self._episode
        return self._make_trace(ep["design"], ep["window"], ep["rows"], ep["obs"])

    def _make_trace(self, design, window, rows, obs) -> EpisodeTrace:
        ts = self.market.timestamps[window.start:window.start + window.T]
        return EpisodeTrace(design, window, rows, obs, self.mode, ts, self.params.dt)

    # -- whole episodes -----------------------------------------------------

    def rollout(self, policy, design: DesignVector, window: EpisodeWindow | None = None, seed=0,
                initial_soc: float | None = None, backend: str | None = None) -> EpisodeTrace:
        """Run one full episode of ``policy``.

        ``policy`` is either an object with ``kernel_args()`` (packed MLP,
        run in the compiled kernel) or a callable mapping the observation
        vector to five action components.
        """
        window = window or self.windows[0]
        if hasattr(policy, "kernel_args"):
            soc0 = self.initial_soc if initial_soc is None else initial_soc
            check_soc(soc0, self.params)
            inp = self.episode_inputs(design, window, seed)
            weights, sizes, mean, std = policy.kernel_args()
            rows, obs = kernels.rollout_mlp(weights, sizes, mean, std, inp["p_avail"], inp["p_pred"],
                                            inp["prices"], inp["activations"], design.as_array(),
                                            self._params_vec, float(soc0), MODES[self.mode],
                                            backend_name=backend)
            return self._make_trace(design, window, rows, obs)
        obs = self.reset(design, window, seed, initial_soc)
        while not self.done:
            obs, _, _, _ = self.step(AgentAction.from_array(policy(obs.as_array())))
        return self.trace()


def constant_policy(action) -> Callable[[np.ndarray], np.ndarray]:
    a = AgentAction.from_array(action).as_array()
    return lambda obs: a


def trace_matches(a: EpisodeTrace, b: EpisodeTrace) -> bool:
    return np.array_equal(a.data, b.data) and np.array_equal(a.observations, b.observations)


__all__ = ["EpisodeTrace", "HybridEnv", "MODES", "Observation", "PRICE_FIELDS", "StepRecord",
           "constant_policy", "forecast_path", "trace_matches"]
