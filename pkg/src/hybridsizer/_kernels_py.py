"""Pure-Python/numpy implementation of the hot kernels.

``rollout_mlp`` composes the reference scalar modules step by step;
``step_batch`` is a vectorized numpy evaluation of many independent
steps. The compiled extension ``_kernels_cy`` exposes the same two
functions with identical signatures and outputs.
"""
from __future__ import annotations

import numpy as np

from .dispatch import ActivationOutcome, apply_step, apply_step_colocated
from .plant import EPS_BAT, SOC_TOL, DesignVector, PlantParams, PlantState, SocBoundError
from .serial_bidding import AgentAction, PvForecast, build_colocated_bids, build_hybrid_bids, combine_bids
from .settlement import PriceQuote, step_reward

BACKEND = "python"

PARAM_FIELDS = ("P_poi_min", "P_poi_max", "eta_c", "eta_d", "S_min", "S_max", "beta_deg", "dt",
                "H_res", "H_up", "H_dn", "kappa", "pi_imb", "P_inv")

TRACE_COLUMNS = (
    "soc", "a_e", "a_res", "a_up", "a_dn", "a_imb", "p_pred", "p_avail",
    "b_e", "b_res", "b_up", "b_dn", "b_up_pv", "b_up_bat", "b_dn_bat", "B_dis", "B_chg", "M_pv",
    "b_e_pv", "b_e_bat",
    "x_chgE", "x_disE", "x_chgAS", "x_disAS", "x_cur", "pv_delivered", "delta_E", "x_e", "soc_next",
    "lambda_e", "lambda_res", "lambda_up", "lambda_dn",
    "energy_gross", "imbalance_penalty", "F_e", "F_as", "C_deg", "reward",
    "h_res", "h_up", "h_dn", "fault",
)
COL = {name: i for i, name in enumerate(TRACE_COLUMNS)}
N_COLS = len(TRACE_COLUMNS)
OBS_DIM = 9
MODE_HYBRID, MODE_COLOCATED = 0, 1


def params_vector(params: PlantParams) -> np.ndarray:
    v = [getattr(params, f) for f in PARAM_FIELDS[:-1]] + [params.inverter_limit]
    return np.array(v, dtype=float)


def params_from_vector(v) -> PlantParams:
    d = dict(zip(PARAM_FIELDS, (float(x) for x in v)))
    return PlantParams(**d)


def mlp_forward(weights: np.ndarray, sizes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """tanh hidden layers, logistic output; weights packed as (W row-major, b) per layer."""
    h = x
    off = 0
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        n_in, n_out = int(sizes[i]), int(sizes[i + 1])
        W = weights[off:off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = weights[off:off + n_out]
        off += n_out
        z = W @ h + b
        h = np.tanh(z) if i < n_layers - 1 else 1.0 / (1.0 + np.exp(-z))
    return h


def rollout_mlp(weights, sizes, obs_mean, obs_std, p_avail, p_pred, prices, activations, design,
                params_vec, soc0, mode):
    """Run one episode under the packed MLP policy.

    ``p_avail`` and ``prices`` carry T+1 rows, row 0 being the interval
    before the window; ``p_pred`` and ``activations`` carry T rows.
    Returns ``(trace, observations)`` with shapes (T, N_COLS) and (T, OBS_DIM).
    """
    params = params_from_vector(params_vec)
    dv = DesignVector(float(design[0]), float(design[1]), float(design[2]))
    T = len(p_pred)
    trace = np.zeros((T, N_COLS))
    obs = np.zeros((T, OBS_DIM))
    state = PlantState(float(soc0))
    for t in range(T):
        o = obs[t]
        o[0] = p_avail[t]
        o[1:5] = prices[t]
        o[5] = state.soc
        o[6:9] = design
        a = mlp_forward(weights, sizes, (o - obs_mean) / obs_std)
        row = trace[t]
        state = _reference_step(row, state, a, p_pred[t], p_avail[t + 1], prices[t + 1], activations[t],
                                dv, params, mode)
    return trace, obs


def reference_step(state, action, forecast, p_avail, quote, activation, design, params, mode):
    """One interval through the scalar modules; returns ``(new_state, bids, record, settlement)``."""
    if mode == MODE_HYBRID:
        bids = build_hybrid_bids(action, state, forecast, design, params)
        new_state, rec = apply_step(state, bids, p_avail, activation, action.a_imb, design, params)
    else:
        bids = combine_bids(*build_colocated_bids(action, state, forecast, design, params))
        new_state, rec = apply_step_colocated(state, bids, p_avail, activation, design, params)
    return new_state, bids, rec, step_reward(quote, rec, bids, params)


def fill_row(row, action, p_pred, p_avail, quote, activation, bids, rec, st):
    row[:] = (rec.soc_before, action.a_e, action.a_res, action.a_up, action.a_dn, action.a_imb, p_pred, p_avail,
              bids.b_e, bids.b_res, bids.b_up, bids.b_dn, bids.b_up_pv, bids.b_up_bat, bids.b_dn_bat,
              bids.B_dis, bids.B_chg, bids.M_pv, bids.b_e_pv, bids.b_e_bat,
              rec.x_chgE, rec.x_disE, rec.x_chgAS, rec.x_disAS, rec.x_cur, rec.pv_delivered, rec.delta_E,
              rec.x_e, rec.soc_after, quote.lambda_e, quote.lambda_res, quote.lambda_up, quote.lambda_dn,
              st.energy_gross, st.imbalance_penalty, st.F_e, st.F_as, st.C_deg, st.reward,
              activation.h_res, activation.h_up, activation.h_dn, 0.0)


def _reference_step(row, state, a, p_pred, p_avail, prices, act, design, params, mode):
    action = AgentAction.from_array(a)
    activation = ActivationOutcome(float(act[0]), float(act[1]), float(act[2]))
    quote = PriceQuote(float(prices[0]), float(prices[1]), float(prices[2]), float(prices[3]), params.pi_imb)
    new_state, bids, rec, st = reference_step(state, action, PvForecast(float(p_pred)), float(p_avail), quote,
                                              activation, design, params, mode)
    fill_row(row, action, p_pred, p_avail, quote, activation, bids, rec, st)
    return new_state


def step_batch(soc, actions, p_pred, p_avail, prices, activations, designs, params_vec, mode):
    """Evaluate ``n`` independent steps at once.

    Inputs are arrays with leading dimension ``n`` (``actions`` (n, 5),
    ``prices`` (n, 4), ``activations`` (n, 3), ``designs`` (n, 3)).
    SOC excursions are reported in the ``fault`` column instead of raising.
    """
    (Pmin, Pmax, eta_c, eta_d, Smin, Smax, beta, dt, H_res, H_up, H_dn, kappa, pi_imb, P_inv) = \
        (float(x) for x in params_vec)
    soc = np.asarray(soc, dtype=float)
    n = soc.shape[0]
    a = np.clip(np.asarray(actions, dtype=float), 0.0, 1.0)
    a_e, a_res, a_up, a_dn, a_imb = a.T
    p_pred = np.asarray(p_pred, dtype=float)
    p_avail = np.asarray(p_avail, dtype=float)
    prices = np.asarray(prices, dtype=float)
    act = np.asarray(activations, dtype=float)
    designs = np.asarray(designs, dtype=float)
    E_raw, P_raw = designs[:, 1], designs[:, 2]
    has = (E_raw >= EPS_BAT) & (P_raw >= EPS_BAT)
    E_bat = np.where(has, E_raw, 0.0)
    P_bat = np.where(has, P_raw, 0.0)
    P_poi = Pmax - Pmin

    E_up = np.where(has, np.maximum(eta_d * E_bat * (soc - Smin), 0.0), 0.0)
    E_dn = np.where(has, np.maximum(E_bat * (Smax - soc) / eta_c, 0.0), 0.0)

    colo = mode == MODE_COLOCATED
    if colo:
        M_pv = np.minimum(kappa * p_pred, P_inv)
        center_pv = np.minimum(p_pred, P_inv)
    else:
        M_pv = kappa * p_pred
        center_pv = p_pred

    b_res = np.where(has, np.maximum(np.minimum(np.minimum(a_res * P_poi, P_bat), E_up / H_res), 0.0), 0.0)
    M_bat_up = np.maximum(np.minimum(P_bat - b_res, (E_up - b_res * H_res) / H_up), 0.0)
    b_up = np.maximum(np.minimum(a_up * (P_poi - b_res), M_bat_up + M_pv), 0.0)
    b_up_pv = np.maximum(b_up - M_bat_up, 0.0)
    b_up_bat = b_up - b_up_pv
    M_bat_dn = np.minimum(P_bat, E_dn / H_dn)
    b_dn = np.maximum(np.minimum(a_dn * (P_poi - b_res - b_up), M_bat_dn + M_pv - b_up_pv), 0.0)
    b_dn_bat = np.minimum(np.maximum(b_dn - (M_pv - b_up_pv), 0.0), b_dn)
    B_dis = np.maximum(np.minimum(P_bat - b_res - b_up_bat, (E_up - b_res * H_res - b_up_bat * H_up) / dt), 0.0)
    B_chg = np.maximum(np.minimum(P_bat - b_dn_bat, (E_dn - b_dn_bat * H_dn) / dt), 0.0)
    lo_poi = Pmin + b_dn
    hi_poi = Pmax - b_res - b_up
    b_tilde = a_e * hi_poi + (1.0 - a_e) * lo_poi
    center = center_pv - b_up_pv
    b_e = np.minimum(np.maximum(b_tilde, center - B_chg), center + B_dis)
    b_e = np.minimum(np.maximum(b_e, lo_poi), hi_poi)

    if colo:
        b_e_pv = center_pv - b_up_pv
        resid = b_e - b_e_pv
        b_e_bat = np.where(resid > 0, np.minimum(resid, B_dis), np.maximum(resid, -B_chg))
        over = b_e_pv + b_e_bat > hi_poi
        under = ~over & (b_e_pv + b_e_bat < lo_poi)
        b_e_pv = np.where(over, hi_poi - b_e_bat, np.where(under, lo_poi - b_e_bat, b_e_pv))
        b_e = b_e_pv + b_e_bat

        pv_eff = np.minimum(p_avail, P_inv)
        x_chgE = np.maximum(-b_e_bat, 0.0) * dt
        x_disE = np.maximum(b_e_bat, 0.0) * dt
        cur_poi = np.maximum(pv_eff + b_e_bat - Pmax, 0.0) * dt
        x_cur = np.maximum(p_avail - P_inv, 0.0) * dt + cur_poi
        pv_delivered = (pv_eff - b_up_pv) * dt - cur_poi
        delta_E = pv_delivered - b_e_pv * dt
    else:
        b_e_pv = b_e
        b_e_bat = np.zeros(n)
        avail_e = p_avail - b_up_pv
        short = b_e > avail_e
        gap = b_e - avail_e
        dis_short = np.minimum(a_imb * gap, B_dis) * dt
        surplus = avail_e - b_e
        bhat = np.maximum(b_dn - avail_e, 0.0)
        Bhat = np.maximum(np.minimum(P_bat - b_dn_bat, (E_dn - bhat * H_dn) / dt), 0.0)
        chg_sur = np.minimum(a_imb * surplus, Bhat) * dt
        cur_sur = np.maximum(p_avail * dt - chg_sur - Pmax * dt, 0.0)
        x_disE = np.where(short, dis_short, 0.0)
        x_chgE = np.where(short, 0.0, chg_sur)
        x_cur = np.where(short, 0.0, cur_sur)
        delta_E = np.where(short, -(gap * dt - dis_short), surplus * dt - chg_sur - cur_sur)
        pv_delivered = (p_avail - b_up_pv) * dt - x_cur

    x_chgAS = np.maximum(np.minimum(b_dn_bat * act[:, 2], E_dn - x_chgE), 0.0)
    x_disAS = b_res * act[:, 0] + b_up_bat * act[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        soc_raw = soc + eta_c * (x_chgE + x_chgAS) / E_bat - (x_disE + x_disAS) / (eta_d * E_bat)
    soc_raw = np.where(has, soc_raw, soc)
    fault = (soc_raw < Smin - SOC_TOL) | (soc_raw > Smax + SOC_TOL)
    soc_next = np.where(fault, soc_raw, np.clip(soc_raw, Smin, Smax))
    x_e = b_e * dt + delta_E

    lam_e = prices[:, 0]
    gross = lam_e * x_e
    penalty = lam_e * pi_imb * np.abs(delta_E)
    F_e = gross - penalty
    F_as = prices[:, 1] * b_res + prices[:, 2] * b_up + prices[:, 3] * b_dn
    C_deg = beta * (x_chgE + x_chgAS + x_disE + x_disAS)

    cols = [soc, a_e, a_res, a_up, a_dn, a_imb, p_pred, p_avail,
            b_e, b_res, b_up, b_dn, b_up_pv, b_up_bat, b_dn_bat, B_dis, B_chg, M_pv, b_e_pv, b_e_bat,
            x_chgE, x_disE, x_chgAS, x_disAS, x_cur, pv_delivered, delta_E, x_e, soc_next,
            prices[:, 0], prices[:, 1], prices[:, 2], prices[:, 3],
            gross, penalty, F_e, F_as, C_deg, F_e + F_as - C_deg,
            act[:, 0], act[:, 1], act[:, 2], fault.astype(float)]
    return np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in cols])


def raise_on_fault(trace: np.ndarray) -> None:
    bad = np.nonzero(trace[:, COL["fault"]] > 0)[0]
    if bad.size:
        t = int(bad[0])
        raise SocBoundError(f"soc {trace[t, COL['soc_next']]!r} out of bounds at step {t}")
