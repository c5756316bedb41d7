"""Brute-force checks for tiny instances and an independent trace auditor.

The auditor re-derives every bound from the raw trace columns with its
own arithmetic; it deliberately shares no code with the bidding and
dispatch modules.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .plant import DesignVector, PlantParams
from .sim_env import EpisodeTrace, HybridEnv, MODES


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionGrid:
    counts: tuple = (5, 5, 5, 5, 5)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 5 or min(counts) < 2:
            raise ValueError("need five counts, each >= 2")
        object.__setattr__(self, "counts", counts)

    def points(self) -> np.ndarray:
        """All grid actions in lexicographic order, shape (prod(counts), 5)."""
        axes = [np.linspace(0.0, 1.0, c) for c in self.counts]
        return np.array(list(itertools.product(*axes)))

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))


@dataclass
class OracleResult:
    best_return: float
    actions: np.ndarray
    indices: tuple
    evaluations: int


def exhaustive_optimum(env: HybridEnv, design: DesignVector, grid: ActionGrid = ActionGrid(),
                       window=None, initial_soc: float | None = None, budget: int = 10 ** 9,
                       max_horizon: int = 3) -> OracleResult:
    """Best gridded action sequence for a deterministic episode.

    Searches all ``grid.size ** T`` sequences. Sequences that reach the
    same SOC at the same step share their continuation, so each distinct
    (step, soc) node is expanded once with all grid actions evaluated in
    one batch. Ties go to the lexicographically smallest sequence.
    ``budget`` caps the number of single-step evaluations.
    """
    window = window or env.windows[0]
    T = window.T
    if T > max_horizon:
        raise ValueError(f"horizon {T} exceeds the enumeration limit {max_horizon}")
    if env.activation.kind == "stochastic":
        raise ValueError("the oracle needs a deterministic activation model")
    soc0 = env.initial_soc if initial_soc is None else initial_soc
    inp = env.episode_inputs(design, window, 0)
    acts = grid.points()
    K = acts.shape[0]
    params_vec = kernels.params_vector(env.params)
    mode = MODES[env.mode]
    dz = np.tile(design.as_array(), (K, 1))
    memo: dict = {}
    evals = [0]

    def expand(t: int, soc: float):
        key = (t, soc)
        if key in memo:
            return memo[key]
        evals[0] += K
        if evals[0] > budget:
            raise BudgetExceeded(f"more than {budget} step evaluations")
        out = kernels.step_batch(np.full(K, soc), acts, np.full(K, inp["p_pred"][t]),
                                 np.full(K, inp["p_avail"][t + 1]), np.tile(inp["prices"][t + 1], (K, 1)),
                                 np.tile(inp["activations"][t], (K, 1)), dz, params_vec, mode)
        r = out[:, kernels.COL["reward"]].copy()
        r[out[:, kernels.COL["fault"]] > 0] = -np.inf
        nxt = out[:, kernels.COL["soc_next"]]
        if t == T - 1:
            k = int(np.argmax(r))
            res = (float(r[k]), (k,))
        else:
            best_val, best_seq = -np.inf, None
            for k in range(K):
                if not np.isfinite(r[k]):
                    continue
                v, seq = expand(t + 1, float(nxt[k]))
                total = r[k] + v
                if total > best_val:
                    best_val, best_seq = float(total), (k,) + seq
            res = (best_val, best_seq)
        memo[key] = res
        return res

    _, seq = expand(0, float(soc0))
    actions = acts[list(seq)]
    # report the return with the environment's own summation order
    it = iter(actions)
    trace = env.rollout(lambda obs: next(it), design, window, 0, soc0)
    return OracleResult(trace.total_reward, actions, seq, evals[0])


# ---------------------------------------------------------------------------
# feasibility auditor

@dataclass
class AuditReport:
    violations: list = field(default_factory=list)
    n_checks: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_constraint(self) -> dict:
        out = {}
        for v in self.violations:
            out[v["constraint"]] = out.get(v["constraint"], 0) + 1
        return out

    def to_json(self) -> str:
        return json.dumps({"n_checks": self.n_checks, "violations": self.violations}, indent=1)


def _cols(data: np.ndarray) -> dict:
    return {name: data[:, i] for i, name in enumerate(kernels.TRACE_COLUMNS)}


def audit_rows(data: np.ndarray, designs: np.ndarray, params: PlantParams, mode: str = "hybrid",
               rel_tol: float = 1e-9, max_records: int = 10_000) -> AuditReport:
    """Check every row of a trace-shaped array; ``designs`` is (n, 3) or a single design."""
    c = _cols(np.atleast_2d(data))
    n = len(c["soc"])
    d = np.broadcast_to(np.asarray(designs, dtype=float), (n, 3))
    has = (d[:, 1] >= 1e-6) & (d[:, 2] >= 1e-6)
    E = np.where(has, d[:, 1], 0.0)
    P = np.where(has, d[:, 2], 0.0)
    p = params
    dt = p.dt
    soc, soc1 = c["soc"], c["soc_next"]
    e_up = p.eta_d * E * (soc - p.S_min)
    e_dn = E * (p.S_max - soc) / p.eta_c
    pv_cap = p.kappa * c["p_pred"]
    if mode == "colocated":
        inv = p.P_poi_max if p.P_inv is None else p.P_inv
        pv_cap = np.minimum(pv_cap, inv)
    # regulation-down share the battery must still absorb after real-time charging
    if mode == "hybrid":
        dn_hat = np.maximum(c["b_dn"] - (c["p_avail"] - c["b_up_pv"]), 0.0)
        dn_after = np.where(c["x_chgE"] > 0, np.minimum(dn_hat, c["b_dn_bat"]), c["b_dn_bat"])
    else:
        dn_after = c["b_dn_bat"]
    with np.errstate(divide="ignore", invalid="ignore"):
        soc_expect = np.where(has, soc + p.eta_c * (c["x_chgE"] + c["x_chgAS"]) / E
                              - (c["x_disE"] + c["x_disAS"]) / (p.eta_d * E), soc)
    # excursions within 1e-9 are snapped onto the bound by the simulator
    near = (soc_expect >= p.S_min - 1e-9) & (soc_expect <= p.S_max + 1e-9)
    soc_expect = np.where(near, np.clip(soc_expect, p.S_min, p.S_max), soc_expect)
    no_bat = ~has
    zero = np.zeros(n)
    bat_flow = c["x_chgE"] + c["x_disE"] + c["x_chgAS"] + c["x_disAS"] + c["b_res"] + c["b_up_bat"] + c["b_dn_bat"]

    checks = [
        # (id, lhs, rhs, kind)
        ("soc_start_lower", p.S_min + zero, soc, "le"),
        ("soc_start_upper", soc, p.S_max + zero, "le"),
        ("soc_lower", p.S_min + zero, soc1, "le"),
        ("soc_upper", soc1, p.S_max + zero, "le"),
        ("soc_transition", soc1, soc_expect, "eq"),
        ("poi_bid_upper", c["b_e"] + c["b_res"] + c["b_up"], p.P_poi_max + zero, "le"),
        ("poi_bid_lower", p.P_poi_min + c["b_dn"], c["b_e"], "le"),
        ("poi_as_total", c["b_res"] + c["b_up"] + c["b_dn"], p.P_poi_max - p.P_poi_min + zero, "le"),
        ("poi_realized_upper", c["x_e"] / dt, p.P_poi_max + zero, "le"),
        ("up_split", c["b_up"], c["b_up_pv"] + c["b_up_bat"], "eq"),
        ("pv_up_share", c["b_up_pv"], pv_cap, "le"),
        ("converter_discharge", c["b_res"] + c["b_up_bat"] + c["x_disE"] / dt, P, "le"),
        ("converter_charge", c["b_dn_bat"] + c["x_chgE"] / dt, P, "le"),
        ("as_energy_up_bid", c["b_res"] * p.H_res + c["b_up_bat"] * p.H_up, e_up, "le"),
        ("as_energy_dn_bid", c["b_dn_bat"] * p.H_dn, e_dn, "le"),
        ("as_energy_up_realtime", c["b_res"] * p.H_res + c["b_up_bat"] * p.H_up + c["x_disE"], e_up, "le"),
        ("as_energy_dn_realtime", dn_after * p.H_dn + c["x_chgE"], e_dn, "le"),
        ("dc_balance", c["x_e"], c["pv_delivered"] - c["x_chgE"] + c["x_disE"], "eq"),
        ("pv_balance", c["pv_delivered"] + c["x_cur"], (c["p_avail"] - c["b_up_pv"]) * dt, "eq"),
        ("imbalance_definition", c["delta_E"], c["x_e"] - c["b_e"] * dt, "eq"),
        ("flow_sign_exclusive", np.minimum(c["x_chgE"], c["x_disE"]), zero, "le"),
        ("curtailment_range", c["x_cur"], np.maximum(c["p_avail"], 0.0) * dt, "le"),
        ("no_battery_flows", np.where(no_bat, bat_flow, 0.0), zero, "le"),
        ("activation_reserve", c["h_res"], p.H_res + zero, "le"),
        ("activation_up", c["h_up"], p.H_up + zero, "le"),
        ("activation_dn", c["h_dn"], p.H_dn + zero, "le"),
    ]
    for name in ("b_res", "b_up", "b_dn", "b_up_pv", "b_up_bat", "b_dn_bat", "B_dis", "B_chg", "M_pv",
                 "x_chgE", "x_disE", "x_chgAS", "x_disAS", "x_cur", "h_res", "h_up", "h_dn"):
        checks.append((f"nonnegative_{name}", -c[name], zero, "le"))
    if mode == "hybrid":
        # sign classification with the same tolerance as the checks, so rounding noise is not a branch
        sign_tol = rel_tol * np.maximum(1.0, np.abs(c["b_e"] * dt))
        short = c["delta_E"] < -sign_tol
        surplus = c["delta_E"] > sign_tol
        checks += [
            ("shortfall_no_charge", np.where(short, c["x_chgE"] + c["x_cur"], 0.0), zero, "le"),
            ("surplus_no_discharge", np.where(surplus, c["x_disE"], 0.0), zero, "le"),
        ]
    else:
        checks += [
            ("battery_schedule_discharge", c["x_disE"] / dt, np.maximum(c["b_e_bat"], 0.0), "eq"),
            ("battery_schedule_charge", c["x_chgE"] / dt, np.maximum(-c["b_e_bat"], 0.0), "eq"),
        ]

    report = AuditReport()
    for cid, lhs, rhs, kind in checks:
        lhs = np.broadcast_to(lhs, (n,))
        rhs = np.broadcast_to(rhs, (n,))
        margin = rhs - lhs if kind == "le" else -np.abs(rhs - lhs)
        tol = rel_tol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        bad = np.nonzero(~(margin >= -tol))[0]
        report.n_checks += n
        for i in bad:
            if len(report.violations) >= max_records:
                break
            report.violations.append({"step": int(i), "constraint": cid, "lhs": float(lhs[i]),
                                      "rhs": float(rhs[i]), "margin": float(margin[i])})
    return report


def feasibility_audit(trace: EpisodeTrace, design: DesignVector | None = None,
                      params: PlantParams | None = None) -> AuditReport:
    """Audit a simulator trace, including SOC chaining between consecutive steps."""
    design = design or trace.design
    params = params or PlantParams()
    report = audit_rows(trace.data, design.as_array(), params, trace.mode)
    soc = trace.column("soc")
    nxt = trace.column("soc_next")
    for t in range(1, len(trace)):
        report.n_checks += 1
        if soc[t] != nxt[t - 1]:
            report.violations.append({"step": t, "constraint": "soc_chaining", "lhs": float(soc[t]),
                                      "rhs": float(nxt[t - 1]), "margin": -abs(float(soc[t] - nxt[t - 1]))})
    return report
