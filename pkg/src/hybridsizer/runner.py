"""Experiment orchestration: subcommands, artifacts and reports.

Every file written here is a function of the config and the master seed
only. Worker count, wall time and host never reach an output file, so
runs with different ``--workers`` are byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
import shutil
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, ExperimentConfig
from .design_opt import DesignConfig, co_optimize
from .parallel import RolloutPool
from .plant import DesignVector, annualized_capex
from .policy_opt import (ESTrainer, PolicyParams, init_policy, load_policy, save_policy, zero_policy)
from .settlement import PriceQuote, accredited_capacity, capacity_revenue
from .sim_env import EpisodeTrace, HybridEnv, constant_policy

logger = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760.0
BREAKDOWN_COLUMNS = ("energy", "as", "capacity", "degradation", "imbalance")
FAILED_MARKER = "FAILED"
CHECKPOINT_FILE = "checkpoint.json"
_TAG_EVAL_SEED = 21


class ReportError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# small writers

def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def _write_rows(path: Path, rows: list[dict], columns=None) -> None:
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# building blocks

def build_env(cfg: ExperimentConfig, mode: str | None = None) -> HybridEnv:
    market, pv = cfg.load_data()
    return HybridEnv(market, pv, cfg.plant_params(), mode or cfg.mode, cfg.make_forecaster(),
                     cfg.activation_model(), cfg.initial_soc, cfg.make_windows(market))


def fixed_policy(cfg: ExperimentConfig):
    """Policy named by ``policy.source`` when no training is requested."""
    src = cfg.policy.get("source", "train")
    hidden = tuple(cfg.policy.get("hidden", (32, 32)))
    if src == "constant":
        return constant_policy(cfg.policy["action"])
    if src == "checkpoint":
        return load_policy(cfg._resolve(cfg.policy["checkpoint"]))
    if src == "zero":
        return zero_policy(hidden)
    if src == "init":
        return init_policy(hidden, cfg.seed)
    raise ConfigError(["policy.source 'train' gives no fixed policy; use init, zero, checkpoint or constant"])


def eval_seed(seed: int, w: int) -> int:
    return int(np.random.SeedSequence([seed, _TAG_EVAL_SEED, w]).generate_state(1, np.uint64)[0])


def evaluation_traces(env: HybridEnv, policy, design: DesignVector, seed: int, limit=None) -> list[EpisodeTrace]:
    idx = range(len(env.windows)) if limit is None else range(min(int(limit), len(env.windows)))
    return [env.rollout(policy, design, env.windows[w], eval_seed(seed, w)) for w in idx]


def summarize(traces: list[EpisodeTrace], cfg: ExperimentConfig) -> dict:
    """Annualized revenue breakdown and episode totals for one design/policy."""
    params = cfg.plant_params()
    costs = cfg.cost_params()
    design = traces[0].design
    sums = {}
    episodes = []
    steps = 0
    for tr in traces:
        t = tr.totals()
        steps += len(tr)
        for k, v in t.items():
            sums[k] = sums.get(k, 0.0) + v
        episodes.append({"start": str(tr.timestamps[0]) if tr.timestamps is not None else tr.window.start,
                         "T": tr.window.T, "W_anu": tr.window.W_anu, **t})
    scale = HOURS_PER_YEAR / (steps * params.dt)
    cap = capacity_revenue(PriceQuote(0.0, lambda_cap=costs.lambda_cap), design, params)
    breakdown = {
        "energy": scale * sums["energy_gross"],
        "as": scale * sums["F_as"],
        "capacity": cap,
        "degradation": -scale * sums["C_deg"],
        "imbalance": -scale * sums["imbalance_penalty"],
    }
    net = sum(breakdown[c] for c in BREAKDOWN_COLUMNS)
    capex = annualized_capex(design, costs)
    return {
        "design": {"P_pv": design.P_pv, "E_bat": design.E_bat, "P_bat": design.P_bat},
        "mode": traces[0].mode,
        "accredited_mw": accredited_capacity(design, params),
        "breakdown_annual": breakdown,
        "net_revenue_annual": net,
        "capex_annual": capex,
        "profit_annual": net - capex,
        "total_revenue": sums["reward"],
        "curtailment_mwh": sums["x_cur"],
        "imbalance_penalty": sums["imbalance_penalty"],
        "mean_abs_delta_E": sums["abs_delta_E"] / steps,
        "steps": steps,
        "episodes": episodes,
    }


def write_traces(out: Path, traces: list[EpisodeTrace], tag: str) -> None:
    d = out / "traces"
    d.mkdir(exist_ok=True)
    for i, tr in enumerate(traces):
        tr.to_csv(d / f"{tag}_{i:03d}.csv")


def _history_rows(history: list[dict]) -> list[dict]:
    cols = ["generation", "episodes", "mean_reward", "eval_reward", "best_reward"]
    return [{c: r.get(c) for c in cols} for r in history]


def _train(env: HybridEnv, cfg: ExperimentConfig, design: DesignVector, pool: RolloutPool,
           checkpoint: Path | None = None, resume: bool = False):
    tcfg = cfg.train_config()
    trainer = ESTrainer(env, tcfg, design, pool=pool)
    if resume and checkpoint is not None and checkpoint.is_file():
        doc = json.loads(checkpoint.read_text())
        if doc.get("config") != tcfg.to_dict():
            raise ConfigError([f"{checkpoint} was written with a different training config"])
        trainer.load_state_dict(doc)
        logger.info("resuming at generation %d", trainer.generation)
    while trainer.generation < tcfg.generations:
        trainer.step()
        if checkpoint is not None and trainer.generation % tcfg.eval_every == 0:
            _write_json(checkpoint, trainer.state_dict())
    if not trainer._any_finite:
        raise RuntimeError("no training episode produced a finite reward")
    if trainer.generation % tcfg.eval_every != 0 or not trainer.history:
        trainer.evaluate()
    if checkpoint is not None:
        _write_json(checkpoint, trainer.state_dict())
    return trainer.best_policy, trainer.history


def _save_policy(out: Path, policy, cfg: ExperimentConfig, name="policy.json") -> None:
    if isinstance(policy, PolicyParams):
        save_policy(policy, out / name, cfg.train_config().to_dict())


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg, out, workers, resume):
    env = build_env(cfg)
    design = cfg.fixed_design()
    policy = fixed_policy(cfg)
    traces = evaluation_traces(env, policy, design, cfg.seed, cfg.evaluation.get("traces"))
    write_traces(out, traces, cfg.mode)
    _save_policy(out, policy, cfg)
    return {"runs": {cfg.mode: summarize(traces, cfg)}}


def cmd_train(cfg, out, workers, resume):
    env = build_env(cfg)
    design = cfg.fixed_design()
    with RolloutPool(env, workers) as pool:
        policy, history = _train(env, cfg, design, pool, out / CHECKPOINT_FILE, resume)
    _save_policy(out, policy, cfg)
    _write_rows(out / "training.csv", _history_rows(history))
    traces = evaluation_traces(env, policy, design, cfg.seed, cfg.evaluation.get("traces"))
    write_traces(out, traces, cfg.mode)
    return {"runs": {cfg.mode: summarize(traces, cfg)}, "generations": len(history)}


def cmd_co_optimize(cfg, out, workers, resume):
    env = build_env(cfg)
    dcfg = cfg.design_config()
    tcfg = cfg.train_config()
    policy = None if dcfg.train_policy else fixed_policy(cfg)
    if dcfg.train_policy and cfg.policy.get("source") == "checkpoint":
        policy = load_policy(cfg._resolve(cfg.policy["checkpoint"]))
    with RolloutPool(env, workers) as pool:
        res = co_optimize(env, cfg.cost_params(), tcfg, dcfg, pool, policy)
    _write_rows(out / "history.csv", res.history.rows)
    if res.policy_history:
        _write_rows(out / "training.csv", _history_rows(res.policy_history))
    _save_policy(out, res.policy, cfg)
    d = res.design
    _write_json(out / "design.json", {"design": {"P_pv": d.P_pv, "E_bat": d.E_bat, "P_bat": d.P_bat},
                                      "mu": res.distribution.mu.tolist(), "sigma": res.distribution.sigma.tolist()})
    traces = evaluation_traces(env, res.policy, d, cfg.seed, cfg.evaluation.get("traces"))
    write_traces(out, traces, cfg.mode)
    return {"runs": {cfg.mode: summarize(traces, cfg)}, "mu": res.distribution.mu.tolist(),
            "design_batches": len(res.history.rows) // dcfg.n_up}


def cmd_compare(cfg, out, workers, resume):
    """Hybrid against co-located on the same data, design, seeds and policy budget."""
    design = cfg.fixed_design()
    train = cfg.policy.get("source", "train") == "train"
    runs = {}
    for mode in ("hybrid", "colocated"):
        env = build_env(cfg, mode)
        if train:
            with RolloutPool(env, workers) as pool:
                policy, history = _train(env, cfg, design, pool)
            _write_rows(out / f"training_{mode}.csv", _history_rows(history))
            _save_policy(out, policy, cfg, f"policy_{mode}.json")
        else:
            policy = fixed_policy(cfg)
        traces = evaluation_traces(env, policy, design, cfg.seed, cfg.evaluation.get("traces"))
        write_traces(out, traces, mode)
        runs[mode] = summarize(traces, cfg)
    h, c = runs["hybrid"], runs["colocated"]
    comparison = {k: {"hybrid": h[k], "colocated": c[k], "difference": h[k] - c[k]}
                  for k in ("total_revenue", "net_revenue_annual", "curtailment_mwh", "imbalance_penalty",
                            "mean_abs_delta_E")}
    comparison["hybrid_revenue_higher"] = h["total_revenue"] > c["total_revenue"]
    return {"runs": runs, "comparison": comparison}


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "co-optimize": cmd_co_optimize, "compare": cmd_compare}


def run_experiment(cfg: ExperimentConfig, command: str, out, workers: int = 1, resume: bool = False) -> Path:
    """Execute ``command`` and write its artifacts under ``out``.

    On failure a ``FAILED`` marker with the error is left in ``out`` and
    the exception propagates.
    """
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}"])
    if resume and command != "train":
        raise ConfigError(["--resume is only supported by the train command"])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / FAILED_MARKER).unlink(missing_ok=True)
    if (out / "traces").is_dir():
        shutil.rmtree(out / "traces")
    (out / "config.yaml").write_text(echo_config(cfg))
    try:
        summary = COMMANDS[command](cfg, out, workers, resume)
    except Exception as exc:
        (out / FAILED_MARKER).write_text(f"{command} failed: {type(exc).__name__}: {exc}\n")
        raise
    summary["command"] = command
    summary["seed"] = cfg.seed
    _write_json(out / "summary.json", summary)
    return out


def echo_config(cfg: ExperimentConfig) -> str:
    """Config as run, with file references made absolute so the echo can be re-run from anywhere."""
    doc = cfg.to_dict()
    if "path" in doc["data"]:
        doc["data"]["path"] = str(cfg.data_path().resolve())
    if doc["policy"].get("checkpoint"):
        doc["policy"]["checkpoint"] = str(cfg._resolve(doc["policy"]["checkpoint"]).resolve())
    return ExperimentConfig(**doc).dump()


# ---------------------------------------------------------------------------
# reports

def _monthly(trace_files: list[Path]) -> list[dict]:
    acc: dict = {}
    for f in trace_files:
        run = f.stem.rsplit("_", 1)[0]
        for r in _read_rows(f):
            key = (run, r["timestamp"][:7])
            a = acc.setdefault(key, {"run": run, "month": key[1], "steps": 0, "energy": 0.0, "as": 0.0,
                                     "degradation": 0.0, "imbalance": 0.0, "reward": 0.0, "curtailment_mwh": 0.0})
            a["steps"] += 1
            a["energy"] += float(r["energy_gross"])
            a["as"] += float(r["F_as"])
            a["degradation"] -= float(r["C_deg"])
            a["imbalance"] -= float(r["imbalance_penalty"])
            a["reward"] += float(r["reward"])
            a["curtailment_mwh"] += float(r["x_cur"])
    return [acc[k] for k in sorted(acc)]


def _mu_evolution(history: Path, n_up: int) -> list[dict]:
    """Distribution mean after each design batch."""
    out = []
    for r in _read_rows(history):
        if (int(r["episode"]) + 1) % n_up == 0:
            out.append({"episode": int(r["episode"]) + 1, "eta": float(r["eta"]),
                        "mu_P_pv": float(r["mu_P_pv"]), "mu_E_bat": float(r["mu_E_bat"]),
                        "mu_P_bat": float(r["mu_P_bat"])})
    return out


def emit_report(results_dir) -> list[Path]:
    """Derive CSV tables and a text summary from a finished results directory."""
    d = Path(results_dir)
    missing = [name for name in ("config.yaml", "summary.json") if not (d / name).is_file()]
    traces = sorted((d / "traces").glob("*.csv")) if (d / "traces").is_dir() else []
    if not traces:
        missing.append("traces/*.csv")
    if missing:
        raise ReportError(f"{d}: missing results artifacts: {', '.join(missing)}")
    if (d / FAILED_MARKER).exists():
        raise ReportError(f"{d}: run did not finish ({(d / FAILED_MARKER).read_text().strip()})")
    summary = json.loads((d / "summary.json").read_text())
    rep = d / "report"
    rep.mkdir(exist_ok=True)
    written = []

    runs = summary["runs"]
    _write_rows(rep / "breakdown.csv", [runs[m]["breakdown_annual"] for m in runs], BREAKDOWN_COLUMNS)
    written.append(rep / "breakdown.csv")
    _write_rows(rep / "monthly.csv", _monthly(traces))
    written.append(rep / "monthly.csv")
    if (d / "history.csv").is_file():
        doc = yaml.safe_load((d / "config.yaml").read_text()) or {}
        n_up = int((doc.get("design_opt") or {}).get("n_up", DesignConfig.n_up))
        _write_rows(rep / "mu_evolution.csv", _mu_evolution(d / "history.csv", n_up))
        written.append(rep / "mu_evolution.csv")

    lines = [f"command: {summary['command']}", f"seed: {summary['seed']}"]
    for m, r in runs.items():
        des = r["design"]
        lines.append(f"[{m}] design P_pv={des['P_pv']:.4g} MW  E_bat={des['E_bat']:.4g} MWh  "
                     f"P_bat={des['P_bat']:.4g} MW  accredited={r['accredited_mw']:.4g} MW")
        for c in BREAKDOWN_COLUMNS:
            lines.append(f"[{m}]   {c:<12}{r['breakdown_annual'][c]:>16,.2f} $/yr")
        lines.append(f"[{m}]   {'capex':<12}{-r['capex_annual']:>16,.2f} $/yr")
        lines.append(f"[{m}]   {'profit':<12}{r['profit_annual']:>16,.2f} $/yr")
        lines.append(f"[{m}]   episode revenue {r['total_revenue']:.2f} $, curtailed {r['curtailment_mwh']:.3f} MWh, "
                     f"mean |dE| {r['mean_abs_delta_E']:.4f} MWh")
    if "comparison" in summary:
        c = summary["comparison"]
        lines.append("hybrid - colocated: revenue {:+.2f} $, curtailment {:+.3f} MWh, imbalance penalty {:+.2f} $"
                     .format(c["total_revenue"]["difference"], c["curtailment_mwh"]["difference"],
                             c["imbalance_penalty"]["difference"]))
    if "mu" in summary:
        lines.append("final mu: " + ", ".join(f"{x:.4g}" for x in summary["mu"]))
    (rep / "summary.txt").write_text("\n".join(lines) + "\n")
    written.append(rep / "summary.txt")
    return written
