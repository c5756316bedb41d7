"""Experiment configuration: YAML tree -> validated objects.

Every plant and cost parameter has a key whose default is the reference
value, so a config only lists what it changes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .design_opt import DesignConfig
from .dispatch import ActivationModel
from .market_data import (DataError, EpisodeWindow, MarketSeries, PvSeries, episode_window, load_series,
                          monthly_windows, resample_and_scale)
from .plant import CostParams, DesignVector, PlantParams
from .policy_opt import TrainConfig
from .serial_bidding import ExponentialSmoothingForecaster, PerfectForecaster, PersistenceForecaster
from .synthetic import SyntheticSpec, make_series

COMMANDS = ("simulate", "train", "co-optimize", "compare", "report")
MODES = ("hybrid", "colocated")
POLICY_SOURCES = ("train", "init", "zero", "checkpoint", "constant")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synthetic": {}})
    windows: dict = field(default_factory=lambda: {"kind": "single"})
    mode: str = "hybrid"
    plant: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    market_scaling: dict = field(default_factory=dict)
    activation: dict = field(default_factory=dict)
    forecaster: dict = field(default_factory=lambda: {"kind": "persistence"})
    initial_soc: float = 0.5
    design: dict = field(default_factory=lambda: {"P_pv": 11.0, "E_bat": 20.0, "P_bat": 5.0})
    policy: dict = field(default_factory=dict)
    design_opt: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    seed: int = 0
    base_dir: str = "."

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError(["top level must be a mapping"])
        known = _fields(cls) - {"base_dir"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        cfg = cls(**doc, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"cannot parse {path}: {exc}"]) from None
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    # -- typed views --------------------------------------------------------

    def plant_params(self) -> PlantParams:
        return PlantParams(**self.plant)

    def cost_params(self) -> CostParams:
        return CostParams(**self.costs)

    def activation_model(self) -> ActivationModel:
        return ActivationModel(**self.activation)

    def fixed_design(self) -> DesignVector:
        return DesignVector(float(self.design["P_pv"]), float(self.design["E_bat"]), float(self.design["P_bat"]))

    def train_config(self) -> TrainConfig:
        d = {k: v for k, v in self.policy.items() if k in _fields(TrainConfig)}
        d.setdefault("seed", self.seed)
        return TrainConfig(**d)

    def design_config(self) -> DesignConfig:
        d = dict(self.design_opt)
        d.setdefault("seed", self.seed)
        return DesignConfig(**d)

    def make_forecaster(self):
        kind = self.forecaster.get("kind", "persistence")
        if kind == "persistence":
            return PersistenceForecaster()
        if kind == "exp_smoothing":
            return ExponentialSmoothingForecaster(float(self.forecaster.get("alpha", 0.5)))
        if kind == "perfect":
            return PerfectForecaster()
        raise ValueError(f"unknown forecaster {kind!r}")

    def data_path(self) -> Path | None:
        p = self.data.get("path")
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def load_data(self) -> tuple[MarketSeries, PvSeries]:
        if "path" in self.data:
            market, pv = load_series(self.data_path(), self.data.get("schema"))
        else:
            market, pv = make_series(SyntheticSpec(**self.data.get("synthetic", {})))
        dt_target = self.data.get("dt")
        nameplate = self.data.get("pv_nameplate")
        if dt_target is not None or nameplate is not None:
            market, pv = resample_and_scale(market, pv, float(dt_target or market.dt_hours), nameplate)
        s = self.market_scaling
        if s:
            market = market.scaled(s.get("energy", 1.0), s.get("res", 1.0), s.get("up", 1.0), s.get("dn", 1.0))
        return market, pv

    def make_windows(self, market: MarketSeries) -> list[EpisodeWindow]:
        w = self.windows
        kind = w.get("kind", "single")
        n = len(market)
        dt = market.dt_hours
        if kind == "single":
            start = int(w.get("start", 1))
            T = int(w.get("length", n - start))
            return [episode_window(n, T, dt, start)]
        if kind == "monthly":
            return monthly_windows(market, int(w.get("min_length", 1)))
        if kind == "rolling":
            T = int(w["length"])
            stride = int(w.get("stride", T))
            return [episode_window(n, T, dt, s) for s in range(1, n - T + 1, stride)]
        raise ValueError(f"unknown window kind {kind!r}")

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        problems = []

        def attempt(label, fn):
            try:
                return fn()
            except (TypeError, ValueError, KeyError, DataError, FileNotFoundError) as exc:
                problems.append(f"{label}: {exc}")
                return None

        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        for name, cls in (("plant", PlantParams), ("costs", CostParams), ("activation", ActivationModel)):
            extra = sorted(set(getattr(self, name)) - _fields(cls))
            if extra:
                problems.append(f"{name}: unknown keys {extra}")
            else:
                attempt(name, lambda n=name: getattr(self, {"plant": "plant_params", "costs": "cost_params",
                                                             "activation": "activation_model"}[n])())
        extra = sorted(set(self.policy) - _fields(TrainConfig) - {"source", "checkpoint", "action"})
        if extra:
            problems.append(f"policy: unknown keys {extra}")
        else:
            attempt("policy", self.train_config)
            src = self.policy.get("source", "train")
            if src not in POLICY_SOURCES:
                problems.append(f"policy.source must be one of {POLICY_SOURCES}, got {src!r}")
            if src == "checkpoint":
                ck = self.policy.get("checkpoint")
                if ck is None or not self._resolve(ck).is_file():
                    problems.append(f"policy.checkpoint not found: {ck!r}")
            if src == "constant":
                a = self.policy.get("action")
                if not isinstance(a, (list, tuple)) or len(a) != 5:
                    problems.append("policy.action must be a list of 5 numbers")
        extra = sorted(set(self.design_opt) - _fields(DesignConfig))
        if extra:
            problems.append(f"design_opt: unknown keys {extra}")
        else:
            attempt("design_opt", self.design_config)
        attempt("design", self.fixed_design)
        attempt("forecaster", self.make_forecaster)
        extra = sorted(set(self.market_scaling) - {"energy", "res", "up", "dn"})
        if extra:
            problems.append(f"market_scaling: unknown keys {extra}")
        extra = sorted(set(self.evaluation) - {"episodes", "traces"})
        if extra:
            problems.append(f"evaluation: unknown keys {extra}")
        for key in ("episodes", "traces"):
            v = self.evaluation.get(key)
            if v is not None and (not isinstance(v, int) or v < 1):
                problems.append(f"evaluation.{key} must be a positive integer")
        if "path" in self.data:
            p = self.data_path()
            if not p.is_file():
                problems.append(f"data file not found: {p}")
        elif "synthetic" in self.data:
            extra = sorted(set(self.data["synthetic"]) - _fields(SyntheticSpec))
            if extra:
                problems.append(f"data.synthetic: unknown keys {extra}")
        else:
            problems.append("data needs either 'path' or 'synthetic'")
        if not problems:
            plant = self.plant_params()
            if not plant.S_min <= self.initial_soc <= plant.S_max:
                problems.append(f"initial_soc {self.initial_soc} outside [{plant.S_min}, {plant.S_max}]")
            data = attempt("data", self.load_data)
            if data is not None:
                if data[0].dt_hours != plant.dt:
                    problems.append(f"data resolution {data[0].dt_hours} h differs from plant.dt {plant.dt} h")
                ws = attempt("windows", lambda: self.make_windows(data[0]))
                if ws is not None and not ws:
                    problems.append("windows: no episode window fits the data")
        if not isinstance(self.seed, int) or self.seed < 0:
            problems.append("seed must be a non-negative integer")
        if problems:
            raise ConfigError(problems)

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p
