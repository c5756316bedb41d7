"""Gaussian design distribution updated by REINFORCE, and the joint design/policy loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .parallel import RolloutPool
from .plant import CostParams, DesignVector, PlantParams, annualized_capex
from .policy_opt import ESTrainer, PolicyParams, TrainConfig, draw_episode, episode_totals
from .settlement import PriceQuote, capacity_revenue, episode_return_from_sums
from .sim_env import EpisodeTrace, HybridEnv

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = (1.0, 2.0, 0.5)


@dataclass(frozen=True)
class DesignDistribution:
    """N(mu, diag(sigma^2)) over (P_pv MW, E_bat MWh, P_bat MW)."""

    mu: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_SIGMA))

    def __post_init__(self):
        mu = np.maximum(np.array(self.mu, dtype=float), 0.0)
        sigma = np.broadcast_to(np.array(self.sigma, dtype=float), (3,)).copy()
        if mu.shape != (3,) or not np.all(np.isfinite(mu)):
            raise ValueError("mu must be a finite 3-vector")
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be > 0")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def with_mu(self, mu) -> "DesignDistribution":
        return DesignDistribution(mu, self.sigma)


@dataclass(frozen=True)
class EpisodeScore:
    """Sampled design and its return.

    ``raw`` is the unclamped Gaussian draw used by the gradient estimate;
    ``omega`` is the clamped design the plant was simulated with.
    """

    omega: DesignVector
    G: float
    raw: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.G):
            raise ValueError("episode return must be finite")
        if self.raw is None:
            object.__setattr__(self, "raw", self.omega.as_array())

    @property
    def draw(self) -> np.ndarray:
        return np.asarray(self.raw, dtype=float)


@dataclass(frozen=True)
class EtaSchedule:
    decay_start: int
    decay_end: int

    def __post_init__(self):
        if not 0 <= self.decay_start < self.decay_end:
            raise ValueError("need 0 <= decay_start < decay_end")

    @classmethod
    def for_budget(cls, episodes: int, fraction: float = 0.5) -> "EtaSchedule":
        """Linear ramp over the first ``fraction`` of the episode budget."""
        return cls(0, max(int(round(episodes * fraction)), 1))


def eta_value(schedule: EtaSchedule, episode: int) -> float:
    if episode <= schedule.decay_start:
        return 1.0
    if episode >= schedule.decay_end:
        return 0.0
    return 1.0 - (episode - schedule.decay_start) / (schedule.decay_end - schedule.decay_start)


def sample_raw(dist: DesignDistribution, rng: np.random.Generator) -> np.ndarray:
    return dist.mu + dist.sigma * rng.standard_normal(3)


def sample_design(dist: DesignDistribution, rng: np.random.Generator) -> DesignVector:
    """Gaussian draw with negative sizes clamped to zero."""
    return DesignVector.from_array(sample_raw(dist, rng))


def log_density_grad(dist: DesignDistribution, omega) -> np.ndarray:
    w = omega.as_array() if isinstance(omega, DesignVector) else np.asarray(omega, dtype=float)
    return (w - dist.mu) / dist.sigma ** 2


def gradient_estimate(dist: DesignDistribution, batch: list[EpisodeScore], baseline: str = "mean") -> np.ndarray:
    """Score-function estimate of the gradient of E[G] with respect to mu.

    ``baseline="mean"`` subtracts the batch mean (the update rule).
    ``"leave_one_out"`` subtracts the mean of the other members, which
    removes the (N-1)/N shrinkage of the mean baseline; both point in
    exactly the same direction.
    """
    n = len(batch)
    if n < 2:
        raise ValueError("the baseline needs at least two episodes")
    G = np.array([s.G for s in batch])
    if baseline == "mean":
        adv = G - G.mean()
    elif baseline == "leave_one_out":
        adv = (G - G.mean()) * n / (n - 1)
    else:
        raise ValueError(f"unknown baseline {baseline!r}")
    scores = np.array([log_density_grad(dist, s.draw) for s in batch])
    return adv @ scores / n


def update_mu(dist: DesignDistribution, batch: list[EpisodeScore], alpha_mu: float) -> DesignDistribution:
    """One gradient-ascent step on mu, clamped at zero."""
    if alpha_mu < 0:
        raise ValueError("alpha_mu must be >= 0")
    return dist.with_mu(np.maximum(dist.mu + alpha_mu * gradient_estimate(dist, batch), 0.0))


# ---------------------------------------------------------------------------
# design-level return

def design_return(market_reward: float, deg_cost: float, design: DesignVector, W_anu: float, eta: float,
                  params: PlantParams, costs: CostParams, include_degradation: bool = True) -> float:
    """Annualized market value plus capacity payment minus the eta-weighted capex.

    ``market_reward`` is the episode sum of step rewards, which already
    nets out degradation; ``deg_cost`` is added back when it is excluded.
    """
    cap = capacity_revenue(PriceQuote(0.0, lambda_cap=costs.lambda_cap), design, params)
    capex = annualized_capex(design, costs)
    market_sum = market_reward + deg_cost
    return episode_return_from_sums(market_sum, deg_cost, cap, capex, W_anu, eta, include_degradation)


def trace_return(trace: EpisodeTrace, eta: float, params: PlantParams, costs: CostParams,
                 include_degradation: bool = True) -> float:
    t = trace.totals()
    return design_return(t["reward"], t["C_deg"], trace.design, trace.window.W_anu, eta, params, costs,
                         include_degradation)


# ---------------------------------------------------------------------------
# optimization loops

@dataclass(frozen=True)
class DesignConfig:
    mu0: tuple = (10.0, 20.0, 5.0)
    sigma: tuple = DEFAULT_SIGMA
    alpha_mu: float = 1e-6
    n_up: int = 32
    episodes: int = 3200
    eta_fraction: float = 0.5
    eta_fixed: float | None = None
    seed: int = 0
    include_degradation: bool = True
    train_policy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mu0", tuple(float(x) for x in self.mu0))
        object.__setattr__(self, "sigma", tuple(float(x) for x in np.broadcast_to(self.sigma, (3,))))
        if self.n_up < 2:
            raise ValueError("n_up must be >= 2")
        if self.alpha_mu < 0:
            raise ValueError("alpha_mu must be >= 0")
        if self.episodes < self.n_up:
            raise ValueError("episode budget smaller than one design batch")
        if not 0 <= self.eta_fraction <= 1:
            raise ValueError("eta_fraction must lie in [0, 1]")
        if self.eta_fixed is not None and not 0 <= self.eta_fixed <= 1:
            raise ValueError("eta_fixed must lie in [0, 1]")
        DesignDistribution(self.mu0, self.sigma)

    @property
    def schedule(self) -> EtaSchedule | None:
        """None means eta is held at 0 (capex fully charged from the start)."""
        if self.eta_fraction == 0:
            return None
        return EtaSchedule.for_budget(self.episodes, self.eta_fraction)

    def eta(self, episode: int) -> float:
        if self.eta_fixed is not None:
            return float(self.eta_fixed)
        s = self.schedule
        return 0.0 if s is None else eta_value(s, episode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu0"], d["sigma"] = list(self.mu0), list(self.sigma)
        return d


@dataclass
class DesignHistory:
    """Per-episode rows ``(episode, omega, G, eta, mu after the batch update)``."""

    rows: list = field(default_factory=list)

    def add(self, episode, raw, omega: DesignVector, G, eta, mu):
        self.rows.append({"episode": episode, "raw_P_pv": raw[0], "raw_E_bat": raw[1], "raw_P_bat": raw[2],
                          "P_pv": omega.P_pv, "E_bat": omega.E_bat, "P_bat": omega.P_bat, "G": G, "eta": eta,
                          "mu_P_pv": mu[0], "mu_E_bat": mu[1], "mu_P_bat": mu[2]})

    def mu_path(self) -> np.ndarray:
        return np.array([[r["mu_P_pv"], r["mu_E_bat"], r["mu_P_bat"]] for r in self.rows])


def _batch_draws(dist: DesignDistribution, seed: int, batch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11, batch]))
    return np.array([sample_raw(dist, rng) for _ in range(n)])


def optimize_design(score_fn: Callable[[DesignVector, float], float], config: DesignConfig,
                    ) -> tuple[DesignDistribution, DesignHistory]:
    """Design-gradient loop against an arbitrary ``score_fn(design, eta) -> G``."""
    dist = DesignDistribution(config.mu0, config.sigma)
    hist = DesignHistory()
    for b in range(config.episodes // config.n_up):
        ep0 = b * config.n_up
        eta = config.eta(ep0)
        raws = _batch_draws(dist, config.seed, b, config.n_up)
        batch = []
        for r in raws:
            omega = DesignVector.from_array(r)
            batch.append(EpisodeScore(omega, float(score_fn(omega, eta)), r))
        dist = update_mu(dist, batch, config.alpha_mu)
        for i, s in enumerate(batch):
            hist.add(ep0 + i, s.draw, s.omega, s.G, eta, dist.mu)
    return dist, hist


@dataclass
class CoOptResult:
    design: DesignVector
    distribution: DesignDistribution
    policy: PolicyParams
    history: DesignHistory
    policy_history: list


def co_optimize(env: HybridEnv, costs: CostParams, policy_config: TrainConfig, design_config: DesignConfig,
                pool: RolloutPool | None = None, policy: PolicyParams | None = None) -> CoOptResult:
    """Joint loop: each batch of ``n_up`` episodes scores designs and, optionally, trains the policy.

    With policy training on, the batch is one ES generation: each
    antithetic pair operates one sampled design, and the members' episode
    returns score both the policy perturbations and the designs.
    """
    cfg = design_config
    pool = pool or RolloutPool(env)
    params = env.params
    dist = DesignDistribution(cfg.mu0, cfg.sigma)
    hist = DesignHistory()
    if cfg.train_policy:
        if cfg.n_up % 2:
            raise ValueError("n_up must be even when the policy is trained (antithetic pairs)")
        pcfg = replace(policy_config, population=cfg.n_up)
        trainer = ESTrainer(env, pcfg, design_source=lambda rng: sample_design(dist, rng), policy=policy, pool=pool)
    else:
        trainer = None
        if policy is None:
            raise ValueError("a fixed policy is required when policy training is off")
    for b in range(cfg.episodes // cfg.n_up):
        ep0 = b * cfg.n_up
        eta = cfg.eta(ep0)
        if trainer is not None:
            # warm-up and evaluation designs follow the current distribution
            trainer.design_source = lambda rng, _d=dist: sample_design(_d, rng)
            raws = _batch_draws(dist, cfg.seed, b, cfg.n_up // 2)
            members = trainer.step([DesignVector.from_array(r) for r in raws])
            raws = np.repeat(raws, 2, axis=0)
        else:
            raws = _batch_draws(dist, cfg.seed, b, cfg.n_up)
            specs = [draw_episode(env, DesignVector.from_array(r), cfg.seed, 12, b, i) for i, r in enumerate(raws)]
            out = pool.map(episode_totals, [(None, policy, d, w, s) for d, w, s in specs])
            members = [(d, w, r, c) for (d, w, _), (r, c) in zip(specs, out)]
        batch = []
        for r, (omega, w, reward, deg) in zip(raws, members):
            G = design_return(reward, deg, omega, env.windows[w].W_anu, eta, params, costs, cfg.include_degradation)
            batch.append(EpisodeScore(omega, G, r))
        dist = update_mu(dist, batch, cfg.alpha_mu)
        for i, s in enumerate(batch):
            hist.add(ep0 + i, s.draw, s.omega, s.G, eta, dist.mu)
        logger.info("batch %d: eta %.3f mu %s", b, eta, np.array2string(dist.mu, precision=3))
    final_policy = policy
    policy_history = []
    if trainer is not None:
        trainer.evaluate()
        final_policy = trainer.best_policy
        policy_history = trainer.history
    return CoOptResult(DesignVector.from_array(dist.mu), dist, final_policy, hist, policy_history)
