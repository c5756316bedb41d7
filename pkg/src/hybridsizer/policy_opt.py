"""Feed-forward operating policy and its evolution-strategy trainer.

Any object with ``kernel_args()`` or a plain callable ``obs -> action``
can be rolled out by the environment; the trainer below is the default
learner.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .parallel import RolloutPool
from .plant import DesignVector
from .serial_bidding import AgentAction
from .sim_env import HybridEnv, Observation

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hybridsizer-policy"
CHECKPOINT_VERSION = 1
N_ACTIONS = 5
# seed-sequence tags separating the random streams
_TAG_PERTURB, _TAG_EPISODE, _TAG_EVAL, _TAG_WARMUP, _TAG_INIT = 0, 1, 2, 3, 4


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """MLP with tanh hidden layers and a logistic output onto [0, 1]^5.

    Weights are packed layer by layer as ``W`` (out x in, row-major)
    followed by ``b``. Observations are standardized with the frozen
    ``obs_mean``/``obs_std`` before the first layer.
    """

    sizes: tuple
    weights: np.ndarray
    obs_mean: np.ndarray
    obs_std: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or sizes[0] != kernels.OBS_DIM or sizes[-1] != N_ACTIONS:
            raise ValueError(f"sizes must run from {kernels.OBS_DIM} to {N_ACTIONS}, got {sizes}")
        w = np.array(self.weights, dtype=float)
        if w.shape != (n_params(sizes),):
            raise ValueError(f"expected {n_params(sizes)} weights, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("policy weights must be finite")
        mean = np.array(self.obs_mean, dtype=float)
        std = np.array(self.obs_std, dtype=float)
        if mean.shape != (sizes[0],) or std.shape != (sizes[0],) or np.any(std <= 0):
            raise ValueError("normalization statistics must be 9-vectors with positive std")
        for a in (w, mean, std):
            a.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "obs_mean", mean)
        object.__setattr__(self, "obs_std", std)

    def kernel_args(self):
        return self.weights, np.array(self.sizes, dtype=np.int64), self.obs_mean, self.obs_std

    def __call__(self, obs_vec) -> np.ndarray:
        x = (np.asarray(obs_vec, dtype=float) - self.obs_mean) / self.obs_std
        return kernels.get_backend("python").mlp_forward(self.weights, self.sizes, x)

    def with_weights(self, weights) -> "PolicyParams":
        return PolicyParams(self.sizes, weights, self.obs_mean, self.obs_std)

    def with_normalization(self, mean, std) -> "PolicyParams":
        return PolicyParams(self.sizes, self.weights, mean, std)

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "weights": self.weights.tolist(),
                "obs_mean": self.obs_mean.tolist(), "obs_std": self.obs_std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyParams":
        return cls(tuple(d["sizes"]), d["weights"], d["obs_mean"], d["obs_std"])


def n_params(sizes) -> int:
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def init_policy(hidden=(32, 32), seed: int = 0) -> PolicyParams:
    """Scaled Gaussian hidden layers, zero output layer (initial action 0.5 everywhere)."""
    sizes = (kernels.OBS_DIM, *hidden, N_ACTIONS)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_INIT]))
    parts = []
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        last = i == len(sizes) - 2
        W = np.zeros((n_out, n_in)) if last else rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)
        parts += [W.ravel(), np.zeros(n_out)]
    return PolicyParams(sizes, np.concatenate(parts), np.zeros(sizes[0]), np.ones(sizes[0]))


def zero_policy(hidden=(32, 32)) -> PolicyParams:
    sizes = (kernels.OBS_DIM, *hidden, N_ACTIONS)
    return PolicyParams(sizes, np.zeros(n_params(sizes)), np.zeros(sizes[0]), np.ones(sizes[0]))


def act(policy, obs: Observation | np.ndarray) -> AgentAction:
    x = obs.as_array() if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("observation contains non-finite values")
    return AgentAction.from_array(policy(x))


# ---------------------------------------------------------------------------
# episodes

DesignSource = Callable[[np.random.Generator], DesignVector]


def _as_source(design_source) -> DesignSource:
    if design_source is None:
        raise ValueError("a design or design source is required")
    if isinstance(design_source, DesignVector):
        return lambda rng: design_source
    return design_source


def _seed_int(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])


def draw_episode(env: HybridEnv, design_source, *key) -> tuple[DesignVector, int, int]:
    """``(design, window index, activation seed)`` derived from ``key`` only."""
    rng = np.random.default_rng(np.random.SeedSequence(list(key)))
    design = _as_source(design_source)(rng)
    w = int(rng.integers(len(env.windows))) if len(env.windows) > 1 else 0
    return design, w, _seed_int(*key, 7)


def episode_reward(env: HybridEnv, weights, policy: PolicyParams, design: DesignVector, w: int, seed: int) -> float:
    p = policy if weights is None else policy.with_weights(weights)
    return env.rollout(p, design, env.windows[w], seed).total_reward


def episode_totals(env: HybridEnv, weights, policy: PolicyParams, design: DesignVector, w: int,
                   seed: int) -> tuple[float, float]:
    """``(sum of step rewards, degradation cost)`` of one episode."""
    p = policy if weights is None else policy.with_weights(weights)
    t = env.rollout(p, design, env.windows[w], seed).totals()
    return t["reward"], t["C_deg"]


def _episode_obs(env: HybridEnv, policy, design, w, seed) -> np.ndarray:
    return env.rollout(policy, design, env.windows[w], seed).observations


def evaluate_policy(policy, env: HybridEnv, n_episodes: int, seed: int = 0, design_source=None,
                    pool: RolloutPool | None = None) -> tuple[float, list[float]]:
    """Mean and per-episode rewards over ``n_episodes`` seeded episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    specs = [draw_episode(env, design_source, seed, _TAG_EVAL, i) for i in range(n_episodes)]
    if hasattr(policy, "kernel_args"):
        tasks = [(None, policy, d, w, s) for d, w, s in specs]
        rewards = (pool or RolloutPool(env)).map(episode_reward, tasks)
    else:
        rewards = [env.rollout(policy, d, env.windows[w], s).total_reward for d, w, s in specs]
    return float(np.mean(rewards)), [float(r) for r in rewards]


# ---------------------------------------------------------------------------
# evolution strategy

@dataclass(frozen=True)
class TrainConfig:
    population: int = 32
    sigma: float = 0.1
    learning_rate: float = 0.05
    episodes: int = 3200
    eval_every: int = 5
    eval_episodes: int = 4
    seed: int = 0
    warmup_episodes: int = 100
    hidden: tuple = (32, 32)
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if self.sigma <= 0 or self.learning_rate <= 0:
            raise ValueError("sigma and learning_rate must be > 0")
        if self.episodes < self.population:
            raise ValueError("episode budget smaller than one generation")
        if self.eval_every < 1 or self.eval_episodes < 1 or self.warmup_episodes < 0:
            raise ValueError("eval_every and eval_episodes must be >= 1, warmup_episodes >= 0")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    @property
    def generations(self) -> int:
        return self.episodes // self.population

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def centered_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks mapped onto [-0.5, 0.5]; non-finite values rank lowest, ties broken by position."""
    x = np.where(np.isfinite(x), x, -np.inf)
    ranks = np.empty(x.size)
    ranks[np.argsort(x, kind="stable")] = np.arange(x.size)
    return ranks / max(x.size - 1, 1) - 0.5


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Ascent step for ``grad``."""
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    policy: PolicyParams
    best_reward: float
    history: list = field(default_factory=list)


class ESTrainer:
    """Antithetic Gaussian ES with centered-rank fitness shaping and Adam.

    Member pair ``j`` of generation ``g`` draws its perturbation and its
    episode (window, design, activation seed) from seeds derived from
    ``(seed, g, j)``, so results do not depend on execution order. Both
    members of a pair see the same episode.
    """

    def __init__(self, env: HybridEnv, config: TrainConfig, design_source=None,
                 policy: PolicyParams | None = None, pool: RolloutPool | None = None):
        self.env = env
        self.config = config
        self.design_source = design_source
        self.pool = pool or RolloutPool(env)
        self.policy = policy or init_policy(config.hidden, config.seed)
        self.adam = Adam(config.learning_rate)
        self.generation = 0
        self.episodes_used = 0
        self.best_policy = self.policy
        self.best_reward = -np.inf
        self.history: list[dict] = []
        self.normalized = policy is not None
        self._any_finite = False

    # -- normalization ------------------------------------------------------

    def warmup(self) -> None:
        """Freeze observation statistics from warm-up episodes of the current policy."""
        n = self.config.warmup_episodes
        if self.normalized:
            return
        self.normalized = True
        if n == 0:
            return
        specs = [draw_episode(self.env, self.design_source, self.config.seed, _TAG_WARMUP, i) for i in range(n)]
        obs = self.pool.map(_episode_obs, [(self.policy, d, w, s) for d, w, s in specs])
        allobs = np.concatenate(obs)
        mean = allobs.mean(axis=0)
        std = allobs.std(axis=0)
        std = np.where(std < 1e-8, 1.0, std)
        self.policy = self.policy.with_normalization(mean, std)
        self.best_policy = self.policy

    # -- one generation -----------------------------------------------------

    def perturbations(self, gen: int) -> np.ndarray:
        cfg = self.config
        n = self.policy.weights.size
        eps = np.empty((cfg.population // 2, n))
        for j in range(eps.shape[0]):
            eps[j] = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_PERTURB, gen, j])).standard_normal(n)
        return eps

    def episode_specs(self, gen: int, designs=None) -> list:
        cfg = self.config
        specs = []
        for j in range(cfg.population // 2):
            d, w, s = draw_episode(self.env, self.design_source if designs is None else designs[j],
                                   cfg.seed, _TAG_EPISODE, gen, j)
            specs.append((d, w, s))
        return specs

    def step(self, designs=None) -> list[tuple]:
        """Run one generation.

        Returns ``(design, window index, reward, degradation)`` for every
        member, antithetic pairs adjacent.

        ``designs`` optionally overrides the design of each antithetic pair.
        """
        if not self.normalized:
            self.warmup()
        cfg = self.config
        gen = self.generation
        theta = self.policy.weights
        eps = self.perturbations(gen)
        specs = self.episode_specs(gen, designs)
        tasks = []
        for j, (d, w, s) in enumerate(specs):
            tasks.append((theta + cfg.sigma * eps[j], self.policy, d, w, s))
            tasks.append((theta - cfg.sigma * eps[j], self.policy, d, w, s))
        out = self.pool.map(episode_totals, tasks)
        rewards = np.array([r for r, _ in out])
        finite = np.isfinite(rewards)
        self._any_finite |= bool(finite.any())
        shaped = centered_ranks(rewards)
        w_pair = shaped[0::2] - shaped[1::2]
        grad = (w_pair @ eps) / (cfg.population * cfg.sigma)
        if cfg.weight_decay:
            grad = grad - cfg.weight_decay * theta
        self.policy = self.policy.with_weights(theta + self.adam.step(grad))
        self.generation += 1
        self.episodes_used += cfg.population
        row = {"generation": gen, "episodes": self.episodes_used,
               "mean_reward": float(np.mean(rewards[finite])) if finite.any() else float("nan")}
        if self.generation % cfg.eval_every == 0:
            row.update(self.evaluate())
        self.history.append(row)
        return [(specs[k // 2][0], specs[k // 2][1], float(rewards[k]), out[k][1]) for k in range(len(rewards))]

    def evaluate(self) -> dict:
        score, _ = evaluate_policy(self.policy, self.env, self.config.eval_episodes, self.config.seed,
                                   self.design_source, self.pool)
        if score > self.best_reward:
            self.best_reward = score
            self.best_policy = self.policy
        return {"eval_reward": score, "best_reward": self.best_reward}

    def run(self) -> TrainResult:
        while self.generation < self.config.generations:
            self.step()
            if self.history[-1].get("eval_reward") is not None:
                logger.info("generation %d: eval %.6g best %.6g", self.generation,
                            self.history[-1]["eval_reward"], self.best_reward)
        if not self._any_finite:
            raise RuntimeError("no episode produced a finite reward")
        if self.generation % self.config.eval_every != 0 or not self.history:
            self.evaluate()
        return TrainResult(self.best_policy, self.best_reward, self.history)

    # -- checkpoints --------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "policy": self.policy.to_dict(), "best_policy": self.best_policy.to_dict(),
            "best_reward": self.best_reward if np.isfinite(self.best_reward) else None,
            "generation": self.generation, "episodes_used": self.episodes_used,
            "normalized": self.normalized, "any_finite": self._any_finite,
            "adam": {"t": self.adam.t, "m": None if self.adam.m is None else self.adam.m.tolist(),
                     "v": None if self.adam.v is None else self.adam.v.tolist()},
            "history": self.history,
        }

    def load_state_dict(self, doc: dict) -> None:
        check_checkpoint(doc)
        self.policy = PolicyParams.from_dict(doc["policy"])
        self.best_policy = PolicyParams.from_dict(doc["best_policy"])
        self.best_reward = -np.inf if doc["best_reward"] is None else doc["best_reward"]
        self.generation = doc["generation"]
        self.episodes_used = doc["episodes_used"]
        self.normalized = doc["normalized"]
        self._any_finite = doc["any_finite"]
        a = doc["adam"]
        self.adam.t = a["t"]
        self.adam.m = None if a["m"] is None else np.array(a["m"])
        self.adam.v = None if a["v"] is None else np.array(a["v"])
        self.history = list(doc["history"])


def train_policy(env: HybridEnv, design_source, config: TrainConfig, pool: RolloutPool | None = None) -> PolicyParams:
    """Train with the evolution strategy and return the best-evaluated parameters."""
    return ESTrainer(env, config, design_source, pool=pool).run().policy


# ---------------------------------------------------------------------------
# checkpoint files

def check_checkpoint(doc: dict) -> None:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")


def save_policy(policy: PolicyParams, path, config: dict | None = None) -> None:
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "config": config or {},
           "policy": policy.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_policy(path) -> PolicyParams:
    doc = json.loads(Path(path).read_text())
    check_checkpoint(doc)
    return PolicyParams.from_dict(doc["policy"])
