"""Synthetic problem generation, logging-policy simulation, and reward shifts.

Two generation schemes are provided: a multiclass conversion where exactly one
action per context has reward 1, and a feature-split scheme where one raw
vector per context is cut into context features and continuous per-action
rewards. Everything is deterministic given the config seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ContractError,
    LoggedDataset,
    Policy,
    SoftmaxPolicy,
    SyntheticProblem,
    clip_support,
    prob_table,
)

LOGGER_STEPS = 40
LOGGER_LEARN_RATE = 0.5


@dataclass(frozen=True)
class GenConfig:
    scheme: str  # "multiclass" | "feature_split"
    n_contexts: int
    context_dim: int
    n_actions: int
    seed: int
    temperature: float = 1.0
    clip_threshold: float = 0.01

    def __post_init__(self):
        if self.scheme not in ("multiclass", "feature_split"):
            raise ContractError(f"unknown scheme {self.scheme!r}")
        if min(self.n_contexts, self.context_dim, self.n_actions) < 1:
            raise ContractError("n_contexts, context_dim, n_actions must be positive")
        if self.scheme == "feature_split" and self.n_actions < 2:
            raise ContractError("feature_split needs at least 2 actions")
        if self.temperature <= 0:
            raise ContractError("temperature must be positive")

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "n_contexts": self.n_contexts,
            "context_dim": self.context_dim,
            "n_actions": self.n_actions,
            "seed": self.seed,
            "temperature": self.temperature,
            "clip_threshold": self.clip_threshold,
        }

    @staticmethod
    def from_dict(d: dict) -> "GenConfig":
        return GenConfig(
            scheme=d["scheme"],
            n_contexts=int(d["n_contexts"]),
            context_dim=int(d["context_dim"]),
            n_actions=int(d["n_actions"]),
            seed=int(d["seed"]),
            temperature=float(d.get("temperature", 1.0)),
            clip_threshold=float(d.get("clip_threshold", 0.01)),
        )


def make_multiclass_problem(config: GenConfig) -> SyntheticProblem:
    """One correct label per context; reward is the 0/1 label indicator.

    Labels come from a seeded random linear scorer of the context features,
    so they are predictable from the features (as in a real supervised
    conversion) rather than independent noise.
    """
    if config.scheme != "multiclass":
        raise ContractError("config.scheme must be 'multiclass'")
    rng = np.random.default_rng(config.seed)
    contexts = rng.standard_normal((config.n_contexts, config.context_dim))
    scorer = rng.standard_normal((config.context_dim, config.n_actions))
    labels = (contexts @ scorer).argmax(axis=1)
    rewards = np.zeros((config.n_contexts, config.n_actions))
    rewards[np.arange(config.n_contexts), labels] = 1.0
    return SyntheticProblem(
        contexts=contexts,
        context_weights=np.full(config.n_contexts, 1.0 / config.n_contexts),
        n_actions=config.n_actions,
        mean_reward=rewards,
        reward_bounds=(0.0, 1.0),
        reward_noise="deterministic",
    )


def make_feature_split_problem(config: GenConfig) -> SyntheticProblem:
    """Split one raw normal vector per context into features and per-action
    rewards; rewards are min-max normalized to [0, 1] over the whole table."""
    if config.scheme != "feature_split":
        raise ContractError("config.scheme must be 'feature_split'")
    rng = np.random.default_rng(config.seed)
    raw = rng.standard_normal((config.n_contexts, config.context_dim + config.n_actions))
    contexts = raw[:, : config.context_dim]
    rewards = raw[:, config.context_dim :]
    lo, hi = rewards.min(), rewards.max()
    rewards = (rewards - lo) / (hi - lo)
    return SyntheticProblem(
        contexts=contexts,
        context_weights=np.full(config.n_contexts, 1.0 / config.n_contexts),
        n_actions=config.n_actions,
        mean_reward=rewards,
        reward_bounds=(0.0, 1.0),
        reward_noise="deterministic",
    )


def make_problem(config: GenConfig) -> SyntheticProblem:
    if config.scheme == "multiclass":
        return make_multiclass_problem(config)
    return make_feature_split_problem(config)


def make_logging_policy(
    problem: SyntheticProblem,
    temperature: float,
    clip_threshold: float,
    seed: int,
) -> SoftmaxPolicy:
    """Informed-but-imperfect logger: a few cross-entropy steps toward the
    best action per context, temperature applied to the scores, then hard
    clipping of small propensities to exact zero (with renormalization).

    Larger temperatures concentrate the softmax and so produce more
    unsupported (context, action) pairs at a fixed clip threshold.
    """
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    del seed  # logger fitting is deterministic; kept for interface stability
    best = problem.mean_reward.argmax(axis=1)
    onehot = np.zeros((problem.n_contexts, problem.n_actions))
    onehot[np.arange(problem.n_contexts), best] = 1.0
    x = problem.contexts
    pw = problem.context_weights[:, None]
    w = np.zeros((problem.context_dim, problem.n_actions))
    # Deliberately capped step count keeps the logger stochastic.
    for _ in range(LOGGER_STEPS):
        scores = x @ w
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        p = e / e.sum(axis=1, keepdims=True)
        w -= LOGGER_LEARN_RATE * (x.T @ (pw * (p - onehot)))
    policy = SoftmaxPolicy(weights=w, temperature=temperature)
    return clip_support(policy, problem.contexts, clip_threshold)


def unsupported_fraction(logging: Policy, problem: SyntheticProblem) -> float:
    """Fraction of (context, action) pairs with zero logging probability."""
    return float((prob_table(logging, problem) == 0.0).mean())


def log_interactions(
    problem: SyntheticProblem, logging: Policy, n: int, seed: int
) -> LoggedDataset:
    """Draw n logged interactions: x ~ P(X), y ~ pi_0(.|x), r from the reward
    law; the recorded propensity is the exact logging probability."""
    if n < 1:
        raise ContractError("n must be positive")
    rng = np.random.default_rng(seed)
    table = prob_table(logging, problem)
    ctx = rng.choice(problem.n_contexts, size=n, p=problem.context_weights)
    actions = np.empty(n, dtype=int)
    for i in np.unique(ctx):
        sel = ctx == i
        actions[sel] = rng.choice(problem.n_actions, size=int(sel.sum()), p=table[i])
    means = problem.mean_reward[ctx, actions]
    if problem.reward_noise == "bernoulli":
        rewards = (rng.random(n) < means).astype(float)
    else:
        rewards = means.copy()
    return LoggedDataset(
        features=problem.contexts[ctx],
        actions=actions,
        rewards=rewards,
        propensities=table[ctx, actions],
        context_index=ctx,
    )


def translate_rewards(obj, offset: float):
    """Shift every reward (and both bounds, for problems) by a constant."""
    if isinstance(obj, SyntheticProblem):
        r_min, r_max = obj.reward_bounds
        return SyntheticProblem(
            contexts=obj.contexts,
            context_weights=obj.context_weights,
            n_actions=obj.n_actions,
            mean_reward=obj.mean_reward + offset,
            reward_bounds=(r_min + offset, r_max + offset),
            reward_noise="deterministic" if offset != 0 else obj.reward_noise,
        )
    if isinstance(obj, LoggedDataset):
        return LoggedDataset(
            features=obj.features,
            actions=obj.actions,
            rewards=obj.rewards + offset,
            propensities=obj.propensities,
            context_index=obj.context_index,
        )
    raise ContractError(f"cannot translate rewards of {type(obj).__name__}")
