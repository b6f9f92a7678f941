"""Core domain types: finite bandit problems, policies, logged data, support sets.

Everything here is a pure value object. Arrays are frozen after construction so
instances can be shared freely across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

PROB_ATOL = 1e-12


class BandexError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(BandexError):
    """A precondition on inputs was violated (shape/domain mismatch)."""


class InvalidPolicyError(BandexError):
    """A policy ended up with no allowed action for some context."""


class DegenerateRestrictionError(BandexError):
    """Action restriction with all target mass on the unsupported set."""


class CorruptDataError(BandexError):
    """Logged data violates its own invariants (e.g. nonpositive propensity)."""


class TrainingFailure(BandexError):
    """Gradient training diverged (NaN/inf in the parameters or objective)."""


class StageFailure(BandexError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SyntheticProblem:
    """Fully specified finite bandit environment.

    contexts        : (n_contexts, dim) feature matrix, one row per context.
    context_weights : P(X), nonnegative, sums to one.
    n_actions       : size of the action set.
    mean_reward     : (n_contexts, n_actions) table of mean rewards.
    reward_bounds   : (r_min, r_max) with every mean reward inside.
    reward_noise    : "deterministic" or "bernoulli" (the latter only for
                      rewards in [0, 1]).
    """

    contexts: np.ndarray
    context_weights: np.ndarray
    n_actions: int
    mean_reward: np.ndarray
    reward_bounds: tuple[float, float]
    reward_noise: str = "deterministic"

    def __post_init__(self):
        contexts = _freeze(np.asarray(self.contexts, dtype=float))
        weights = _freeze(np.asarray(self.context_weights, dtype=float))
        rewards = _freeze(np.asarray(self.mean_reward, dtype=float))
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "context_weights", weights)
        object.__setattr__(self, "mean_reward", rewards)
        if contexts.ndim != 2:
            raise ContractError("contexts must be a 2-d feature matrix")
        if weights.shape != (contexts.shape[0],):
            raise ContractError("context_weights must match the number of contexts")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > PROB_ATOL:
            raise ContractError("context_weights must be a probability vector")
        if rewards.shape != (contexts.shape[0], self.n_actions):
            raise ContractError("mean_reward must be (n_contexts, n_actions)")
        r_min, r_max = self.reward_bounds
        if np.any(rewards < r_min - PROB_ATOL) or np.any(rewards > r_max + PROB_ATOL):
            raise ContractError("mean rewards must lie within reward_bounds")
        if self.reward_noise not in ("deterministic", "bernoulli"):
            raise ContractError(f"unknown reward_noise {self.reward_noise!r}")
        if self.reward_noise == "bernoulli" and (r_min < 0 or r_max > 1):
            raise ContractError("bernoulli noise requires rewards in [0, 1]")

    @property
    def n_contexts(self) -> int:
        return self.contexts.shape[0]

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    def to_dict(self) -> dict:
        return {
            "contexts": self.contexts.tolist(),
            "context_weights": self.context_weights.tolist(),
            "n_actions": self.n_actions,
            "mean_reward": self.mean_reward.tolist(),
            "reward_bounds": list(self.reward_bounds),
            "reward_noise": self.reward_noise,
        }

    @staticmethod
    def from_dict(d: dict) -> "SyntheticProblem":
        return SyntheticProblem(
            contexts=np.asarray(d["contexts"], dtype=float),
            context_weights=np.asarray(d["context_weights"], dtype=float),
            n_actions=int(d["n_actions"]),
            mean_reward=np.asarray(d["mean_reward"], dtype=float),
            reward_bounds=(float(d["reward_bounds"][0]), float(d["reward_bounds"][1])),
            reward_noise=d.get("reward_noise", "deterministic"),
        )


class Policy:
    """Minimal policy interface: a conditional distribution over actions."""

    n_actions: int

    def probs(self, context: Optional[np.ndarray], ctx_index: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def needs_index(self) -> bool:
        """True when per-context state (mask/table) requires a context index."""
        return False


@dataclass(frozen=True)
class SoftmaxPolicy(Policy):
    """Linear softmax policy: p(y|x) proportional to exp(temperature * x.w_y).

    support_mask, when present, is a per-(context, action) boolean aligned
    with an enumerated context set; False entries get probability exactly 0
    and the remaining actions renormalize.
    """

    weights: np.ndarray  # (dim, n_actions)
    temperature: float = 1.0
    support_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        w = _freeze(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", w)
        if w.ndim != 2:
            raise ContractError("weights must be (dim, n_actions)")
        if self.temperature <= 0:
            raise ContractError("temperature must be positive")
        if self.support_mask is not None:
            mask = _freeze(np.asarray(self.support_mask, dtype=bool))
            object.__setattr__(self, "support_mask", mask)
            if mask.ndim != 2 or mask.shape[1] != w.shape[1]:
                raise ContractError("support_mask must be (n_contexts, n_actions)")
            if not mask.any(axis=1).all():
                raise InvalidPolicyError("some context has every action masked")

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def needs_index(self) -> bool:
        return self.support_mask is not None

    def probs(self, context, ctx_index=None):
        context = np.asarray(context, dtype=float)
        if context.shape != (self.weights.shape[0],):
            raise ContractError(
                f"context dim {context.shape} does not match weights {self.weights.shape}"
            )
        scores = self.temperature * (context @ self.weights)
        if self.support_mask is None:
            scores = scores - scores.max()
            e = np.exp(scores)
            return e / e.sum()
        if ctx_index is None:
            raise ContractError("masked policy needs a context index")
        allowed = self.support_mask[ctx_index]
        if not allowed.any():
            raise InvalidPolicyError(f"all actions masked for context {ctx_index}")
        out = np.zeros_like(scores)
        s = scores[allowed]
        e = np.exp(s - s.max())
        out[allowed] = e / e.sum()
        return out

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "temperature": self.temperature,
            "mask": None if self.support_mask is None else self.support_mask.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "SoftmaxPolicy":
        mask = d.get("mask")
        return SoftmaxPolicy(
            weights=np.asarray(d["weights"], dtype=float),
            temperature=float(d.get("temperature", 1.0)),
            support_mask=None if mask is None else np.asarray(mask, dtype=bool),
        )


@dataclass(frozen=True)
class TabularPolicy(Policy):
    """Policy given directly as a per-context probability table."""

    table: np.ndarray  # (n_contexts, n_actions)

    def __post_init__(self):
        t = _freeze(np.asarray(self.table, dtype=float))
        object.__setattr__(self, "table", t)
        if t.ndim != 2:
            raise ContractError("table must be (n_contexts, n_actions)")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > PROB_ATOL):
            raise ContractError("each table row must be a probability vector")

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    def needs_index(self) -> bool:
        return True

    def probs(self, context, ctx_index=None):
        if ctx_index is None:
            raise ContractError("tabular policy needs a context index")
        return self.table[ctx_index]


@dataclass(frozen=True)
class SupportSet:
    """Per-context unsupported action indices U(x, pi_0)."""

    unsupported: tuple  # tuple of int arrays, one per context

    def __post_init__(self):
        object.__setattr__(
            self,
            "unsupported",
            tuple(_freeze(np.asarray(u, dtype=int)) for u in self.unsupported),
        )

    def __getitem__(self, ctx_index: int) -> np.ndarray:
        return self.unsupported[ctx_index]

    def __len__(self) -> int:
        return len(self.unsupported)

    def any_unsupported(self) -> bool:
        return any(u.size for u in self.unsupported)


@dataclass(frozen=True)
class RestrictedPolicy(Policy):
    """Lazy action-restriction wrapper: the base policy's distribution has the
    logging policy's zero-probability actions removed and is renormalized at
    every evaluation."""

    base: Policy
    logging: Policy

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    def needs_index(self) -> bool:
        return self.base.needs_index() or self.logging.needs_index()

    def probs(self, context, ctx_index=None):
        p = self.base.probs(context, ctx_index if self.base.needs_index() else None)
        lp = self.logging.probs(context, ctx_index if self.logging.needs_index() else None)
        return action_restrict(p, np.flatnonzero(lp == 0.0))


@dataclass(frozen=True)
class LoggedDataset:
    """Bandit log: (context, action, reward, logged propensity) tuples.

    context_index is present for data generated from an enumerated problem;
    features always carry the raw context vector.
    """

    features: np.ndarray  # (n, dim)
    actions: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    propensities: np.ndarray  # (n,)
    context_index: Optional[np.ndarray] = None  # (n,) or None

    def __post_init__(self):
        feats = _freeze(np.asarray(self.features, dtype=float))
        acts = _freeze(np.asarray(self.actions, dtype=int))
        rews = _freeze(np.asarray(self.rewards, dtype=float))
        props = _freeze(np.asarray(self.propensities, dtype=float))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "rewards", rews)
        object.__setattr__(self, "propensities", props)
        n = acts.shape[0]
        if feats.ndim != 2 or feats.shape[0] != n or rews.shape != (n,) or props.shape != (n,):
            raise ContractError("inconsistent record array shapes")
        if np.any(props <= 0):
            raise CorruptDataError("logged propensities must be strictly positive")
        if self.context_index is not None:
            idx = _freeze(np.asarray(self.context_index, dtype=int))
            object.__setattr__(self, "context_index", idx)
            if idx.shape != (n,):
                raise ContractError("context_index must align with records")

    @property
    def n(self) -> int:
        return self.actions.shape[0]

    def subset(self, indices: np.ndarray) -> "LoggedDataset":
        return LoggedDataset(
            features=self.features[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            propensities=self.propensities[indices],
            context_index=None if self.context_index is None else self.context_index[indices],
        )

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i in range(self.n):
                rec = {
                    "x": {"ctx": int(self.context_index[i])}
                    if self.context_index is not None
                    else [float(v) for v in self.features[i]],
                    "y": int(self.actions[i]),
                    "r": float(self.rewards[i]),
                    "p0": float(self.propensities[i]),
                }
                fh.write(json.dumps(rec) + "\n")


def read_dataset_jsonl(path, contexts: Optional[np.ndarray] = None) -> LoggedDataset:
    """Read a JSON Lines log. Records using {"ctx": i} need the problem's
    context matrix to recover feature vectors."""
    feats, acts, rews, props, idxs = [], [], [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            x = rec["x"]
            if isinstance(x, dict):
                if contexts is None:
                    raise ContractError("dataset references context indices; pass contexts")
                idxs.append(int(x["ctx"]))
                feats.append(contexts[int(x["ctx"])])
            else:
                idxs.append(-1)
                feats.append(np.asarray(x, dtype=float))
            acts.append(int(rec["y"]))
            rews.append(float(rec["r"]))
            props.append(float(rec["p0"]))
    idx_arr = np.asarray(idxs)
    return LoggedDataset(
        features=np.asarray(feats, dtype=float),
        actions=np.asarray(acts),
        rewards=np.asarray(rews),
        propensities=np.asarray(props),
        context_index=idx_arr if np.all(idx_arr >= 0) else None,
    )


def policy_probs(policy: Policy, context, ctx_index: Optional[int] = None) -> np.ndarray:
    """Action distribution of `policy` at one context."""
    return policy.probs(context, ctx_index)


def prob_table(policy: Policy, problem: SyntheticProblem) -> np.ndarray:
    """Evaluate a policy on every enumerated context: (n_contexts, n_actions)."""
    if isinstance(policy, TabularPolicy):
        if policy.table.shape != (problem.n_contexts, problem.n_actions):
            raise ContractError("tabular policy does not match the problem shape")
        return policy.table
    return np.stack(
        [policy.probs(problem.contexts[i], i) for i in range(problem.n_contexts)]
    )


def clip_support(
    policy: SoftmaxPolicy, contexts: np.ndarray, threshold: float
) -> SoftmaxPolicy:
    """Zero out every action whose probability falls below `threshold` and
    renormalize the survivors, per context. Idempotent at a fixed threshold."""
    if not 0 < threshold < 1:
        raise ContractError("threshold must be in (0, 1)")
    contexts = np.asarray(contexts, dtype=float)
    rows = []
    for i in range(contexts.shape[0]):
        p = policy.probs(contexts[i], i if policy.needs_index() else None)
        keep = p >= threshold
        if not keep.any():
            raise InvalidPolicyError(f"threshold {threshold} removes all actions at context {i}")
        rows.append(keep)
    return SoftmaxPolicy(
        weights=policy.weights,
        temperature=policy.temperature,
        support_mask=np.stack(rows),
    )


def unsupported_set(logging: Policy, problem: SyntheticProblem) -> SupportSet:
    """U(x, pi_0): actions with exactly zero probability under the logging policy."""
    table = prob_table(logging, problem)
    return SupportSet(
        unsupported=tuple(np.flatnonzero(table[i] == 0.0) for i in range(problem.n_contexts))
    )


def action_restrict(target: np.ndarray, unsupported: Sequence[int]) -> np.ndarray:
    """Project a distribution onto the supported actions: zero the unsupported
    entries and renormalize the rest."""
    target = np.asarray(target, dtype=float)
    if abs(target.sum() - 1.0) > 1e-9 or np.any(target < 0):
        raise ContractError("target must be a probability vector")
    unsupported = np.asarray(unsupported, dtype=int)
    if unsupported.size == 0:
        return target.copy()
    removed = target[unsupported].sum()
    denom = 1.0 - removed
    if denom <= PROB_ATOL:
        raise DegenerateRestrictionError("target places all its mass on unsupported actions")
    out = target / denom
    out[unsupported] = 0.0
    return out


def tabular_softmax(prob_rows: np.ndarray, temperature: float = 1.0) -> SoftmaxPolicy:
    """Build a masked softmax over one-hot context features that reproduces the
    given per-context probability rows (zeros become mask entries)."""
    prob_rows = np.asarray(prob_rows, dtype=float)
    n_ctx, n_actions = prob_rows.shape
    mask = prob_rows > 0
    weights = np.zeros((n_ctx, n_actions))
    weights[mask] = np.log(prob_rows[mask]) / temperature
    return SoftmaxPolicy(weights=weights, temperature=temperature, support_mask=mask)


def save_policy(policy: SoftmaxPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2))


def load_policy(path) -> SoftmaxPolicy:
    return SoftmaxPolicy.from_dict(json.loads(Path(path).read_text()))
