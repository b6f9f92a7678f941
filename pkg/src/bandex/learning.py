"""Reward-model regression and ERM training of linear softmax policies.

Four training objectives are supported: plain IPS, IPS over the
action-restricted policy, the replay-augmented objective with imputed rewards,
and IPS with a constant reward shift (the inner problem of the constrained
policy-restriction formulation). Gradients are analytic; a finite-difference
oracle in the tests keeps them honest.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    ContractError,
    DegenerateRestrictionError,
    LoggedDataset,
    Policy,
    RestrictedPolicy,
    SoftmaxPolicy,
    TrainingFailure,
)
from .estimators import unsupported_by_context

OBJECTIVES = ("naive_ips", "action_restricted", "augmented", "shifted")


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "naive_ips"
    shift_k: float = 0.0
    replay_count: int = 1
    learn_rate: float = 0.5
    epochs: int = 50
    batch_size: int = 64
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ContractError(f"unknown objective {self.objective!r}")
        if not np.isfinite(self.shift_k):
            raise ContractError("shift_k must be finite")
        if self.replay_count < 1:
            raise ContractError("replay_count must be >= 1")
        if self.learn_rate <= 0 or self.epochs < 1 or self.batch_size < 1 or self.l2 < 0:
            raise ContractError("bad optimizer settings")

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "shift_k": self.shift_k,
            "replay_count": self.replay_count,
            "learn_rate": self.learn_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "l2": self.l2,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(
            objective=d.get("objective", "naive_ips"),
            shift_k=float(d.get("shift_k", 0.0)),
            replay_count=int(d.get("replay_count", 1)),
            learn_rate=float(d.get("learn_rate", 0.5)),
            epochs=int(d.get("epochs", 50)),
            batch_size=int(d.get("batch_size", 64)),
            l2=float(d.get("l2", 0.0)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class RewardModel:
    """Per-action linear regression delta-hat(x, y) = x . v_y + b_y."""

    weights: np.ndarray  # (dim, n_actions)
    bias: np.ndarray  # (n_actions,)
    loss_trace: list = field(default_factory=list)

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return features @ self.weights + self.bias

    def predict_full(self, features: np.ndarray, n_actions: int) -> np.ndarray:
        out = self.predict(features)
        if out.shape[1] != n_actions:
            raise ContractError("reward model action count mismatch")
        return out

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "RewardModel":
        return RewardModel(
            weights=np.asarray(d["weights"], dtype=float),
            bias=np.asarray(d["bias"], dtype=float),
        )


@dataclass(frozen=True)
class AugmentedDataset:
    """Original log plus uniformly replayed synthetic records on the
    unsupported action sets (reward = imputed reward, propensity = 1/|U|)."""

    original: LoggedDataset
    synthetic: Optional[LoggedDataset]

    @property
    def replay_size(self) -> int:
        return 0 if self.synthetic is None else self.synthetic.n


def train_reward_model(
    dataset: LoggedDataset, config: TrainConfig, n_actions: Optional[int] = None
) -> RewardModel:
    """Fit the regression by mini-batch gradient descent on squared error over
    the logged (x, y, r) triples."""
    if dataset.n == 0:
        raise ContractError("empty dataset")
    if n_actions is None:
        n_actions = int(dataset.actions.max()) + 1
    rng = np.random.default_rng(config.seed)
    dim = dataset.features.shape[1]
    w = np.zeros((dim, n_actions))
    b = np.zeros(n_actions)
    trace = []
    idx_all = np.arange(dataset.n)
    for epoch in range(config.epochs):
        rng.shuffle(idx_all)
        for start in range(0, dataset.n, config.batch_size):
            sel = idx_all[start : start + config.batch_size]
            x = dataset.features[sel]
            y = dataset.actions[sel]
            err = (x @ w + b)[np.arange(sel.size), y] - dataset.rewards[sel]
            g = np.zeros((sel.size, n_actions))
            g[np.arange(sel.size), y] = 2.0 * err / sel.size
            w -= config.learn_rate * (x.T @ g + 2.0 * config.l2 * w)
            b -= config.learn_rate * g.sum(axis=0)
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise TrainingFailure(f"reward model diverged at epoch {epoch}")
        pred = (dataset.features @ w + b)[np.arange(dataset.n), dataset.actions]
        trace.append(float(np.mean((pred - dataset.rewards) ** 2)))
    return RewardModel(weights=w, bias=b, loss_trace=trace)


def augment_dataset(
    dataset: LoggedDataset,
    logging: Policy,
    reward_model,
    replay_count: int,
    seed: int = 0,
) -> AugmentedDataset:
    """Replay every logged context `replay_count` times, drawing one uniform
    unsupported action per replay; contexts with full support contribute
    nothing."""
    if replay_count < 1:
        raise ContractError("replay_count must be >= 1")
    unsup = unsupported_by_context(dataset, logging)
    rng = np.random.default_rng(seed)
    feats, acts, props, idxs = [], [], [], []
    for _ in range(replay_count):
        for i in range(dataset.n):
            u = unsup[int(dataset.context_index[i])]
            if u.size == 0:
                continue
            y = int(u[rng.integers(u.size)])
            feats.append(dataset.features[i])
            acts.append(y)
            props.append(1.0 / u.size)
            idxs.append(int(dataset.context_index[i]))
    if not acts:
        return AugmentedDataset(original=dataset, synthetic=None)
    feats = np.asarray(feats)
    model = reward_model.predict_full(feats, _n_actions_of(reward_model, logging)) if hasattr(
        reward_model, "predict_full"
    ) else np.asarray(reward_model.predict(feats))
    if model.shape[1] == 1:
        rews = np.full(len(acts), model[0, 0])
    else:
        rews = model[np.arange(len(acts)), acts]
    return AugmentedDataset(
        original=dataset,
        synthetic=LoggedDataset(
            features=feats,
            actions=np.asarray(acts),
            rewards=np.asarray(rews, dtype=float),
            propensities=np.asarray(props),
            context_index=np.asarray(idxs),
        ),
    )


def _n_actions_of(reward_model, logging: Policy) -> int:
    return getattr(reward_model, "n_actions", logging.n_actions)


def _softmax_rows(weights: np.ndarray, features: np.ndarray, temperature: float) -> np.ndarray:
    scores = temperature * (features @ weights)
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def _grad_from_upstream(
    features: np.ndarray, probs: np.ndarray, upstream: np.ndarray, temperature: float
) -> np.ndarray:
    """Chain rule through the softmax: upstream is dF/dprobs per record."""
    g = probs * upstream
    g -= probs * g.sum(axis=1, keepdims=True)
    return temperature * (features.T @ g)


def _linear_term(features, actions, coeffs, weights, temperature):
    """Value and gradient of mean_i coeffs_i * p(y_i | x_i) with the 1/n
    already folded into coeffs."""
    probs = _softmax_rows(weights, features, temperature)
    chosen = probs[np.arange(actions.size), actions]
    upstream = np.zeros_like(probs)
    upstream[np.arange(actions.size), actions] = coeffs
    value = float(chosen @ coeffs)
    return value, _grad_from_upstream(features, probs, upstream, temperature)


@dataclass(frozen=True)
class ErmBatch:
    """One optimization batch: log records, plus per-record unsupported sets
    (action restriction) and synthetic replay records (augmented objective)."""

    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    unsupported: Optional[list] = None
    synthetic: Optional[LoggedDataset] = None

    @staticmethod
    def from_dataset(dataset: LoggedDataset, **kw) -> "ErmBatch":
        return ErmBatch(
            features=dataset.features,
            actions=dataset.actions,
            rewards=dataset.rewards,
            propensities=dataset.propensities,
            **kw,
        )

    @property
    def n(self) -> int:
        return self.actions.size


def objective_value_and_gradient(
    weights: np.ndarray,
    batch: ErmBatch,
    objective: str,
    shift_k: float = 0.0,
    temperature: float = 1.0,
):
    """Empirical training objective (reward scale, to be maximized) and its
    analytic gradient with respect to the policy weights."""
    n = batch.n
    if n == 0:
        raise ContractError("empty batch")
    if objective in ("naive_ips", "shifted"):
        k = shift_k if objective == "shifted" else 0.0
        coeffs = (batch.rewards + k) / batch.propensities / n
        return _linear_term(batch.features, batch.actions, coeffs, weights, temperature)
    if objective == "augmented":
        value, grad = _linear_term(
            batch.features,
            batch.actions,
            batch.rewards / batch.propensities / n,
            weights,
            temperature,
        )
        synth = batch.synthetic
        if synth is not None and synth.n:
            sv, sg = _linear_term(
                synth.features,
                synth.actions,
                synth.rewards / synth.propensities / synth.n,
                weights,
                temperature,
            )
            value += sv
            grad += sg
        return value, grad
    if objective == "action_restricted":
        if batch.unsupported is None:
            raise ContractError("action_restricted needs per-record unsupported sets")
        probs = _softmax_rows(weights, batch.features, temperature)
        upstream = np.zeros_like(probs)
        value = 0.0
        for i in range(n):
            u = batch.unsupported[i]
            y = batch.actions[i]
            if u.size and np.isin(y, u):
                continue  # restricted policy never plays this action; term is 0
            s = probs[i, u].sum() if u.size else 0.0
            denom = 1.0 - s
            if denom <= 1e-12:
                raise DegenerateRestrictionError(f"record {i}: no supported mass left")
            c = batch.rewards[i] / batch.propensities[i] / n
            value += c * probs[i, y] / denom
            upstream[i, y] += c / denom
            if u.size:
                upstream[i, u] += c * probs[i, y] / denom**2
        return float(value), _grad_from_upstream(batch.features, probs, upstream, temperature)
    raise ContractError(f"unknown objective {objective!r}")


@dataclass
class TrainResult:
    policy: Policy
    trace: list  # per-epoch dicts: epoch, objective, weight_sum


def train_erm(
    train_data: LoggedDataset,
    config: TrainConfig,
    logging: Optional[Policy] = None,
    reward_model=None,
) -> TrainResult:
    """Mini-batch gradient ascent on the configured objective.

    For the action-restricted objective, the returned policy is the learned
    softmax wrapped so that the restriction is applied lazily against the
    stored logging policy at evaluation time.
    """
    if config.objective in ("action_restricted", "augmented") and logging is None:
        raise ContractError(f"{config.objective} needs the logging policy")
    if config.objective == "augmented" and reward_model is None:
        raise ContractError("augmented objective needs a reward model")
    rng = np.random.default_rng(config.seed)
    dim = train_data.features.shape[1]
    n_actions = _infer_actions(train_data, logging)
    w = np.zeros((dim, n_actions))

    unsup_per_record = None
    if config.objective == "action_restricted":
        by_ctx = unsupported_by_context(train_data, logging)
        unsup_per_record = [by_ctx[int(c)] for c in train_data.context_index]
    synthetic = None
    if config.objective == "augmented":
        synthetic = augment_dataset(
            train_data, logging, reward_model, config.replay_count, seed=config.seed + 1
        ).synthetic

    n = train_data.n
    m = 0 if synthetic is None else synthetic.n
    n_batches = max(1, int(np.ceil(n / config.batch_size)))
    trace = []
    order = np.arange(n)
    synth_order = np.arange(m)
    for epoch in range(config.epochs):
        rng.shuffle(order)
        if m:
            rng.shuffle(synth_order)
        for b in range(n_batches):
            sel = order[b * config.batch_size : (b + 1) * config.batch_size]
            if sel.size == 0:
                continue
            kw = {}
            if unsup_per_record is not None:
                kw["unsupported"] = [unsup_per_record[i] for i in sel]
            if m:
                lo = (b * m) // n_batches
                hi = ((b + 1) * m) // n_batches
                kw["synthetic"] = synthetic.subset(synth_order[lo:hi]) if hi > lo else None
            batch = ErmBatch(
                features=train_data.features[sel],
                actions=train_data.actions[sel],
                rewards=train_data.rewards[sel],
                propensities=train_data.propensities[sel],
                **kw,
            )
            value, grad = objective_value_and_gradient(
                w, batch, config.objective, shift_k=config.shift_k
            )
            if config.l2:
                grad = grad - 2.0 * config.l2 * w
            w = w + config.learn_rate * grad
            if not np.all(np.isfinite(w)):
                raise TrainingFailure(f"policy training diverged at epoch {epoch}, batch {b}")
        full = ErmBatch.from_dataset(
            train_data,
            unsupported=unsup_per_record,
            synthetic=synthetic,
        )
        value, _ = objective_value_and_gradient(w, full, config.objective, shift_k=config.shift_k)
        probs = _softmax_rows(w, train_data.features, 1.0)
        weight_sum = float(
            np.mean(probs[np.arange(n), train_data.actions] / train_data.propensities)
        )
        trace.append({"epoch": epoch, "objective": value, "weight_sum": weight_sum})

    policy: Policy = SoftmaxPolicy(weights=w, temperature=1.0)
    if config.objective == "action_restricted":
        policy = RestrictedPolicy(base=policy, logging=logging)
    return TrainResult(policy=policy, trace=trace)


def _infer_actions(dataset: LoggedDataset, logging: Optional[Policy]) -> int:
    if logging is not None:
        return logging.n_actions
    return int(dataset.actions.max()) + 1
