"""Counterfactual value estimators over logged bandit data.

IPS and its importance-weight sum, the augmented (reward-imputing) variant,
doubly robust, the direct method, and the minimally supported policy used for
model-free model selection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    BandexError,
    ContractError,
    CorruptDataError,
    LoggedDataset,
    Policy,
    SupportSet,
    SyntheticProblem,
    TabularPolicy,
    prob_table,
)

DR_FORM_ATOL = 1e-10


@dataclass(frozen=True)
class EstimatorReport:
    """Point estimate plus diagnostics."""

    value: float
    weight_sum: float
    n: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "weight_sum": self.weight_sum,
            "n": self.n,
            "diagnostics": dict(self.diagnostics),
        }


class MinSupPolicy(TabularPolicy):
    """Tabular policy whose support is inside the logging policy's support and
    whose IPS weights are bounded by construction."""

    weight_bound: float = 100.0

    def __init__(self, table: np.ndarray, weight_bound: float = 100.0):
        super().__init__(table=table)
        object.__setattr__(self, "weight_bound", float(weight_bound))


@dataclass(frozen=True)
class ConstantRewardModel:
    """delta-hat identically equal to one constant (conservative: r_min)."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ContractError("constant reward model needs a finite value")

    def predict(self, features: np.ndarray) -> np.ndarray:
        # A constant model does not know the action count; callers that do
        # should use predict_full. The single column broadcasts on demand.
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return np.full((features.shape[0], 1), self.value)

    def predict_full(self, features: np.ndarray, n_actions: int) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return np.full((features.shape[0], n_actions), self.value)


def conservative_model(reward_bounds: tuple) -> ConstantRewardModel:
    """Impute the lowest possible reward everywhere."""
    return ConstantRewardModel(value=float(reward_bounds[0]))


def _model_table(reward_model, features: np.ndarray, n_actions: int) -> np.ndarray:
    if hasattr(reward_model, "predict_full"):
        return reward_model.predict_full(features, n_actions)
    out = np.asarray(reward_model.predict(features), dtype=float)
    if out.shape[1] == 1 and n_actions > 1:
        out = np.repeat(out, n_actions, axis=1)
    if out.shape != (features.shape[0], n_actions):
        raise ContractError("reward model output shape mismatch")
    return out


def _check_dataset(dataset: LoggedDataset) -> None:
    if dataset.n == 0:
        raise ContractError("empty dataset")
    if np.any(dataset.propensities <= 0):
        raise CorruptDataError("nonpositive propensity in dataset")


def _record_prob_matrix(dataset: LoggedDataset, policy: Policy) -> np.ndarray:
    """Full target distribution at each logged context: (n, n_actions)."""
    if policy.needs_index() and dataset.context_index is None:
        raise ContractError("policy needs context indices the dataset does not carry")
    if dataset.context_index is not None:
        idx = dataset.context_index
        cache: dict[int, np.ndarray] = {}
        rows = np.empty((dataset.n, policy.n_actions))
        for i in np.unique(idx):
            cache[i] = policy.probs(dataset.features[idx == i][0], int(i))
        for i in np.unique(idx):
            rows[idx == i] = cache[i]
        return rows
    return np.stack([policy.probs(dataset.features[i], None) for i in range(dataset.n)])


def _chosen_probs(dataset: LoggedDataset, policy: Policy) -> np.ndarray:
    mat = _record_prob_matrix(dataset, policy)
    return mat[np.arange(dataset.n), dataset.actions]


def _report(values: np.ndarray, weights: np.ndarray, n: int) -> EstimatorReport:
    weight_sum = float(np.mean(weights))
    return EstimatorReport(
        value=float(np.mean(values)),
        weight_sum=weight_sum,
        n=n,
        diagnostics={
            "max_weight": float(np.max(weights)),
            "unsupported_mass": 1.0 - weight_sum,
        },
    )


def ips(dataset: LoggedDataset, target: Policy) -> EstimatorReport:
    """Inverse propensity scoring: mean of (pi/pi_0) * r, with the importance
    weight sum recorded alongside."""
    _check_dataset(dataset)
    w = _chosen_probs(dataset, target) / dataset.propensities
    return _report(w * dataset.rewards, w, dataset.n)


def _per_record_unsupported(dataset: LoggedDataset, logging: Policy) -> list:
    if dataset.context_index is None:
        raise ContractError("augmentation needs context-indexed data")
    lg = _record_prob_matrix(dataset, logging)
    return [np.flatnonzero(lg[i] == 0.0) for i in range(dataset.n)]


def unsupported_by_context(dataset: LoggedDataset, logging: Policy) -> dict:
    """U(x, pi_0) for every distinct context index present in the data."""
    if dataset.context_index is None:
        raise ContractError("needs context-indexed data")
    out = {}
    for i in np.unique(dataset.context_index):
        row = logging.probs(dataset.features[dataset.context_index == i][0], int(i))
        out[int(i)] = np.flatnonzero(row == 0.0)
    return out


def augmented_ips(
    dataset: LoggedDataset,
    target: Policy,
    logging: Policy,
    reward_model,
    exact_cutoff: int = 64,
    seed: int = 0,
    replay_count: int = 1,
) -> EstimatorReport:
    """IPS plus imputed reward mass on each record's unsupported action set.

    The inner sum over unsupported actions is exact while those sets are small;
    past `exact_cutoff` actions it falls back to the uniform replay sampling
    used during training.
    """
    _check_dataset(dataset)
    w = _chosen_probs(dataset, target) / dataset.propensities
    unsup = unsupported_by_context(dataset, logging)
    max_u = max((u.size for u in unsup.values()), default=0)
    if max_u <= exact_cutoff:
        tg = _record_prob_matrix(dataset, target)
        model = _model_table(reward_model, dataset.features, target.n_actions)
        aug = np.zeros(dataset.n)
        for i, u in unsup.items():
            if u.size:
                sel = dataset.context_index == i
                aug[sel] = (tg[sel][:, u] * model[sel][:, u]).sum(axis=1)
        return _report(w * dataset.rewards + aug, w, dataset.n)
    from .learning import augment_dataset  # sampling path shares Algorithm-1 code

    augmented = augment_dataset(dataset, logging, reward_model, replay_count, seed=seed)
    synth = augmented.synthetic
    aug_term = 0.0
    if synth is not None and synth.n:
        sw = _chosen_probs(synth, target) / synth.propensities
        aug_term = float(np.mean(sw * synth.rewards)) * (synth.n / (replay_count * dataset.n))
    value = float(np.mean(w * dataset.rewards)) + aug_term
    weight_sum = float(np.mean(w))
    return EstimatorReport(
        value=value,
        weight_sum=weight_sum,
        n=dataset.n,
        diagnostics={
            "max_weight": float(np.max(w)),
            "unsupported_mass": 1.0 - weight_sum,
            "sampled_augmentation": 1.0,
        },
    )


def dr(
    dataset: LoggedDataset,
    target: Policy,
    reward_model,
    logging: Policy = None,
) -> EstimatorReport:
    """Doubly robust: model-based baseline over all actions plus an
    IPS-weighted residual correction.

    When the logging policy is available the supported/unsupported split of
    the baseline term is computed as well and checked against the direct form.
    """
    _check_dataset(dataset)
    tg = _record_prob_matrix(dataset, target)
    model = _model_table(reward_model, dataset.features, target.n_actions)
    w = tg[np.arange(dataset.n), dataset.actions] / dataset.propensities
    baseline = (tg * model).sum(axis=1)
    correction = w * (dataset.rewards - model[np.arange(dataset.n), dataset.actions])
    value = float(np.mean(baseline + correction))
    diagnostics = {
        "max_weight": float(np.max(w)),
        "unsupported_mass": 1.0 - float(np.mean(w)),
    }
    if logging is not None:
        unsup = unsupported_by_context(dataset, logging)
        sup_sum = baseline.copy()
        unsup_sum = np.zeros(dataset.n)
        for i, u in unsup.items():
            if u.size:
                sel = dataset.context_index == i
                part = (tg[sel][:, u] * model[sel][:, u]).sum(axis=1)
                sup_sum[sel] -= part
                unsup_sum[sel] = part
        decomposed = float(np.mean(sup_sum + correction + unsup_sum))
        if abs(decomposed - value) > DR_FORM_ATOL:
            raise BandexError(
                f"DR decomposition mismatch: {value} vs {decomposed}"
            )
        diagnostics["decomposed_value"] = decomposed
    return EstimatorReport(value=value, weight_sum=float(np.mean(w)), n=dataset.n, diagnostics=diagnostics)


def dm(data, target: Policy, reward_model) -> float:
    """Direct method: model-predicted value of the target policy, averaged
    over dataset contexts or enumerated with problem weights."""
    if isinstance(data, SyntheticProblem):
        tg = prob_table(target, data)
        model = _model_table(reward_model, data.contexts, data.n_actions)
        return float(data.context_weights @ (tg * model).sum(axis=1))
    dataset: LoggedDataset = data
    _check_dataset(dataset)
    tg = _record_prob_matrix(dataset, target)
    model = _model_table(reward_model, dataset.features, target.n_actions)
    return float(np.mean((tg * model).sum(axis=1)))


def build_minsup(
    logging: Policy, problem: SyntheticProblem, weight_bound: float = 100.0
) -> MinSupPolicy:
    """Greedy minimally supported policy: walk the supported actions in
    ascending propensity order and give each as much mass as the weight bound
    allows until all probability is placed."""
    lg = prob_table(logging, problem)
    table = np.zeros_like(lg)
    for i in range(problem.n_contexts):
        supported = np.flatnonzero(lg[i] > 0.0)
        if supported.size == 0:
            raise ContractError(f"logging policy has empty support at context {i}")
        order = supported[np.lexsort((supported, lg[i][supported]))]
        remaining = 1.0
        for y in order:
            if remaining <= 0.0:
                break
            p = min(remaining, weight_bound * lg[i, y])
            table[i, y] = p
            remaining -= p
        if remaining > 1e-12:
            raise BandexError("could not place all probability mass (bound too small)")
        # absorb float residue into the last touched action
        table[i, order[-1]] += max(0.0, 1.0 - table[i].sum())
    return MinSupPolicy(table=table, weight_bound=weight_bound)


def minsup_estimate(
    dataset: LoggedDataset, target: Policy, minsup_policy: MinSupPolicy
) -> float:
    """IPS estimate plus the missing-support share valued at the minimally
    supported policy's IPS estimate."""
    base = ips(dataset, target)
    substitute = ips(dataset, minsup_policy)
    return base.value + (1.0 - base.weight_sum) * substitute.value
