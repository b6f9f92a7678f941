"""Exact enumeration over finite problems.

Every estimator in this package is a sample mean, so its expectation over a
logged dataset equals the expectation of a single record; all oracles below
exploit that and enumerate contexts x actions directly. These values are the
ground truth the property tests compare against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BandexError,
    ContractError,
    Policy,
    SyntheticProblem,
    prob_table,
)


@dataclass(frozen=True)
class ExactReport:
    """Exact quantities for one (problem, logging, target) triple."""

    true_value: float
    estimator_expectation: float
    bias: float
    support_divergence: float
    expected_weight_sum: float

    def to_dict(self) -> dict:
        return {
            "true_value": self.true_value,
            "estimator_expectation": self.estimator_expectation,
            "bias": self.bias,
            "support_divergence": self.support_divergence,
            "expected_weight_sum": self.expected_weight_sum,
        }


def exact_policy_value(problem: SyntheticProblem, policy: Policy) -> float:
    """True value: sum_x P(x) sum_y pi(y|x) delta(x, y)."""
    t = prob_table(policy, problem)
    return float(problem.context_weights @ (t * problem.mean_reward).sum(axis=1))


def _tables(problem, logging, target):
    lg = prob_table(logging, problem)
    tg = prob_table(target, problem)
    return lg, tg, lg == 0.0


def exact_support_divergence(problem: SyntheticProblem, logging: Policy, target: Policy) -> float:
    """Expected target mass on actions the logging policy never takes."""
    _, tg, unsup = _tables(problem, logging, target)
    return float(problem.context_weights @ (tg * unsup).sum(axis=1))


def exact_ips_bias(problem: SyntheticProblem, logging: Policy, target: Policy) -> ExactReport:
    """Exact expectation and bias of the IPS estimate, plus the support
    divergence and expected importance-weight sum, all in one pass."""
    _, tg, unsup = _tables(problem, logging, target)
    pw = problem.context_weights
    contrib = tg * problem.mean_reward
    true_value = float(pw @ contrib.sum(axis=1))
    expectation = float(pw @ (contrib * ~unsup).sum(axis=1))
    divergence = float(pw @ (tg * unsup).sum(axis=1))
    weight_sum = float(pw @ (tg * ~unsup).sum(axis=1))
    return ExactReport(
        true_value=true_value,
        estimator_expectation=expectation,
        bias=expectation - true_value,
        support_divergence=divergence,
        expected_weight_sum=weight_sum,
    )


def ips_bias_closed_form(problem: SyntheticProblem, logging: Policy, target: Policy) -> float:
    """Bias as the negated expected reward on the unsupported sets."""
    _, tg, unsup = _tables(problem, logging, target)
    return float(-(problem.context_weights @ (tg * problem.mean_reward * unsup).sum(axis=1)))


def exact_augmented_expectation(
    problem: SyntheticProblem, logging: Policy, target: Policy, reward_model
) -> float:
    """Expectation of the augmented IPS estimate (observed rewards on the
    supported set, imputed rewards on the unsupported set)."""
    _, tg, unsup = _tables(problem, logging, target)
    imputed = np.asarray(reward_model.predict(problem.contexts), dtype=float)
    per_ctx = (tg * problem.mean_reward * ~unsup).sum(axis=1) + (tg * imputed * unsup).sum(axis=1)
    return float(problem.context_weights @ per_ctx)


def exact_augmented_bias(
    problem: SyntheticProblem, logging: Policy, target: Policy, reward_model
) -> float:
    """Closed-form augmented-IPS bias: expected target mass on the unsupported
    set weighted by the extrapolation error. Cross-checked against direct
    enumeration of the estimator's expectation."""
    _, tg, unsup = _tables(problem, logging, target)
    imputed = np.asarray(reward_model.predict(problem.contexts), dtype=float)
    delta_err = imputed - problem.mean_reward
    bias = float(problem.context_weights @ (tg * delta_err * unsup).sum(axis=1))
    enumerated = exact_augmented_expectation(problem, logging, target, reward_model) - (
        exact_policy_value(problem, target)
    )
    if abs(bias - enumerated) > 1e-9:
        raise BandexError(
            f"augmented-bias cross-check failed: closed form {bias} vs enumerated {enumerated}"
        )
    return bias


def exact_sampled_objective_expectation(
    problem: SyntheticProblem,
    logging: Policy,
    target: Policy,
    reward_model,
    replay_count: int,
) -> float:
    """Expectation of the replay-augmented training objective over both the
    log draw and the uniform augmentation draws.

    The value is replay-count free. When every context has at least one
    unsupported action this equals the augmented-IPS expectation exactly;
    the imputation half averages only over contexts that can contribute
    synthetic records (those with a nonempty unsupported set).
    """
    if replay_count < 1:
        raise ContractError("replay_count must be >= 1")
    _, tg, unsup = _tables(problem, logging, target)
    pw = problem.context_weights
    ips_part = float(pw @ (tg * problem.mean_reward * ~unsup).sum(axis=1))
    nonempty = unsup.any(axis=1)
    if not nonempty.any():
        return ips_part
    imputed = np.asarray(reward_model.predict(problem.contexts), dtype=float)
    cond = pw * nonempty
    cond = cond / cond.sum()
    aug_part = float(cond @ (tg * imputed * unsup).sum(axis=1))
    return ips_part + aug_part


@dataclass(frozen=True)
class AdversarialResult:
    reward_table: np.ndarray
    gap: float
    max_divergence: float
    erm_choice: int
    best_choice: int


def adversarial_construction(
    problem_skeleton: SyntheticProblem,
    logging: Policy,
    policy_space: list,
) -> AdversarialResult:
    """Worst-case reward table for a finite policy list: maximum reward on the
    unsupported pairs, minimum elsewhere. Returns the realized suboptimality
    gap of exact ERM-with-IPS over the list.

    ERM ties are resolved adversarially (lowest true value), which is what
    realizes the (r_max - r_min) * max divergence lower bound.
    """
    if not policy_space:
        raise ContractError("policy_space must be nonempty")
    r_min, r_max = problem_skeleton.reward_bounds
    lg = prob_table(logging, problem_skeleton)
    unsup = lg == 0.0
    table = np.where(unsup, r_max, r_min)
    adv_problem = SyntheticProblem(
        contexts=problem_skeleton.contexts,
        context_weights=problem_skeleton.context_weights,
        n_actions=problem_skeleton.n_actions,
        mean_reward=table,
        reward_bounds=problem_skeleton.reward_bounds,
        reward_noise="deterministic",
    )
    reports = [exact_ips_bias(adv_problem, logging, pol) for pol in policy_space]
    expectations = np.array([rep.estimator_expectation for rep in reports])
    values = np.array([rep.true_value for rep in reports])
    divergences = np.array([rep.support_divergence for rep in reports])
    erm_ties = np.flatnonzero(expectations >= expectations.max() - 1e-12)
    erm_choice = int(erm_ties[np.argmin(values[erm_ties])])
    best_choice = int(np.argmax(values))
    return AdversarialResult(
        reward_table=table,
        gap=float(values[best_choice] - values[erm_choice]),
        max_divergence=float(divergences.max()),
        erm_choice=erm_choice,
        best_choice=best_choice,
    )
