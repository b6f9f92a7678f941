"""Named invariant checks behind the CLI verify command.

The fast level runs exact enumeration identities; the full level adds the
Monte Carlo suites (3-sigma agreement, constraint-bound frequency, weight-sum
convergence). Each check reports a name, a pass flag, and the measured
statistic so failures are diagnosable from the report alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LoggedDataset, SyntheticProblem, TabularPolicy, prob_table
from .datagen import log_interactions
from .estimators import ConstantRewardModel, build_minsup, dr, ips
from .learning import ErmBatch, _softmax_rows, objective_value_and_gradient
from .oracle import (
    exact_augmented_bias,
    exact_augmented_expectation,
    exact_ips_bias,
    exact_policy_value,
    exact_sampled_objective_expectation,
    exact_support_divergence,
    ips_bias_closed_form,
    adversarial_construction,
)
from .reference import reference_logging, reference_problem, reference_target
from .selection import check_kappa

EXACT_ATOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    statistic: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "statistic": self.statistic}


def random_triple(rng: np.random.Generator, max_contexts: int = 4, max_actions: int = 5):
    """Random (problem, logging, target) with a guaranteed-deficient logging
    policy expressed through exact zeros."""
    n_ctx = int(rng.integers(1, max_contexts + 1))
    n_act = int(rng.integers(2, max_actions + 1))
    lo = float(rng.uniform(-1.0, 0.5))
    hi = lo + float(rng.uniform(0.5, 2.0))
    weights = rng.dirichlet(np.ones(n_ctx))
    problem = SyntheticProblem(
        contexts=np.eye(n_ctx),
        context_weights=weights,
        n_actions=n_act,
        mean_reward=rng.uniform(lo, hi, size=(n_ctx, n_act)),
        reward_bounds=(lo, hi),
    )
    log_table = rng.dirichlet(np.ones(n_act), size=n_ctx)
    for i in range(n_ctx):
        k = int(rng.integers(0, n_act))  # number of unsupported actions
        if k:
            drop = rng.choice(n_act, size=k, replace=False)
            log_table[i, drop] = 0.0
            log_table[i] /= log_table[i].sum()
    target_table = rng.dirichlet(np.ones(n_act), size=n_ctx)
    return problem, TabularPolicy(log_table), TabularPolicy(target_table)


def random_reward_model(rng: np.random.Generator, problem: SyntheticProblem):
    """Arbitrary total imputation table wrapped in the predict interface."""

    class _Table:
        def __init__(self, table):
            self.table = table
            self.n_actions = table.shape[1]

        def predict(self, features):
            # enumerated contexts are one-hot rows in the fuzz problems
            idx = np.argmax(np.atleast_2d(features), axis=1)
            return self.table[idx]

        def predict_full(self, features, n_actions):
            return self.predict(features)

    lo, hi = problem.reward_bounds
    return _Table(rng.uniform(lo - 0.5, hi + 0.5, size=problem.mean_reward.shape))


def simulate_ips(problem, logging, target, n, reps, rng):
    """Vectorized draws of `reps` independent logs of size n; returns the IPS
    values and importance-weight sums per log."""
    log_table = prob_table(logging, problem)
    tgt_table = prob_table(target, problem)
    supported = log_table > 0
    ratio = np.where(supported, np.divide(tgt_table, log_table, where=supported), 0.0)
    value_cell = ratio * problem.mean_reward
    ctx = rng.choice(problem.n_contexts, size=(reps, n), p=problem.context_weights)
    u = rng.random((reps, n))
    actions = np.empty((reps, n), dtype=int)
    for i in range(problem.n_contexts):
        sel = ctx == i
        cum = np.cumsum(log_table[i])
        actions[sel] = np.searchsorted(cum, u[sel], side="right").clip(max=problem.n_actions - 1)
    values = value_cell[ctx, actions].mean(axis=1)
    weight_sums = ratio[ctx, actions].mean(axis=1)
    return values, weight_sums


# ---------------------------------------------------------------------------
# fast (exact) checks


def check_theorem2_identity(n_triples: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_triples):
        problem, logging, target = random_triple(rng)
        rep = exact_ips_bias(problem, logging, target)
        worst = max(worst, abs(rep.expected_weight_sum + rep.support_divergence - 1.0))
    return CheckResult("theorem2_identity", worst <= EXACT_ATOL, f"max |S+D-1| = {worst:.2e}")


def check_prop1_closed_form(n_triples: int = 1000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_triples):
        problem, logging, target = random_triple(rng)
        rep = exact_ips_bias(problem, logging, target)
        worst = max(worst, abs(ips_bias_closed_form(problem, logging, target) - rep.bias))
    return CheckResult("prop1_closed_form", worst <= EXACT_ATOL, f"max |closed-enum| = {worst:.2e}")


def check_prop2_closed_form(n_triples: int = 500, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_triples):
        problem, logging, target = random_triple(rng)
        model = random_reward_model(rng, problem)
        bias = exact_augmented_bias(problem, logging, target, model)
        enum = exact_augmented_expectation(problem, logging, target, model) - exact_policy_value(
            problem, target
        )
        worst = max(worst, abs(bias - enum))
    return CheckResult("prop2_closed_form", worst <= EXACT_ATOL, f"max |closed-enum| = {worst:.2e}")


def check_dr_identity(n_cases: int = 200, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        problem, logging, target = random_triple(rng)
        data = log_interactions(problem, logging, n=50, seed=int(rng.integers(2**31)))
        model = random_reward_model(rng, problem)
        rep = dr(data, target, model, logging=logging)  # raises if forms disagree
        worst = max(worst, abs(rep.diagnostics["decomposed_value"] - rep.value))
        zero = dr(data, target, ConstantRewardModel(0.0))
        base = ips(data, target)
        worst = max(worst, abs(zero.value - base.value))
    return CheckResult("dr_identity", worst <= 1e-10, f"max form gap = {worst:.2e}")


def check_shift_identity(n_cases: int = 200, seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        problem, logging, _ = random_triple(rng)
        data = log_interactions(problem, logging, n=40, seed=int(rng.integers(2**31)))
        w = rng.normal(size=(problem.context_dim, problem.n_actions))
        k = float(rng.uniform(-2, 2))
        batch = ErmBatch.from_dataset(data)
        naive, _ = objective_value_and_gradient(w, batch, "naive_ips")
        shifted, _ = objective_value_and_gradient(w, batch, "shifted", shift_k=k)
        probs = _softmax_rows(w, data.features, 1.0)
        s_d = float(np.mean(probs[np.arange(data.n), data.actions] / data.propensities))
        worst = max(worst, abs(shifted - naive - k * s_d))
    return CheckResult("shift_identity", worst <= EXACT_ATOL, f"max residual = {worst:.2e}")


def check_a3_equivalence() -> CheckResult:
    problem, logging, target = reference_problem(), reference_logging(), reference_target()
    model = ConstantRewardModel(0.3)
    eq7 = exact_augmented_expectation(problem, logging, target, model)
    worst = max(
        abs(exact_sampled_objective_expectation(problem, logging, target, model, rc) - eq7)
        for rc in (1, 5)
    )
    return CheckResult("a3_equivalence", worst <= EXACT_ATOL, f"max |Eq10-Eq7| = {worst:.2e}")


def check_theorem1_bound() -> CheckResult:
    problem, logging = reference_problem(), reference_logging()
    # point mass on an unsupported action in every context
    unsupported_policy = TabularPolicy(np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]))
    result = adversarial_construction(problem, logging, [logging, unsupported_policy])
    bound = (problem.reward_bounds[1] - problem.reward_bounds[0]) * result.max_divergence
    ok = result.gap >= bound - EXACT_ATOL
    return CheckResult("theorem1_bound", ok, f"gap = {result.gap:.6f}, bound = {bound:.6f}")


# ---------------------------------------------------------------------------
# full (Monte Carlo) checks


def _three_sigma(values: np.ndarray, expected: float):
    mean = values.mean()
    sigma = values.std(ddof=1) / np.sqrt(values.size)
    return abs(mean - expected), 3.0 * sigma, mean


def check_ips_unbiased_full_support(seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    problem, target = reference_problem(), reference_target()
    logging = TabularPolicy(np.array([[0.4, 0.4, 0.2], [0.5, 0.3, 0.2]]))  # full support
    values, _ = simulate_ips(problem, logging, target, n=500, reps=200, rng=rng)
    gap, band, mean = _three_sigma(values, exact_policy_value(problem, target))
    return CheckResult(
        "ips_unbiased_full_support", gap <= band, f"mean = {mean:.4f}, |gap| = {gap:.4f} <= {band:.4f}"
    )


def check_prop1_monte_carlo(seed: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    problem, logging, target = reference_problem(), reference_logging(), reference_target()
    rep = exact_ips_bias(problem, logging, target)
    values, _ = simulate_ips(problem, logging, target, n=500, reps=300, rng=rng)
    gap, band, mean = _three_sigma(values, rep.true_value + rep.bias)
    return CheckResult("prop1_monte_carlo", gap <= band, f"mean = {mean:.4f}, band = {band:.4f}")


def check_prop2_monte_carlo(seed: int = 13) -> CheckResult:
    from .estimators import augmented_ips

    rng = np.random.default_rng(seed)
    problem, logging, target = reference_problem(), reference_logging(), reference_target()
    model = random_reward_model(rng, problem)
    expected = exact_augmented_expectation(problem, logging, target, model)
    vals = []
    for _ in range(120):
        data = log_interactions(problem, logging, n=400, seed=int(rng.integers(2**31)))
        vals.append(augmented_ips(data, target, logging, model).value)
    gap, band, mean = _three_sigma(np.asarray(vals), expected)
    return CheckResult("prop2_monte_carlo", gap <= band, f"mean = {mean:.4f}, band = {band:.4f}")


def check_theorem2_convergence(seed: int = 14) -> CheckResult:
    rng = np.random.default_rng(seed)
    problem, logging, target = reference_problem(), reference_logging(), reference_target()
    divergence = exact_support_divergence(problem, logging, target)
    stds, ok = [], True
    for n in (100, 1000, 10000):
        _, sums = simulate_ips(problem, logging, target, n=n, reps=200, rng=rng)
        gap, band, _ = _three_sigma(sums + divergence, 1.0)
        ok = ok and gap <= band
        stds.append(sums.std(ddof=1))
    decreasing = stds[0] > stds[1] > stds[2]
    stat = "std(S+D) @ n=1e2,1e3,1e4: " + ", ".join(f"{s:.4f}" for s in stds)
    return CheckResult("theorem2_convergence", ok and decreasing, stat)


def check_prop3_frequency(seed: int = 15) -> CheckResult:
    rng = np.random.default_rng(seed)
    problem, logging, target = reference_problem(), reference_logging(), reference_target()
    divergence = exact_support_divergence(problem, logging, target)
    n, eps, p_min, kappa = 5000, 0.1, 0.1, 0.5
    _, sums = simulate_ips(problem, logging, target, n=n, reps=2000, rng=rng)
    bound = check_kappa(1.0, kappa, eps, n, p_min).failure_prob_bound
    violations = 0
    for s in sums:
        chk = check_kappa(float(s), kappa, eps, n, p_min)
        if chk.satisfied and not (0.0 <= divergence <= kappa):
            violations += 1
    freq = violations / sums.size
    return CheckResult("prop3_frequency", freq <= bound, f"freq = {freq:.4f} <= bound {bound:.4f}")


def check_minsup_invariants(seed: int = 16) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = True
    worst = 0.0
    for _ in range(300):
        problem, logging, _ = random_triple(rng)
        pol = build_minsup(logging, problem)
        log_table = prob_table(logging, problem)
        sup_ok = np.all(pol.table[log_table == 0.0] == 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(pol.table > 0, pol.table / log_table, 0.0)
        ok = ok and sup_ok and np.all(w <= pol.weight_bound + 1e-9)
        worst = max(worst, float(np.abs(pol.table.sum(axis=1) - 1.0).max()))
    return CheckResult("minsup_invariants", ok and worst <= EXACT_ATOL, f"max row-sum gap = {worst:.2e}")


FAST_CHECKS = (
    check_theorem2_identity,
    check_prop1_closed_form,
    check_prop2_closed_form,
    check_dr_identity,
    check_shift_identity,
    check_a3_equivalence,
    check_theorem1_bound,
)

FULL_CHECKS = FAST_CHECKS + (
    check_ips_unbiased_full_support,
    check_prop1_monte_carlo,
    check_prop2_monte_carlo,
    check_theorem2_convergence,
    check_prop3_frequency,
    check_minsup_invariants,
)


def run_checks(level: str = "fast") -> list:
    if level not in ("fast", "full"):
        raise ValueError(f"unknown level {level!r}")
    checks = FAST_CHECKS if level == "fast" else FULL_CHECKS
    results = []
    for fn in checks:
        try:
            results.append(fn())
        except Exception as exc:  # a crashed check is a failed check, not an abort
            results.append(CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results
