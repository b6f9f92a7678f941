"""Shared fixtures: the small worked example and two session-scoped studies.

The studies are deliberately expensive (dozens of trained policies) and are
shared between the qualitative unit tests and the acceptance suite, so they
run at most once per session.
"""
from dataclasses import dataclass

import numpy as np
import pytest

import bandex as bx
import bandex.datagen as dg
from bandex.core import SyntheticProblem, TabularPolicy, prob_table
from bandex.estimators import conservative_model
from bandex.oracle import exact_policy_value, exact_support_divergence
from bandex.reference import reference_logging, reference_problem, reference_target

N_SEEDS = 5
TRAIN_KW = dict(learn_rate=0.3, epochs=40, batch_size=128)


@pytest.fixture(scope="session")
def ref_problem():
    return reference_problem()


@pytest.fixture(scope="session")
def ref_logging():
    return reference_logging()


@pytest.fixture(scope="session")
def ref_target():
    return reference_target()


@pytest.fixture
def announce(capsys):
    """Print a line that survives pytest's output capture."""

    def _announce(line):
        with capsys.disabled():
            print(line)

    return _announce


@dataclass
class ShiftSeedResult:
    naive_value: float
    sweep: object  # SweepResult


@dataclass
class ShiftStudy:
    """Deterministic-reward study: deficient logging, rewards in [-1, 0]."""

    problem: SyntheticProblem
    logging: object
    unsupported_fraction: float
    per_seed: list


@pytest.fixture(scope="session")
def shift_study() -> ShiftStudy:
    cfg = bx.GenConfig(
        scheme="multiclass", n_contexts=20, context_dim=10, n_actions=10, seed=7,
        temperature=2.0,
    )
    problem = bx.translate_rewards(dg.make_problem(cfg), -1.0)
    logging = dg.make_logging_policy(problem, 2.0, 0.01, 0)
    grid = bx.default_grid(problem.reward_bounds, points=11)
    per_seed = []
    for seed in range(N_SEEDS):
        train = dg.log_interactions(problem, logging, 3000, seed=100 + seed)
        val = dg.log_interactions(problem, logging, 1500, seed=200 + seed)
        sweep = bx.sweep_k(
            train,
            val,
            grid,
            bx.TrainConfig(objective="shifted", seed=seed, **TRAIN_KW),
            ("minsup", "oracle"),
            logging,
            problem,
        )
        naive = bx.train_erm(
            train, bx.TrainConfig(objective="naive_ips", seed=seed, **TRAIN_KW), logging=logging
        )
        per_seed.append(
            ShiftSeedResult(
                naive_value=exact_policy_value(problem, naive.policy), sweep=sweep
            )
        )
    return ShiftStudy(
        problem=problem,
        logging=logging,
        unsupported_fraction=dg.unsupported_fraction(logging, problem),
        per_seed=per_seed,
    )


@dataclass
class BlindspotSeedResult:
    sweep: object
    restricted_value: float
    restricted_divergence: float
    augmented_value: float
    conservative_value: float


@dataclass
class BlindspotStudy:
    """Stochastic-reward study whose logging policy misses the best action in
    a handful of contexts, so blind spots genuinely carry value."""

    problem: SyntheticProblem
    logging: TabularPolicy
    unsupported_fraction: float
    per_seed: list


@pytest.fixture(scope="session")
def blindspot_study() -> BlindspotStudy:
    cfg = bx.GenConfig(
        scheme="multiclass", n_contexts=20, context_dim=10, n_actions=10, seed=7
    )
    det = dg.make_problem(cfg)
    mean = np.where(det.mean_reward > 0.5, 0.9, 0.1)
    problem = SyntheticProblem(
        contexts=det.contexts,
        context_weights=det.context_weights,
        n_actions=det.n_actions,
        mean_reward=mean,
        reward_bounds=(0.0, 1.0),
        reward_noise="bernoulli",
    )
    best = mean.argmax(axis=1)
    table = prob_table(dg.make_logging_policy(problem, 1.5, 0.01, 0), problem).copy()
    rng = np.random.default_rng(42)
    eligible = [i for i in range(problem.n_contexts) if (table[i] > 0).sum() >= 2]
    for i in rng.choice(eligible, size=6, replace=False):
        table[i, best[i]] = 0.0
        table[i] /= table[i].sum()
    logging = TabularPolicy(table=table)
    grid = bx.default_grid(problem.reward_bounds, points=11)
    per_seed = []
    for seed in range(N_SEEDS):
        train = dg.log_interactions(problem, logging, 3000, seed=100 + seed)
        val = dg.log_interactions(problem, logging, 1500, seed=200 + seed)
        sweep = bx.sweep_k(
            train,
            val,
            grid,
            bx.TrainConfig(objective="shifted", seed=seed, **TRAIN_KW),
            ("minsup", "conservative", "oracle"),
            logging,
            problem,
        )
        restricted = bx.train_erm(
            train,
            bx.TrainConfig(objective="action_restricted", seed=seed, **TRAIN_KW),
            logging=logging,
        ).policy
        model = bx.train_reward_model(train, bx.TrainConfig(seed=seed, **TRAIN_KW))
        augmented = bx.train_erm(
            train,
            bx.TrainConfig(objective="augmented", seed=seed, **TRAIN_KW),
            logging=logging,
            reward_model=model,
        ).policy
        conservative = bx.train_erm(
            train,
            bx.TrainConfig(objective="augmented", seed=seed, **TRAIN_KW),
            logging=logging,
            reward_model=conservative_model(problem.reward_bounds),
        ).policy
        per_seed.append(
            BlindspotSeedResult(
                sweep=sweep,
                restricted_value=exact_policy_value(problem, restricted),
                restricted_divergence=exact_support_divergence(problem, logging, restricted),
                augmented_value=exact_policy_value(problem, augmented),
                conservative_value=exact_policy_value(problem, conservative),
            )
        )
    return BlindspotStudy(
        problem=problem,
        logging=logging,
        unsupported_fraction=float((table == 0.0).mean()),
        per_seed=per_seed,
    )
