"""Small worked example used across the test and verification suites.

Two contexts, three actions, a partially supported logging policy, and a
target policy that puts substantial mass on the blind spots. All quantities
of interest are cheap to enumerate by hand on this instance.
"""
from __future__ import annotations

import numpy as np

from .core import SyntheticProblem, TabularPolicy


def reference_problem() -> SyntheticProblem:
    return SyntheticProblem(
        contexts=np.eye(2),
        context_weights=np.array([0.5, 0.5]),
        n_actions=3,
        mean_reward=np.array([[1.0, 0.0, 0.5], [0.2, 0.8, 0.4]]),
        reward_bounds=(0.0, 1.0),
        reward_noise="deterministic",
    )


def reference_logging() -> TabularPolicy:
    # Unsupported: action 2 at context 0, actions 1 and 2 at context 1.
    return TabularPolicy(np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0]]))


def reference_target() -> TabularPolicy:
    return TabularPolicy(np.array([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]]))
