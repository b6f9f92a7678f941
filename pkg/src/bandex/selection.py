"""Grid search over the reward shift with pluggable validation selectors,
plus the concentration-bound checker for the weight-sum constraint."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, LoggedDataset, Policy, SyntheticProblem
from .estimators import (
    augmented_ips,
    build_minsup,
    conservative_model,
    dm,
    ips,
    minsup_estimate,
)
from .learning import TrainConfig, train_erm
from .oracle import exact_policy_value

SELECTORS = ("minsup", "dm", "conservative", "oracle")


@dataclass
class SweepEntry:
    k: float
    estimates: dict  # selector -> validation estimate
    val_weight_sum: float
    exact_value: Optional[float] = None
    policy: Optional[Policy] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "estimates": dict(self.estimates),
            "val_weight_sum": self.val_weight_sum,
            "unsupported_mass": 1.0 - self.val_weight_sum if self.error is None else None,
            "exact_value": self.exact_value,
            "error": self.error,
        }


@dataclass
class SweepResult:
    entries: list
    chosen: dict  # selector -> chosen k

    def entry_for(self, k: float) -> SweepEntry:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(k)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries], "chosen": dict(self.chosen)}


def default_grid(reward_bounds: tuple, points: int = 21) -> np.ndarray:
    """Evenly spaced shifts spanning plus/minus the reward range."""
    span = reward_bounds[1] - reward_bounds[0]
    return np.linspace(-span, span, points)


def sweep_k(
    train_data: LoggedDataset,
    val_data: LoggedDataset,
    grid: Sequence[float],
    train_config: TrainConfig,
    selectors: Sequence[str],
    logging: Policy,
    problem: SyntheticProblem,
    reward_model=None,
) -> SweepResult:
    """Train one shifted-objective policy per grid point and rank the grid by
    each selector's validation estimate. Ties go to the smaller |k|."""
    grid = list(grid)
    if not grid:
        raise ContractError("grid must be nonempty")
    for s in selectors:
        if s not in SELECTORS:
            raise ContractError(f"unknown selector {s!r}")
    if "dm" in selectors and reward_model is None:
        raise ContractError("dm selector needs a reward model")
    minsup_policy = build_minsup(logging, problem) if "minsup" in selectors else None
    entries = []
    for k in grid:
        cfg = replace(train_config, objective="shifted", shift_k=float(k))
        try:
            policy = train_erm(train_data, cfg, logging=logging).policy
        except Exception as exc:  # annotate and exclude failed grid points
            entries.append(
                SweepEntry(k=float(k), estimates={}, val_weight_sum=float("nan"), error=str(exc))
            )
            continue
        report = ips(val_data, policy)
        estimates = {}
        for s in selectors:
            if s == "minsup":
                estimates[s] = minsup_estimate(val_data, policy, minsup_policy)
            elif s == "dm":
                estimates[s] = dm(val_data, policy, reward_model)
            elif s == "conservative":
                estimates[s] = augmented_ips(
                    val_data, policy, logging, conservative_model(problem.reward_bounds)
                ).value
            elif s == "oracle":
                estimates[s] = exact_policy_value(problem, policy)
        entries.append(
            SweepEntry(
                k=float(k),
                estimates=estimates,
                val_weight_sum=report.weight_sum,
                exact_value=exact_policy_value(problem, policy),
                policy=policy,
            )
        )
    ok = [e for e in entries if e.error is None]
    if not ok:
        raise ContractError("every grid point failed to train")
    chosen = {}
    for s in selectors:
        best = max(ok, key=lambda e: (e.estimates[s], -abs(e.k), -e.k))
        chosen[s] = best.k
    return SweepResult(entries=entries, chosen=chosen)


@dataclass(frozen=True)
class KappaCheck:
    satisfied: bool
    failure_prob_bound: float


def check_kappa(
    weight_sum: float, kappa: float, epsilon: float, n: int, p_min: float
) -> KappaCheck:
    """Two-sided weight-sum test for the divergence constraint.

    satisfied means 1 - kappa + epsilon <= weight_sum <= 1 - epsilon; the
    returned bound 2*exp(-2*n*eps^2*p_min^2) caps the probability that a
    satisfied test coexists with a divergence outside [0, kappa].
    """
    if not (0 < kappa < 1):
        raise ContractError("kappa must be in (0, 1)")
    if not (0 < epsilon < kappa / 2):
        raise ContractError("epsilon must satisfy 0 < epsilon < kappa / 2")
    if not (0 < p_min <= 1):
        raise ContractError("p_min must be in (0, 1]")
    if n < 1:
        raise ContractError("n must be positive")
    satisfied = (1.0 - kappa + epsilon) <= weight_sum <= (1.0 - epsilon)
    bound = 2.0 * math.exp(-2.0 * n * epsilon**2 * p_min**2)
    return KappaCheck(satisfied=bool(satisfied), failure_prob_bound=bound)
