"""Shift-grid model selection and the weight-sum concentration check."""
import math

import numpy as np
import pytest

import bandex.datagen as dg
from bandex.core import ContractError
from bandex.learning import TrainConfig
from bandex.selection import SweepResult, check_kappa, default_grid, sweep_k


def spearman(a, b):
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    return float(np.corrcoef(ra, rb)[0, 1])


class TestDefaultGrid:
    def test_spans_reward_range_symmetrically(self):
        grid = default_grid((0.0, 1.0))
        assert grid.size == 21
        assert grid[0] == -1.0 and grid[-1] == 1.0
        assert 0.0 in grid

    def test_degenerate_bounds_collapse_to_zero(self):
        np.testing.assert_array_equal(default_grid((0.5, 0.5), points=5), np.zeros(5))

    def test_shifted_bounds(self):
        grid = default_grid((-1.0, 0.0), points=11)
        assert grid[0] == -1.0 and grid[-1] == 1.0


class TestCheckKappa:
    def test_hand_bound_value(self):
        check = check_kappa(0.8, kappa=0.5, epsilon=0.1, n=5000, p_min=0.1)
        assert check.satisfied
        assert abs(check.failure_prob_bound - 2 * math.exp(-2 * 5000 * 0.01 * 0.01)) < 1e-12
        assert abs(check.failure_prob_bound - 0.7357588823428847) < 1e-12

    def test_interval_boundaries_inclusive(self):
        assert check_kappa(1 - 0.5 + 0.1, 0.5, 0.1, 10, 0.5).satisfied
        assert check_kappa(1 - 0.1, 0.5, 0.1, 10, 0.5).satisfied
        assert not check_kappa(1 - 0.5 + 0.1 - 1e-9, 0.5, 0.1, 10, 0.5).satisfied
        assert not check_kappa(1 - 0.1 + 1e-9, 0.5, 0.1, 10, 0.5).satisfied

    def test_domain_errors(self):
        with pytest.raises(ContractError):
            check_kappa(0.8, kappa=1.0, epsilon=0.1, n=10, p_min=0.5)
        with pytest.raises(ContractError):
            check_kappa(0.8, kappa=0.5, epsilon=0.3, n=10, p_min=0.5)
        with pytest.raises(ContractError):
            check_kappa(0.8, kappa=0.5, epsilon=0.1, n=0, p_min=0.5)
        with pytest.raises(ContractError):
            check_kappa(0.8, kappa=0.5, epsilon=0.1, n=10, p_min=0.0)

    def test_bound_monotone_in_n_eps_pmin(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            kappa = float(rng.uniform(0.2, 0.9))
            eps = float(rng.uniform(0.01, kappa / 2 * 0.9))
            n = int(rng.integers(1, 10_000))
            p_min = float(rng.uniform(0.01, 1.0))
            base = check_kappa(0.5, kappa, eps, n, p_min).failure_prob_bound
            assert check_kappa(0.5, kappa, eps, 2 * n, p_min).failure_prob_bound <= base
            assert check_kappa(0.5, kappa, min(eps * 1.1, kappa / 2 * 0.99), n, p_min).failure_prob_bound <= base
            assert check_kappa(0.5, kappa, eps, n, min(1.0, p_min * 1.1)).failure_prob_bound <= base
            assert base <= 2.0


class TestSweep:
    def test_empty_grid_rejected(self, ref_problem, ref_logging):
        data = dg.log_interactions(ref_problem, ref_logging, 50, seed=0)
        with pytest.raises(ContractError):
            sweep_k(data, data, [], TrainConfig(), ("oracle",), ref_logging, ref_problem)

    def test_unknown_selector_rejected(self, ref_problem, ref_logging):
        data = dg.log_interactions(ref_problem, ref_logging, 50, seed=0)
        with pytest.raises(ContractError):
            sweep_k(data, data, [0.0], TrainConfig(), ("magic",), ref_logging, ref_problem)

    def test_dm_selector_needs_model(self, ref_problem, ref_logging):
        data = dg.log_interactions(ref_problem, ref_logging, 50, seed=0)
        with pytest.raises(ContractError):
            sweep_k(data, data, [0.0], TrainConfig(), ("dm",), ref_logging, ref_problem)

    def test_entries_cover_grid_and_chosen_is_argmax(self, blindspot_study):
        for res in (s.sweep for s in blindspot_study.per_seed):
            assert isinstance(res, SweepResult)
            ks = [e.k for e in res.entries]
            assert len(ks) == 11
            ok = [e for e in res.entries if e.error is None]
            for selector, k in res.chosen.items():
                best = max(e.estimates[selector] for e in ok)
                assert res.entry_for(k).estimates[selector] == best

    def test_oracle_selector_dominates_every_selector(self, blindspot_study, shift_study):
        for study in (blindspot_study, shift_study):
            for seed in study.per_seed:
                res = seed.sweep
                oracle_value = res.entry_for(res.chosen["oracle"]).exact_value
                for selector, k in res.chosen.items():
                    assert res.entry_for(k).exact_value <= oracle_value + 1e-12

    def test_weight_sum_tracks_restrictiveness(self, blindspot_study):
        # raising the shift makes supported actions more attractive relative
        # to blind spots, so the realized validation weight sum should rise
        # with k essentially monotonically
        for seed in blindspot_study.per_seed:
            ok = [e for e in seed.sweep.entries if e.error is None]
            ks = np.array([e.k for e in ok])
            ws = np.array([e.val_weight_sum for e in ok])
            assert spearman(ks, ws) > 0.8

    def test_minsup_choice_near_oracle_on_shift_study(self, shift_study):
        for seed in shift_study.per_seed:
            res = seed.sweep
            gap = (
                res.entry_for(res.chosen["oracle"]).exact_value
                - res.entry_for(res.chosen["minsup"]).exact_value
            )
            assert gap <= 0.02
