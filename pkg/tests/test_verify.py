"""The named invariant checks themselves, at both levels."""
import pytest

import bandex.verify as verify


def test_fast_level_runs_the_exact_checks():
    results = verify.run_checks("fast")
    assert len(results) == len(verify.FAST_CHECKS)
    for res in results:
        assert res.passed, f"{res.name}: {res.statistic}"


def test_full_level_extends_fast_with_monte_carlo():
    results = verify.run_checks("full")
    assert len(results) == len(verify.FULL_CHECKS)
    names = [r.name for r in results]
    assert "prop3_frequency" in names and "theorem2_identity" in names
    for res in results:
        assert res.passed, f"{res.name}: {res.statistic}"


def test_unknown_level_rejected():
    with pytest.raises(ValueError):
        verify.run_checks("medium")


def test_crashing_check_becomes_a_failure(monkeypatch):
    def boom():
        raise RuntimeError("kaput")

    monkeypatch.setattr(verify, "FAST_CHECKS", verify.FAST_CHECKS[:1] + (boom,))
    results = verify.run_checks("fast")
    assert results[0].passed
    assert not results[1].passed
    assert "kaput" in results[1].statistic


def test_check_result_serialization():
    res = verify.CheckResult(name="demo", passed=True, statistic="ok")
    assert res.to_dict() == {"name": "demo", "passed": True, "statistic": "ok"}
