"""
Tests for the improvement-bound checks and the randomized suites.
"""

import json

import numpy as np
import pytest

from src.alp import StateWeights, features_from_spec
from src.dpi import dpi_sweep, solve_fh_dpi_alp
from src.exact_dp import evaluate_policy_exact_fh, evaluate_policy_exact_ih
from src.mdp import ModelError, first_action_policy, random_nonstationary_policy, random_policy
from src.verification import (
    BoundViolation, SuiteResult, run_fh_suite, run_ih_suite, run_suite, verify_theorem1,
    verify_theorem2
)


class TestTheorem2:
    def test_unchanged_policy_holds(self, tiny_ih):
        mu = first_action_policy(tiny_ih)
        exact = evaluate_policy_exact_ih(tiny_ih, mu)
        report = verify_theorem2(tiny_ih, mu, mu, exact)
        assert report.holds
        assert report.premise_holds
        assert report.theorem == "theorem2"
        assert report.worst_slack >= 0

    def test_exact_values_give_rollout_improvement(self, tiny_ih):
        mu = random_policy(tiny_ih, np.random.default_rng(0))
        exact = evaluate_policy_exact_ih(tiny_ih, mu)
        mu_next = dpi_sweep(tiny_ih, mu, exact, 0.9)
        report = verify_theorem2(tiny_ih, mu, mu_next, exact)
        assert report.holds
        assert report.beta <= 1e-12
        assert np.all(
            evaluate_policy_exact_ih(tiny_ih, mu_next).values <= exact.values + 1e-9
        )

    def test_values_above_exact_break_premise(self, tiny_ih):
        mu = first_action_policy(tiny_ih)
        lifted = evaluate_policy_exact_ih(tiny_ih, mu).values.copy()
        lifted[0] += 1.0
        report = verify_theorem2(tiny_ih, mu, mu, lifted)
        assert not report.holds
        assert not report.premise_holds
        violation = report.violations[0]
        assert (violation["check"], violation["x"]) == ("premise", 0)
        assert violation["slack"] == pytest.approx(-1.0 + 1e-6)
        with pytest.raises(BoundViolation) as excinfo:
            report.raise_if_violated()
        assert excinfo.value.report is report

    def test_needs_infinite_horizon(self, tiny_fh):
        mu = first_action_policy(tiny_fh)
        with pytest.raises(ModelError):
            verify_theorem2(tiny_fh, mu, mu, np.zeros(tiny_fh.n))


class TestTheorem1:
    def test_unchanged_policy_holds(self, tiny_fh):
        pi = random_nonstationary_policy(tiny_fh, np.random.default_rng(1))
        exact = evaluate_policy_exact_fh(tiny_fh, pi)
        report = verify_theorem1(tiny_fh, pi, pi, exact)
        assert report.holds
        assert report.beta == 0.0
        assert report.theorem == "theorem1"

    def test_identity_basis_solver_output_holds(self, tiny_fh):
        pi = random_nonstationary_policy(tiny_fh, np.random.default_rng(2))
        phi = features_from_spec("identity", tiny_fh)
        pi_tilde, trace = solve_fh_dpi_alp(tiny_fh, pi, phi, StateWeights.uniform(tiny_fh.n))
        report = verify_theorem1(tiny_fh, pi, pi_tilde, trace.stage_values)
        assert report.holds
        base = evaluate_policy_exact_fh(tiny_fh, pi)
        improved = evaluate_policy_exact_fh(tiny_fh, pi_tilde)
        for k in range(tiny_fh.horizon.stages + 1):
            assert np.all(improved[k].values <= base[k].values + 1e-7)

    def test_values_above_exact_break_premise(self, tiny_fh):
        pi = random_nonstationary_policy(tiny_fh, np.random.default_rng(3))
        values = [v.values.copy() for v in evaluate_policy_exact_fh(tiny_fh, pi)]
        values[1][2] += 1.0
        report = verify_theorem1(tiny_fh, pi, pi, values)
        assert not report.holds
        assert not report.premise_holds
        assert any(v["check"] == "premise" and v["stage"] == 1 and v["x"] == 2
                   for v in report.violations)
        assert "exceed" in report.message

    def test_stage_count_checked(self, tiny_fh):
        pi = random_nonstationary_policy(tiny_fh, np.random.default_rng(4))
        with pytest.raises(ModelError):
            verify_theorem1(tiny_fh, pi, pi, [np.zeros(tiny_fh.n)])


class TestSuites:
    def test_infinite_horizon_suite_passes(self):
        result = run_ih_suite(seeds=100)
        assert result.passed, result.failures[:1]
        assert result.checks >= 100
        assert result.worst_slack >= 0

    def test_finite_horizon_suite_passes(self):
        result = run_fh_suite(seeds=100)
        assert result.passed, result.failures[:1]
        assert result.checks == 100

    def test_injected_bug_is_caught_ih(self, tmp_path):
        result = run_ih_suite(seeds=2, inject_bug=True, replay_dir=tmp_path)
        assert not result.passed
        assert {f["seed"] for f in result.failures} == {0, 1}
        replay = json.loads((tmp_path / "ih_seed0.json").read_text())
        assert replay["suite"] == "ih"
        assert replay["model"]["horizon"]["type"] == "infinite"

    def test_injected_bug_is_caught_fh(self, tmp_path):
        result = run_fh_suite(seeds=2, inject_bug=True, replay_dir=tmp_path)
        assert len(result.failures) == 2
        assert (tmp_path / "fh_seed1.json").exists()

    def test_run_suite_dispatch(self):
        assert run_suite("fh", 1).suite == "fh"
        with pytest.raises(ValueError):
            run_suite("xx", 1)


def test_suite_result_tracks_worst_case(tiny_ih):
    mu = first_action_policy(tiny_ih)
    exact = evaluate_policy_exact_ih(tiny_ih, mu)
    result = SuiteResult("ih", seeds=1)
    result.record(0, verify_theorem2(tiny_ih, mu, mu, exact))
    lifted = exact.values.copy()
    lifted[1] += 2.0
    result.record(0, verify_theorem2(tiny_ih, mu, mu, lifted), iteration=1)
    data = result.to_dict()
    assert data["checks"] == 2
    assert not data["passed"]
    assert data["failures"][0]["iteration"] == 1
    assert data["max_beta"] == pytest.approx(2.0)
