"""
Tests for the dense simplex solver.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.lp import LpError, LpOptions, LpProblem, LpStatus, solve_lp
from tests.oracles import vertex_optimum


def box_problem(objective, upper):
    """maximize objective·x over 0 <= x <= upper."""
    d = len(objective)
    A = np.vstack([np.eye(d), -np.eye(d)])
    b = np.concatenate([upper, np.zeros(d)])
    return LpProblem(objective, A, b)


class TestSmallProblems:
    def test_unit_box(self):
        solution = solve_lp(box_problem([1.0, 1.0], [1.0, 2.0]))
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(3.0)
        assert solution.x == pytest.approx([1.0, 2.0])

    def test_negative_right_hand_side(self):
        # x >= 2 and x <= 5, minimize x.
        problem = LpProblem([-1.0], [[-1.0], [1.0]], [-2.0, 5.0])
        solution = solve_lp(problem)
        assert solution.status is LpStatus.OPTIMAL
        assert solution.x == pytest.approx([2.0])

    def test_free_variables_go_negative(self):
        # maximize -x subject to -x <= 3, i.e. x >= -3 at the optimum.
        problem = LpProblem([-1.0], [[-1.0]], [3.0])
        solution = solve_lp(problem)
        assert solution.x == pytest.approx([-3.0])

    def test_infeasible(self):
        problem = LpProblem([1.0], [[1.0], [-1.0]], [1.0, -2.0])
        solution = solve_lp(problem)
        assert solution.status is LpStatus.INFEASIBLE
        assert solution.x is None
        assert solution.objective_value is None

    def test_unbounded(self):
        problem = LpProblem([1.0, 0.0], [[0.0, 1.0]], [1.0])
        solution = solve_lp(problem)
        assert solution.status is LpStatus.UNBOUNDED
        assert solution.x is None

    def test_no_constraints_zero_objective(self):
        solution = solve_lp(LpProblem([0.0, 0.0], np.zeros((0, 2)), []))
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective_value == 0.0

    def test_redundant_equalities(self):
        # x + y = 1 written three times as paired inequalities.
        A = np.array([[1.0, 1.0], [-1.0, -1.0]] * 3)
        b = np.array([1.0, -1.0] * 3)
        A = np.vstack([A, -np.eye(2)])
        b = np.concatenate([b, np.zeros(2)])
        solution = solve_lp(LpProblem([2.0, 1.0], A, b))
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(2.0)


class TestDegeneracy:
    @pytest.fixture
    def cycling_example(self):
        # Classic Dantzig-rule cycling instance; optimum 1/20 in minimization form.
        objective = np.array([0.75, -150.0, 0.02, -6.0])
        A = np.array([
            [0.25, -60.0, -0.04, 9.0],
            [0.5, -90.0, -0.02, 3.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        b = np.array([0.0, 0.0, 1.0])
        A = np.vstack([A, -np.eye(4)])
        b = np.concatenate([b, np.zeros(4)])
        return LpProblem(objective, A, b)

    def test_terminates_at_optimum(self, cycling_example):
        solution = solve_lp(cycling_example)
        assert solution.status is LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(0.05)

    def test_bland_from_the_start(self, cycling_example):
        solution = solve_lp(cycling_example, LpOptions(bland_factor=0))
        assert solution.objective_value == pytest.approx(0.05)

    def test_pivot_cap(self, cycling_example):
        with pytest.raises(LpError):
            solve_lp(cycling_example, LpOptions(pivot_cap_factor=0))


class TestAgainstVertexEnumeration:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=100_000))
    def test_matches_best_vertex(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        rows = int(rng.integers(1, 6))
        objective = rng.normal(size=d)
        A = rng.normal(size=(rows, d))
        b = rng.normal(size=rows) + 1.0
        # Box rows keep every instance bounded.
        A = np.vstack([A, np.eye(d), -np.eye(d)])
        b = np.concatenate([b, np.full(2 * d, 10.0)])

        expected = vertex_optimum(objective, A, b)
        solution = solve_lp(LpProblem(objective, A, b))
        if expected is None:
            assert solution.status is LpStatus.INFEASIBLE
        else:
            assert solution.status is LpStatus.OPTIMAL
            assert solution.objective_value == pytest.approx(expected, abs=1e-6)
            assert np.all(A @ solution.x <= b + 1e-7)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=100_000))
    def test_objective_scaling(self, seed):
        rng = np.random.default_rng(seed)
        objective = rng.normal(size=2)
        problem = box_problem(objective, [3.0, 4.0])
        scaled = box_problem(5.0 * objective, [3.0, 4.0])
        assert solve_lp(scaled).objective_value == pytest.approx(
            5.0 * solve_lp(problem).objective_value, abs=1e-9
        )


def test_deterministic():
    rng = np.random.default_rng(7)
    A = np.vstack([rng.normal(size=(6, 3)), np.eye(3), -np.eye(3)])
    b = np.concatenate([rng.uniform(0.5, 2.0, size=6), np.full(6, 5.0)])
    problem = LpProblem(rng.normal(size=3), A, b)
    first, second = solve_lp(problem), solve_lp(problem)
    assert np.array_equal(first.x, second.x)
    assert first.pivot_count == second.pivot_count


def test_objective_value_matches_point():
    problem = box_problem([2.0, -1.0, 0.5], [1.0, 1.0, 1.0])
    solution = solve_lp(problem)
    assert solution.objective_value == pytest.approx(float(problem.objective @ solution.x))


def test_non_finite_input_rejected():
    with pytest.raises(LpError):
        LpProblem([1.0], [[np.nan]], [1.0])
    with pytest.raises(LpError):
        LpProblem([np.inf], [[1.0]], [1.0])


def test_tableau_dump(tmp_path):
    path = tmp_path / "tableau.txt"
    solve_lp(box_problem([1.0, 1.0], [1.0, 2.0]), LpOptions(dump_path=path))
    text = path.read_text()
    assert text.startswith("# optimal")
    assert "basis:" in text
