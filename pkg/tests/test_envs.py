"""
Tests for the grid world and random model generators.
"""

from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.envs import (
    GeneratorError, GridSpec, build_random_comdp, build_spiders_and_flies, goal_states,
    parse_horizon_mode
)
from src.exact_dp import finite_horizon_dp
from src.mdp import joint_actions, validate
from src.models import FiniteHorizon, InfiniteHorizon

UP, DOWN, LEFT, RIGHT = range(4)


def spider_marginals(mdp, x, u):
    """Destination distributions of each spider for one joint action."""
    cells = mdp.grid.cells
    first, second = defaultdict(float), defaultdict(float)
    for y, p in enumerate(mdp.transition_row(x, u)):
        if p > 0:
            first[y // cells] += p
            second[y % cells] += p
    return dict(first), dict(second)


class TestSpidersAndFlies:
    def test_four_by_four_has_256_states(self, grid4_ih):
        assert grid4_ih.n == 256
        assert grid4_ih.m == 2
        assert len(joint_actions(grid4_ih, 17)) == 16
        assert validate(grid4_ih) == []

    def test_slip_distribution(self, grid4_ih):
        x = 5 * 16 + 10
        first, second = spider_marginals(grid4_ih, x, (UP, UP))
        assert first == pytest.approx({1: 0.7, 9: 0.1, 4: 0.1, 6: 0.1})
        assert second == pytest.approx({6: 0.7, 14: 0.1, 9: 0.1, 11: 0.1})

    def test_rows_sum_to_one(self, grid3_fh):
        sums = np.asarray(grid3_fh.transition.sum(axis=1)).ravel()
        assert np.allclose(sums, 1.0, atol=1e-12)

    def test_goal_states(self):
        spec = GridSpec.from_mode(2, "fh:4")
        assert goal_states(spec) == [3, 12]

    def test_finite_goals_are_absorbing(self, grid2_fh):
        for g in grid2_fh.grid.goal_states:
            for u in joint_actions(grid2_fh, g):
                assert grid2_fh.transition_row(g, u)[g] == 1.0
                assert np.all(grid2_fh.cost_row(g, u) == 0.0)

    def test_infinite_goals_restart_uniformly(self, grid4_ih):
        assert grid4_ih.grid.goal_states == (15, 240)
        for g in grid4_ih.grid.goal_states:
            row = grid4_ih.transition_row(g, (LEFT, RIGHT))
            assert row == pytest.approx(np.full(256, 1.0 / 256))
            assert np.all(grid4_ih.cost_row(g, (LEFT, RIGHT)) == 0.0)

    def test_wall_bump_keeps_position_and_costs(self, grid2_fh):
        # Spider 1 on cell 0 bumps the top wall; spider 2 steps from cell 1 to 3.
        x = 0 * 4 + 1
        assert grid2_fh.transition_row(x, (UP, DOWN))[3] == 1.0
        assert grid2_fh.cost_row(x, (UP, DOWN))[3] == 2.0

    def test_collision_costs(self, grid2_fh):
        # Spiders on cells 1 and 2 both step into cell 3.
        x = 1 * 4 + 2
        assert grid2_fh.transition_row(x, (DOWN, RIGHT))[15] == 1.0
        assert grid2_fh.cost_row(x, (DOWN, RIGHT))[15] == 3.0

    def test_swapping_spiders_is_symmetric(self, grid3_fh):
        cells = 9
        swap = np.array([(y % cells) * cells + y // cells for y in range(grid3_fh.n)])
        P, G = grid3_fh.dense_transition(), grid3_fh.dense_cost()
        for x in range(grid3_fh.n):
            x_swapped = swap[x]
            for a1 in range(4):
                for a2 in range(4):
                    r = grid3_fh.row_index(x, (a1, a2))
                    r_swapped = grid3_fh.row_index(x_swapped, (a2, a1))
                    assert np.allclose(P[r], P[r_swapped][swap], atol=1e-15)
                    assert np.array_equal(G[r], G[r_swapped][swap])

    def test_deterministic_two_by_two_capture_costs(self, grid2_fh):
        _, values = finite_horizon_dp(grid2_fh)
        J0 = values[0].values
        # Spiders on the two empty corners each step onto a fly.
        assert J0[1 * 4 + 2] == pytest.approx(1.0)
        # Both spiders on fly cell 0 need two moves to split up.
        assert J0[0] == pytest.approx(2.0)
        assert J0[3] == 0.0 and J0[12] == 0.0

    def test_horizons(self, grid2_fh, grid4_ih):
        assert isinstance(grid2_fh.horizon, FiniteHorizon)
        assert grid2_fh.horizon.stages == 4
        assert np.all(grid2_fh.horizon.terminal_cost == 0.0)
        assert grid4_ih.horizon == InfiniteHorizon(0.9)

    def test_penalties_configurable(self):
        spec = GridSpec.from_mode(2, "fh:2", slip_p=1.0, collision_penalty=5.0, wall_penalty=0.0)
        mdp = build_spiders_and_flies(spec)
        assert mdp.cost_row(1 * 4 + 2, (DOWN, RIGHT))[15] == 6.0
        assert mdp.cost_row(0 * 4 + 1, (UP, DOWN))[3] == 1.0


class TestGridSpec:
    @pytest.mark.parametrize("kwargs", [
        {"h": 1},
        {"h": 2, "slip_p": 1.2},
        {"h": 2, "slip_p": 0.0},
        {"h": 2, "fly_cells": (1, 1)},
        {"h": 2, "fly_cells": (0, 4)},
        {"h": 2, "stage_cost": 0.0},
        {"h": 2, "wall_penalty": -1.0},
    ])
    def test_invalid(self, kwargs):
        kwargs = dict(kwargs)
        h = kwargs.pop("h")
        with pytest.raises(GeneratorError):
            GridSpec.from_mode(h, "ih:0.9", **kwargs)

    def test_flies_default_to_opposite_corners(self):
        assert GridSpec.from_mode(4, "ih:0.9").fly_cells == (0, 15)
        assert GridSpec.from_mode(4, "ih:0.9").n == 256


class TestParseHorizonMode:
    def test_finite(self):
        mode = parse_horizon_mode("fh:3", 4)
        assert mode.stages == 3
        assert mode.terminal_cost.tolist() == [0.0] * 4

    def test_infinite(self):
        assert parse_horizon_mode("ih:0.9") == InfiniteHorizon(0.9)

    @pytest.mark.parametrize("text", ["xx", "fh:0", "fh:a", "ih:1.5", "ih:0", "ih"])
    def test_rejected(self, text):
        with pytest.raises(GeneratorError):
            parse_horizon_mode(text)


class TestRandomComdp:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_same_seed_same_model(self, seed):
        first = build_random_comdp(seed=seed, n=6, m=2, actions_per_agent=3, branching=3, mode="fh:2")
        second = build_random_comdp(seed=seed, n=6, m=2, actions_per_agent=3, branching=3, mode="fh:2")
        assert np.array_equal(first.dense_transition(), second.dense_transition())
        assert np.array_equal(first.dense_cost(), second.dense_cost())
        assert np.array_equal(first.horizon.terminal_cost, second.horizon.terminal_cost)

    def test_full_branching_rows_are_dense(self):
        mdp = build_random_comdp(seed=1, n=5, m=2, actions_per_agent=2, branching=5)
        P = mdp.dense_transition()
        assert np.all(P > 0)
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)

    def test_branching_limits_successors(self):
        mdp = build_random_comdp(seed=2, n=8, m=1, actions_per_agent=2, branching=2)
        assert np.all(np.count_nonzero(mdp.dense_transition(), axis=1) == 2)

    def test_costs_within_range(self):
        mdp = build_random_comdp(
            seed=3, n=4, m=1, actions_per_agent=2, branching=4, cost_range=(2.0, 3.0)
        )
        G = mdp.dense_cost()
        assert G.min() >= 2.0 and G.max() <= 3.0

    def test_always_valid(self):
        for seed in range(1000):
            n = 1 + seed % 6
            mdp = build_random_comdp(
                seed=seed, n=n, m=1 + seed % 3, actions_per_agent=1 + seed % 3,
                branching=1 + seed % n, mode="fh:2" if seed % 2 else "ih:0.9"
            )
            assert validate(mdp) == [], seed

    @pytest.mark.parametrize("kwargs", [
        {"n": 1000, "m": 2, "actions_per_agent": 4, "branching": 2},
        {"n": 4, "m": 1, "actions_per_agent": 2, "branching": 5},
        {"n": 4, "m": 1, "actions_per_agent": 2, "branching": 0},
        {"n": 0, "m": 1, "actions_per_agent": 2, "branching": 1},
        {"n": 4, "m": 1, "actions_per_agent": 2, "branching": 2, "cost_range": (1.0, 0.0)},
    ])
    def test_rejected(self, kwargs):
        with pytest.raises(GeneratorError):
            build_random_comdp(seed=0, **kwargs)
