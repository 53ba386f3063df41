"""
Shared fixtures.
"""

import pytest

from src.envs import GridSpec, build_random_comdp, build_spiders_and_flies


@pytest.fixture
def tiny_ih():
    return build_random_comdp(seed=0, n=5, m=2, actions_per_agent=2, branching=3, mode="ih:0.9")


@pytest.fixture
def tiny_fh():
    return build_random_comdp(seed=1, n=4, m=2, actions_per_agent=2, branching=3, mode="fh:3")


@pytest.fixture(scope="session")
def grid2_fh():
    return build_spiders_and_flies(GridSpec.from_mode(2, "fh:4", slip_p=1.0))


@pytest.fixture(scope="session")
def grid3_fh():
    return build_spiders_and_flies(GridSpec.from_mode(3, "fh:6"))


@pytest.fixture(scope="session")
def grid4_ih():
    return build_spiders_and_flies(GridSpec.from_mode(4, "ih:0.9"))
