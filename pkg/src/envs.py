"""
Problem generators.

The two-spider, two-fly grid world and a seeded random cooperative MDP
generator used by the property tests and the bound suites.
"""

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog

from .mdp import CoMdp, GridLayout
from .models import ComdpError, FiniteHorizon, HorizonMode, InfiniteHorizon

logger = structlog.get_logger(__name__)

MAX_KERNEL_ENTRIES = 1_000_000

# (row, column) offsets of the grid actions.
MOVES: Tuple[Tuple[int, int], ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))


class GeneratorError(ComdpError):
    """Raised for invalid generator parameters."""
    pass


def parse_horizon_mode(text: str, n: int = 0) -> HorizonMode:
    """Parse 'fh:N' or 'ih:alpha'; finite horizons get a zero terminal cost of length n."""
    kind, _, value = text.partition(":")
    try:
        if kind == "fh":
            stages = int(value)
            if stages < 1:
                raise GeneratorError(f"Horizon N must be >= 1, got {stages}")
            return FiniteHorizon(stages, np.zeros(n))
        if kind == "ih":
            alpha = float(value)
            if not 0.0 < alpha < 1.0:
                raise GeneratorError(f"Discount alpha must lie in (0, 1), got {alpha}")
            return InfiniteHorizon(alpha)
    except ValueError:
        pass
    raise GeneratorError(f"Mode must be fh:N or ih:alpha, got {text!r}")


@dataclass(frozen=True)
class GridSpec:
    """Parameters of the spiders-and-flies grid world."""
    h: int
    fly_cells: Tuple[int, int]
    mode: HorizonMode
    slip_p: float = 0.7
    collision_penalty: float = 2.0
    wall_penalty: float = 1.0
    stage_cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fly_cells", tuple(int(c) for c in self.fly_cells))
        if self.h < 2:
            raise GeneratorError(f"Grid side h must be >= 2, got {self.h}")
        cells = self.h * self.h
        if len(self.fly_cells) != 2 or self.fly_cells[0] == self.fly_cells[1]:
            raise GeneratorError(f"Need two distinct fly cells, got {self.fly_cells}")
        if any(not 0 <= c < cells for c in self.fly_cells):
            raise GeneratorError(f"Fly cells {self.fly_cells} outside 0..{cells - 1}")
        if not 0.0 < self.slip_p <= 1.0:
            raise GeneratorError(f"slip_p must lie in (0, 1], got {self.slip_p}")
        if self.stage_cost <= 0:
            raise GeneratorError(f"stage_cost must be positive, got {self.stage_cost}")
        if self.collision_penalty < 0 or self.wall_penalty < 0:
            raise GeneratorError("Penalties must be non-negative")

    @property
    def n(self) -> int:
        return self.h ** 4

    @classmethod
    def from_mode(
        cls, h: int, mode: str, fly_cells: Optional[Sequence[int]] = None, **kwargs
    ) -> "GridSpec":
        """Build a spec from a mode string; flies default to opposite corners."""
        if fly_cells is None:
            fly_cells = (0, h * h - 1)
        return cls(h=h, fly_cells=tuple(fly_cells), mode=parse_horizon_mode(mode, h ** 4), **kwargs)


def goal_states(spec: GridSpec) -> List[int]:
    """States where the two spiders cover both fly cells."""
    f1, f2 = spec.fly_cells
    cells = spec.h * spec.h
    return sorted({f1 * cells + f2, f2 * cells + f1})


def _spider_moves(spec: GridSpec) -> List[List[List[Tuple[int, float]]]]:
    """moves[cell][action] = [(destination, probability), ...] for one spider."""
    h = spec.h
    slip = (1.0 - spec.slip_p) / (len(MOVES) - 1)
    table = []
    for cell in range(h * h):
        row, col = divmod(cell, h)
        per_action = []
        for intended in range(len(MOVES)):
            outcomes: Dict[int, float] = {}
            for direction, (dr, dc) in enumerate(MOVES):
                p = spec.slip_p if direction == intended else slip
                if p == 0.0:
                    continue
                r, c = row + dr, col + dc
                # Off-grid moves stay put.
                dest = r * h + c if 0 <= r < h and 0 <= c < h else cell
                outcomes[dest] = outcomes.get(dest, 0.0) + p
            per_action.append(sorted(outcomes.items()))
        table.append(per_action)
    return table


def build_spiders_and_flies(spec: GridSpec) -> CoMdp:
    """
    Two spiders on an h×h grid chase two stationary flies.

    State x = cell1·h² + cell2. Each spider picks up/down/left/right and
    moves as intended with probability slip_p, otherwise in each other
    direction with equal probability. A move off the grid keeps the spider
    in place and costs wall_penalty. Every stage outside the goal costs
    stage_cost plus collision_penalty when both spiders end on one cell.
    """
    h = spec.h
    cells = h * h
    n = spec.n
    joint = len(MOVES) ** 2
    goals = set(goal_states(spec))
    moves = _spider_moves(spec)
    finite = isinstance(spec.mode, FiniteHorizon)

    rows: List[int] = []
    cols: List[int] = []
    probs: List[float] = []
    for x in range(n):
        s1, s2 = divmod(x, cells)
        for local, (a1, a2) in enumerate(itertools.product(range(len(MOVES)), repeat=2)):
            r = x * joint + local
            if x in goals:
                if finite:
                    rows.append(r)
                    cols.append(x)
                    probs.append(1.0)
                else:
                    rows.extend([r] * n)
                    cols.extend(range(n))
                    probs.extend([1.0 / n] * n)
                continue
            for (y1, p1), (y2, p2) in itertools.product(moves[s1][a1], moves[s2][a2]):
                rows.append(r)
                cols.append(y1 * cells + y2)
                probs.append(p1 * p2)

    transition = sp.csr_matrix((probs, (rows, cols)), shape=(n * joint, n))
    transition.sum_duplicates()

    # Staying put only happens by bumping a wall, so costs depend on (x, y) alone.
    coo = transition.tocoo()
    x_of = coo.row // joint
    s1, s2 = np.divmod(x_of, cells)
    y1, y2 = np.divmod(coo.col, cells)
    costs = (
        spec.stage_cost
        + spec.collision_penalty * (y1 == y2)
        + spec.wall_penalty * ((y1 == s1).astype(float) + (y2 == s2).astype(float))
    )
    costs[np.isin(x_of, list(goals))] = 0.0
    cost = sp.csr_matrix((costs, (coo.row, coo.col)), shape=transition.shape)

    mode = spec.mode
    if finite:
        mode = FiniteHorizon(spec.mode.stages, np.zeros(n))
    actions = [[tuple(range(len(MOVES)))] * 2 for _ in range(n)]
    grid = GridLayout(side=h, fly_cells=spec.fly_cells, goal_states=tuple(sorted(goals)))
    mdp = CoMdp(n, 2, actions, transition, cost, mode, grid=grid)
    logger.info(
        "grid world built", h=h, states=n, flies=list(spec.fly_cells),
        slip_p=spec.slip_p, mode=mode.to_dict()["type"]
    )
    return mdp


def build_random_comdp(
    seed: int,
    n: int,
    m: int,
    actions_per_agent: int,
    branching: int,
    cost_range: Tuple[float, float] = (0.0, 1.0),
    mode: Union[str, HorizonMode] = "ih:0.9",
) -> CoMdp:
    """
    Seeded random model with state-independent action sets 0..actions_per_agent-1.

    Every kernel row has ``branching`` distinct successors with Dirichlet(1)
    probabilities and uniform costs. Finite horizons draw the terminal cost
    from cost_range as well.
    """
    if n < 1 or m < 1 or actions_per_agent < 1:
        raise GeneratorError("n, m and actions_per_agent must be >= 1")
    if not 1 <= branching <= n:
        raise GeneratorError(f"branching must lie in 1..{n}, got {branching}")
    low, high = cost_range
    if high < low:
        raise GeneratorError(f"Empty cost range {cost_range}")
    num_rows = n * actions_per_agent ** m
    if num_rows * n > MAX_KERNEL_ENTRIES:
        raise GeneratorError(
            f"Model would have {num_rows * n} kernel entries (limit {MAX_KERNEL_ENTRIES})"
        )

    rng = np.random.default_rng(seed)
    transition = np.zeros((num_rows, n))
    cost = np.zeros((num_rows, n))
    for r in range(num_rows):
        successors = rng.choice(n, size=branching, replace=False)
        transition[r, successors] = rng.dirichlet(np.ones(branching))
        cost[r, successors] = rng.uniform(low, high, size=branching)

    horizon = parse_horizon_mode(mode, n) if isinstance(mode, str) else mode
    if isinstance(horizon, FiniteHorizon):
        horizon = FiniteHorizon(horizon.stages, rng.uniform(low, high, size=n))

    actions = [[tuple(range(actions_per_agent))] * m for _ in range(n)]
    logger.debug("random model built", seed=seed, states=n, agents=m, rows=num_rows)
    return CoMdp(n, m, actions, transition, cost, horizon)
