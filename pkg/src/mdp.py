"""
Cooperative multi-agent MDP data model.

Holds the joint transition and cost kernels over Cartesian-product action
spaces, validates them, and evaluates one-step expectations.
"""

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog

from .models import (
    ComdpError, FiniteHorizon, HorizonMode, InfiniteHorizon, JointAction,
    JointPolicy, NonstationaryPolicy, ValueFunction, horizon_from_dict
)

logger = structlog.get_logger(__name__)

SPARSE_DENSITY_THRESHOLD = 0.10
PROBABILITY_TOL = 1e-12

Kernel = Union[np.ndarray, sp.csr_matrix]
Values = Union[ValueFunction, np.ndarray, Sequence[float]]


class ModelError(ComdpError):
    """Raised when a model is structurally malformed."""
    pass


@dataclass
class OperationCounter:
    """Counts one-step expectations Σ_y p_xy(u)[g_xy(u) + discount·J(y)]."""
    expectations: int = 0

    def add(self, count: int) -> None:
        self.expectations += int(count)

    def reset(self) -> None:
        self.expectations = 0


@dataclass(frozen=True)
class GridLayout:
    """Labeling of a two-spider grid world: x = cell1 * side² + cell2."""
    side: int
    fly_cells: Tuple[int, int]
    goal_states: Tuple[int, ...]

    @property
    def cells(self) -> int:
        return self.side * self.side

    def spider_cells(self, x: int) -> Tuple[int, int]:
        return divmod(x, self.cells)

    def coordinates(self, cell: int) -> Tuple[int, int]:
        return divmod(cell, self.side)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "h": self.side,
            "flies": list(self.fly_cells),
            "goal_states": list(self.goal_states),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridLayout":
        return cls(
            side=int(data["h"]),
            fly_cells=tuple(int(c) for c in data["flies"]),
            goal_states=tuple(int(g) for g in data.get("goal_states", [])),
        )


def as_kernel(matrix: Union[np.ndarray, sp.spmatrix]) -> Kernel:
    """Pick dense or CSR storage by overall density."""
    if sp.issparse(matrix):
        matrix = sp.csr_matrix(matrix)
        matrix.sum_duplicates()
        total = matrix.shape[0] * matrix.shape[1]
        if total and matrix.nnz / total > SPARSE_DENSITY_THRESHOLD:
            return np.asarray(matrix.toarray(), dtype=float)
        return matrix
    dense = np.asarray(matrix, dtype=float)
    if dense.size and np.count_nonzero(dense) / dense.size <= SPARSE_DENSITY_THRESHOLD:
        return sp.csr_matrix(dense)
    return dense


def _dense_rows(kernel: Kernel, rows: Optional[np.ndarray] = None) -> np.ndarray:
    block = kernel if rows is None else kernel[rows]
    if sp.issparse(block):
        return block.toarray()
    return np.asarray(block)


def _vector(J: Values) -> np.ndarray:
    if isinstance(J, ValueFunction):
        return J.values
    return np.asarray(J, dtype=float)


class CoMdp:
    """
    Cooperative multi-agent MDP with Cartesian-product action spaces.

    Kernel rows are indexed by (x, joint action) in state order and, within
    a state, in lexicographic order of the joint action components. The
    model is immutable after construction.
    """

    def __init__(
        self,
        n: int,
        m: int,
        agent_actions: Sequence[Sequence[Sequence[int]]],
        transition: Union[np.ndarray, sp.spmatrix],
        cost: Union[np.ndarray, sp.spmatrix],
        horizon: HorizonMode,
        grid: Optional[GridLayout] = None,
    ):
        if n < 1 or m < 1:
            raise ModelError(f"Model needs n >= 1 and m >= 1, got n={n}, m={m}")
        if len(agent_actions) != n:
            raise ModelError(f"agent_actions has {len(agent_actions)} states, expected {n}")

        actions: List[Tuple[Tuple[int, ...], ...]] = []
        for x, per_agent in enumerate(agent_actions):
            if len(per_agent) != m:
                raise ModelError(f"State {x} lists {len(per_agent)} agents, expected {m}")
            state_sets = []
            for i, action_set in enumerate(per_agent):
                ids = tuple(int(a) for a in action_set)
                if any(b <= a for a, b in zip(ids, ids[1:])):
                    raise ModelError(
                        f"Actions of agent {i} at state {x} must be strictly increasing: {ids}"
                    )
                state_sets.append(ids)
            actions.append(tuple(state_sets))

        self.n = n
        self.m = m
        self.agent_actions: Tuple[Tuple[Tuple[int, ...], ...], ...] = tuple(actions)
        self.horizon = horizon
        self.grid = grid

        self.action_counts = np.array(
            [[len(s) for s in state_sets] for state_sets in actions], dtype=np.int64
        )
        joint_counts = np.prod(self.action_counts, axis=1)
        self.row_offsets = np.concatenate([[0], np.cumsum(joint_counts)]).astype(np.int64)
        strides = np.ones((n, m), dtype=np.int64)
        for i in range(m - 2, -1, -1):
            strides[:, i] = strides[:, i + 1] * self.action_counts[:, i + 1]
        self.strides = strides

        # Action ids equal their positions everywhere: skip dictionary lookups.
        self._ids_are_positions = all(
            ids == tuple(range(len(ids))) for state_sets in actions for ids in state_sets
        )
        self._positions = None if self._ids_are_positions else [
            [{a: k for k, a in enumerate(ids)} for ids in state_sets]
            for state_sets in actions
        ]

        self.transition = as_kernel(transition)
        self.cost = as_kernel(cost)
        expected_shape = (self.num_rows, n)
        if self.transition.shape != expected_shape or self.cost.shape != expected_shape:
            raise ModelError(
                f"Kernels must have shape {expected_shape}, got "
                f"{self.transition.shape} and {self.cost.shape}"
            )

        if sp.issparse(self.transition) or sp.issparse(self.cost):
            product = sp.csr_matrix(self.transition).multiply(sp.csr_matrix(self.cost))
            expected = np.asarray(product.sum(axis=1)).ravel()
        else:
            expected = (self.transition * self.cost).sum(axis=1)
        self.expected_costs = np.asarray(expected, dtype=float)

        for array in (self.row_offsets, self.strides, self.action_counts, self.expected_costs):
            array.setflags(write=False)
        if isinstance(self.transition, np.ndarray):
            self.transition.setflags(write=False)
        if isinstance(self.cost, np.ndarray):
            self.cost.setflags(write=False)

        logger.debug(
            "model constructed",
            states=n, agents=m, rows=self.num_rows, sparse=self.is_sparse
        )

    # Structure

    @property
    def num_rows(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.transition)

    @property
    def is_finite(self) -> bool:
        return isinstance(self.horizon, FiniteHorizon)

    @property
    def discount(self) -> float:
        """Discount of one backup: alpha for infinite horizon, 1 otherwise."""
        if isinstance(self.horizon, InfiniteHorizon):
            return self.horizon.discount
        return 1.0

    def joint_action_count(self, x: int) -> int:
        return int(self.row_offsets[x + 1] - self.row_offsets[x])

    def joint_actions(self, x: int) -> List[JointAction]:
        return [JointAction(tuple(u)) for u in itertools.product(*self.agent_actions[x])]

    def position(self, x: int, agent: int, action: int) -> int:
        if self._ids_are_positions:
            if not 0 <= action < self.action_counts[x, agent]:
                raise ModelError(f"Action {action} not available to agent {agent} at state {x}")
            return int(action)
        try:
            return self._positions[x][agent][int(action)]
        except KeyError:
            raise ModelError(f"Action {action} not available to agent {agent} at state {x}")

    def row_index(self, x: int, u: Union[JointAction, Sequence[int]]) -> int:
        components = tuple(u)
        if len(components) != self.m:
            raise ModelError(f"Joint action {components} has wrong length for m={self.m}")
        offset = 0
        for i, action in enumerate(components):
            offset += self.position(x, i, action) * int(self.strides[x, i])
        return int(self.row_offsets[x]) + offset

    def joint_action_at(self, x: int, local_index: int) -> JointAction:
        """Decode a within-state joint index back into action ids."""
        components = []
        for i in range(self.m):
            k = (local_index // int(self.strides[x, i])) % int(self.action_counts[x, i])
            components.append(self.agent_actions[x][i][k])
        return JointAction(tuple(components))

    def positions(self, policy: JointPolicy) -> np.ndarray:
        """(m, n) array of action positions within each U^i(x)."""
        if policy.actions.shape != (self.m, self.n):
            raise ModelError(
                f"Policy shape {policy.actions.shape} does not match (m, n)=({self.m}, {self.n})"
            )
        if self._ids_are_positions:
            bad = (policy.actions < 0) | (policy.actions >= self.action_counts.T)
            if bad.any():
                i, x = np.argwhere(bad)[0]
                raise ModelError(
                    f"Action {policy.actions[i, x]} not available to agent {i} at state {x}"
                )
            return policy.actions
        positions = np.empty((self.m, self.n), dtype=np.int64)
        for x in range(self.n):
            for i in range(self.m):
                positions[i, x] = self.position(x, i, policy.actions[i, x])
        return positions

    def policy_rows(self, policy: JointPolicy) -> np.ndarray:
        """Kernel row of mu(x) for every state x."""
        positions = self.positions(policy)
        local = np.sum(positions.T * self.strides, axis=1)
        return self.row_offsets[:-1] + local

    def decode_rows(self, local_indices: np.ndarray) -> JointPolicy:
        """Joint policy choosing local joint index local_indices[x] at each x."""
        local_indices = np.asarray(local_indices, dtype=np.int64)
        positions = (local_indices[:, None] // self.strides) % self.action_counts
        if self._ids_are_positions:
            return JointPolicy(positions.T)
        actions = np.empty((self.m, self.n), dtype=np.int64)
        for x in range(self.n):
            for i in range(self.m):
                actions[i, x] = self.agent_actions[x][i][positions[x, i]]
        return JointPolicy(actions)

    # Kernels

    def stage_values(
        self,
        rows: Optional[np.ndarray],
        J: Values,
        discount: float,
        counter: Optional[OperationCounter] = None,
    ) -> np.ndarray:
        """Σ_y p_xy(u)[g_xy(u) + discount·J(y)] for the given kernel rows (all if None)."""
        values = _vector(J)
        if rows is None:
            result = self.expected_costs + discount * (self.transition @ values)
        else:
            rows = np.asarray(rows, dtype=np.int64)
            result = self.expected_costs[rows] + discount * (self.transition[rows] @ values)
        if counter is not None:
            counter.add(len(result))
        return np.asarray(result, dtype=float).ravel()

    def policy_kernel(self, policy: JointPolicy) -> Tuple[np.ndarray, np.ndarray]:
        """Dense P_mu (n×n) and expected stage cost g_mu (n)."""
        rows = self.policy_rows(policy)
        return _dense_rows(self.transition, rows), self.expected_costs[rows].copy()

    def transition_row(self, x: int, u: Union[JointAction, Sequence[int]]) -> np.ndarray:
        return _dense_rows(self.transition, np.array([self.row_index(x, u)]))[0]

    def cost_row(self, x: int, u: Union[JointAction, Sequence[int]]) -> np.ndarray:
        return _dense_rows(self.cost, np.array([self.row_index(x, u)]))[0]

    def dense_transition(self) -> np.ndarray:
        return _dense_rows(self.transition)

    def dense_cost(self) -> np.ndarray:
        return _dense_rows(self.cost)

    # Serialization

    def to_dict(self) -> Dict[str, Any]:
        """JSON model format: n, m, agent_actions, transitions, horizon (+ optional grid)."""
        P = sp.csr_matrix(self.transition)
        G = sp.csr_matrix(self.cost)
        transitions = []
        for x in range(self.n):
            for k in range(self.joint_action_count(x)):
                r = int(self.row_offsets[x]) + k
                p_row = dict(zip(P.indices[P.indptr[r]:P.indptr[r + 1]].tolist(),
                                 P.data[P.indptr[r]:P.indptr[r + 1]].tolist()))
                g_row = dict(zip(G.indices[G.indptr[r]:G.indptr[r + 1]].tolist(),
                                 G.data[G.indptr[r]:G.indptr[r + 1]].tolist()))
                transitions.append({
                    "x": x,
                    "u": list(self.joint_action_at(x, k)),
                    "rows": [
                        {"y": y, "p": float(p_row.get(y, 0.0)), "g": float(g_row.get(y, 0.0))}
                        for y in sorted(set(p_row) | set(g_row))
                    ],
                })
        data = {
            "n": self.n,
            "m": self.m,
            "agent_actions": [[list(ids) for ids in state_sets] for state_sets in self.agent_actions],
            "transitions": transitions,
            "horizon": self.horizon.to_dict(),
        }
        if self.grid is not None:
            data["grid"] = self.grid.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CoMdp":
        try:
            n = int(data["n"])
            m = int(data["m"])
            agent_actions = data["agent_actions"]
            horizon = horizon_from_dict(data["horizon"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelError(f"Malformed model file: {e}")

        total_rows = sum(
            int(np.prod([len(ids) for ids in state_sets])) for state_sets in agent_actions
        )
        rows, cols, probs, costs = [], [], [], []
        # Row layout only; kernels are filled below.
        skeleton = cls(
            n, m, agent_actions,
            sp.csr_matrix((total_rows, n)), sp.csr_matrix((total_rows, n)),
            horizon,
        )
        for entry in data.get("transitions", []):
            r = skeleton.row_index(int(entry["x"]), entry["u"])
            for item in entry["rows"]:
                rows.append(r)
                cols.append(int(item["y"]))
                probs.append(float(item["p"]))
                costs.append(float(item["g"]))
        shape = (skeleton.num_rows, n)
        transition = sp.csr_matrix((probs, (rows, cols)), shape=shape)
        cost = sp.csr_matrix((costs, (rows, cols)), shape=shape)
        grid = GridLayout.from_dict(data["grid"]) if data.get("grid") else None
        return cls(n, m, agent_actions, transition, cost, horizon, grid)


def joint_actions(mdp: CoMdp, x: int) -> List[JointAction]:
    """Full Cartesian product U^1(x)×…×U^m(x) in lexicographic order."""
    return mdp.joint_actions(x)


def expected_stage_value(
    mdp: CoMdp, x: int, u: Union[JointAction, Sequence[int]], J: Values, discount: float
) -> float:
    """Σ_y p_xy(u)[g_xy(u) + discount·J(y)]."""
    row = mdp.row_index(x, u)
    return float(mdp.stage_values(np.array([row]), J, discount)[0])


def validate(mdp: CoMdp) -> List[str]:
    """Report every violated model invariant; empty iff the model is valid."""
    violations: List[str] = []

    for x in range(mdp.n):
        for i in range(mdp.m):
            if mdp.action_counts[x, i] == 0:
                violations.append(f"agent {i} has no actions at state {x}")

    row_sums = np.asarray(mdp.transition.sum(axis=1)).ravel()
    if sp.issparse(mdp.transition):
        P = mdp.transition.tocoo()
        negative = [(int(r), int(y), float(p)) for r, y, p in zip(P.row, P.col, P.data) if p < 0]
    else:
        negative = [(int(r), int(y), float(mdp.transition[r, y]))
                    for r, y in zip(*np.nonzero(mdp.transition < 0))]

    row_state = np.searchsorted(mdp.row_offsets, np.arange(mdp.num_rows), side="right") - 1
    for r, total in enumerate(row_sums):
        if abs(total - 1.0) > PROBABILITY_TOL:
            x = int(row_state[r])
            u = tuple(mdp.joint_action_at(x, r - int(mdp.row_offsets[x])))
            violations.append(f"row (x={x}, u={u}) sums to {total:.12g}")
    for r, y, p in negative:
        x = int(row_state[r])
        u = tuple(mdp.joint_action_at(x, r - int(mdp.row_offsets[x])))
        violations.append(f"row (x={x}, u={u}) has negative probability {p:.12g} at y={y}")

    if isinstance(mdp.horizon, InfiniteHorizon):
        if not 0.0 < mdp.horizon.discount < 1.0:
            violations.append(f"discount alpha={mdp.horizon.discount} outside (0, 1)")
    else:
        if mdp.horizon.stages < 1:
            violations.append(f"horizon N={mdp.horizon.stages} must be >= 1")
        if len(mdp.horizon.terminal_cost) != mdp.n:
            violations.append(
                f"terminal cost has length {len(mdp.horizon.terminal_cost)}, expected {mdp.n}"
            )
        elif not np.all(np.isfinite(mdp.horizon.terminal_cost)):
            violations.append("terminal cost has non-finite entries")

    if violations:
        logger.warning("model validation failed", violations=len(violations))
    else:
        logger.debug("model validated", states=mdp.n, rows=mdp.num_rows)
    return violations


def first_action_policy(mdp: CoMdp) -> JointPolicy:
    """Every agent takes its smallest action id in every state."""
    actions = np.array(
        [[mdp.agent_actions[x][i][0] for x in range(mdp.n)] for i in range(mdp.m)],
        dtype=np.int64,
    )
    return JointPolicy(actions)


def random_policy(mdp: CoMdp, rng: np.random.Generator) -> JointPolicy:
    actions = np.empty((mdp.m, mdp.n), dtype=np.int64)
    for x in range(mdp.n):
        for i in range(mdp.m):
            ids = mdp.agent_actions[x][i]
            actions[i, x] = ids[int(rng.integers(len(ids)))]
    return JointPolicy(actions)


def random_nonstationary_policy(mdp: CoMdp, rng: np.random.Generator) -> NonstationaryPolicy:
    if not isinstance(mdp.horizon, FiniteHorizon):
        raise ModelError("Nonstationary policies need a finite-horizon model")
    return NonstationaryPolicy(tuple(random_policy(mdp, rng) for _ in range(mdp.horizon.stages)))


def save_model(mdp: CoMdp, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(mdp.to_dict(), f)
    logger.info("model written", path=str(path), states=mdp.n, agents=mdp.m)


def load_model(path: Union[str, Path]) -> CoMdp:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"Cannot read model file {path}: {e}")
    return CoMdp.from_dict(data)
