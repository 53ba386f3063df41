"""
Data models for the cooperative multi-agent MDP toolkit.

Provides type-safe data structures for horizons, value functions, policies,
solver traces and bound reports.
"""

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np


class ComdpError(Exception):
    """Base class for all toolkit errors."""
    pass


class ValueTag(Enum):
    """Origin of a value function."""
    EXACT = "exact"
    ALP = "alp"


@dataclass(frozen=True)
class FiniteHorizon:
    """N-stage undiscounted problem with terminal cost g_N."""
    stages: int
    terminal_cost: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "finite",
            "N": int(self.stages),
            "terminal": [float(v) for v in self.terminal_cost],
        }


@dataclass(frozen=True)
class InfiniteHorizon:
    """Discounted problem with discount factor alpha."""
    discount: float

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "infinite", "alpha": float(self.discount)}


HorizonMode = Union[FiniteHorizon, InfiniteHorizon]


def horizon_from_dict(data: Dict[str, Any]) -> HorizonMode:
    """Create a horizon from its JSON form."""
    kind = data.get("type")
    if kind == "finite":
        return FiniteHorizon(
            stages=int(data["N"]),
            terminal_cost=np.asarray(data.get("terminal", []), dtype=float),
        )
    if kind == "infinite":
        return InfiniteHorizon(discount=float(data["alpha"]))
    raise ValueError(f"Unknown horizon type: {kind!r}")


@dataclass(frozen=True)
class JointAction:
    """Ordered tuple (u^1, ..., u^m) of per-agent action ids."""
    components: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, agent: int) -> int:
        return self.components[agent]


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Real vector over states, exact or ALP-approximate."""
    values: np.ndarray
    tag: ValueTag = ValueTag.EXACT

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("Value function must be a vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("Value function entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, n: int, tag: ValueTag = ValueTag.EXACT) -> "ValueFunction":
        return cls(np.zeros(n), tag)

    @property
    def n(self) -> int:
        return len(self.values)

    def max_gap(self, other: "ValueFunction") -> float:
        """Max-norm distance to another value function."""
        return float(np.max(np.abs(self.values - other.values))) if self.n else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"tag": self.tag.value, "values": [float(v) for v in self.values]}


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """
    Deterministic stationary joint policy.

    ``actions[i, x]`` is the action id chosen by agent i in state x.
    """
    actions: np.ndarray

    def __post_init__(self):
        actions = np.array(self.actions, dtype=np.int64)
        if actions.ndim != 2:
            raise ValueError("Joint policy must be an (m, n) array")
        actions.setflags(write=False)
        object.__setattr__(self, "actions", actions)

    @property
    def m(self) -> int:
        return self.actions.shape[0]

    @property
    def n(self) -> int:
        return self.actions.shape[1]

    def component(self, agent: int) -> np.ndarray:
        return self.actions[agent]

    def joint_action(self, x: int) -> JointAction:
        return JointAction(tuple(int(a) for a in self.actions[:, x]))

    def changed_states(self, other: "JointPolicy", agent: int) -> int:
        """Number of states where agent's component differs from other."""
        return int(np.count_nonzero(self.actions[agent] != other.actions[agent]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointPolicy):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)

    def __hash__(self) -> int:
        return hash(self.actions.tobytes())

    def to_dict(self) -> Dict[str, Any]:
        return {"actions": self.actions.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JointPolicy":
        return cls(np.array(data["actions"], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class NonstationaryPolicy:
    """Per-stage joint policies (mu_0, ..., mu_{N-1})."""
    stages: Tuple[JointPolicy, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def horizon(self) -> int:
        return len(self.stages)

    def __getitem__(self, k: int) -> JointPolicy:
        return self.stages[k]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NonstationaryPolicy):
            return NotImplemented
        return self.horizon == other.horizon and all(
            a == b for a, b in zip(self.stages, other.stages)
        )

    def __hash__(self) -> int:
        return hash(tuple(hash(s) for s in self.stages))

    def to_dict(self) -> Dict[str, Any]:
        return {"stages": [stage.to_dict() for stage in self.stages]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NonstationaryPolicy":
        return cls(tuple(JointPolicy.from_dict(s) for s in data["stages"]))


@dataclass
class IterationRecord:
    """One improvement iteration of a DPI solver."""
    iteration: int
    policy: JointPolicy
    next_policy: JointPolicy
    alp_values: ValueFunction
    changed_states: List[int]
    wall_ms: float
    lp_pivots: int
    stage: Optional[int] = None
    exact_values: Optional[ValueFunction] = None
    beta: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "stage": self.stage,
            "policy": self.policy.actions.tolist(),
            "next_policy": self.next_policy.actions.tolist(),
            "alp_values": [float(v) for v in self.alp_values.values],
            "exact_values": (
                [float(v) for v in self.exact_values.values]
                if self.exact_values is not None else None
            ),
            "beta": self.beta,
            "changed_states": self.changed_states,
            "wall_ms": self.wall_ms,
            "lp_pivots": self.lp_pivots,
        }


@dataclass
class DpiTrace:
    """Per-iteration history of a DPI solver run."""
    records: List[IterationRecord] = field(default_factory=list)
    sweeps: int = 0
    evaluations: int = 0
    lp_pivots: int = 0
    converged: bool = False
    stop_reason: str = ""
    stage_iterations: List[int] = field(default_factory=list)
    stage_values: List[ValueFunction] = field(default_factory=list)
    base_stage_values: List[ValueFunction] = field(default_factory=list)
    last_policy: Optional[Union[JointPolicy, NonstationaryPolicy]] = None

    def add(self, record: IterationRecord) -> None:
        self.records.append(record)
        self.lp_pivots += record.lp_pivots

    @property
    def betas(self) -> List[Optional[float]]:
        return [record.beta for record in self.records]

    def to_jsonl(self) -> List[Dict[str, Any]]:
        return [record.to_dict() for record in self.records]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": len(self.records),
            "sweeps": self.sweeps,
            "evaluations": self.evaluations,
            "lp_pivots": self.lp_pivots,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "stage_iterations": self.stage_iterations,
        }


@dataclass
class BoundReport:
    """Outcome of an improvement-bound check."""
    theorem: str
    holds: bool
    premise_holds: bool
    worst_slack: float
    beta: float
    violations: List[Dict[str, Any]] = field(default_factory=list)
    message: str = ""
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def raise_if_violated(self) -> None:
        if not self.holds:
            from .verification import BoundViolation
            raise BoundViolation(self.message, self)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem": self.theorem,
            "holds": self.holds,
            "premise_holds": self.premise_holds,
            "worst_slack": self.worst_slack,
            "beta": self.beta,
            "violations": self.violations,
            "message": self.message,
            "timestamp": self.timestamp.isoformat(),
        }
