"""
Approximate policy evaluation by linear programming over a feature basis.

J ≈ Φr with r maximizing c·Φr subject to Φr ≤ T_mu Φr (infinite horizon)
or Φr ≤ T_{mu_k} J_{k+1} (one finite-horizon stage). Feasible points are
pointwise lower bounds of the policy value.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from .lp import LpOptions, LpProblem, LpStatus, solve_lp
from .mdp import CoMdp, ModelError, Values, _vector
from .models import ComdpError, InfiniteHorizon, JointPolicy, ValueFunction, ValueTag

logger = structlog.get_logger(__name__)

RANK_TOL = 1e-9


class BasisError(ComdpError):
    """Raised for an unusable basis request."""
    pass


class AlpError(ComdpError):
    """Raised when an ALP evaluation LP is not solved to optimality."""
    pass


class BasisKind(Enum):
    IDENTITY = "identity"
    AGGREGATION = "aggregation"
    GRID_DISTANCE = "grid-distance"
    POLYNOMIAL = "polynomial"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n×d basis Φ; first column is the constant column except for identity."""
    phi: np.ndarray
    basis_kind: BasisKind

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2:
            raise BasisError("Feature matrix must be two-dimensional")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def dim_reduction_factor(self) -> float:
        return self.n / self.d

    def combine(self, r: np.ndarray) -> np.ndarray:
        return self.phi @ r


@dataclass(frozen=True, eq=False)
class StateWeights:
    """Strictly positive state-relevance weights summing to one."""
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        if len(c) == 0 or np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise ValueError("State weights must be finite and strictly positive")
        if abs(c.sum() - 1.0) > 1e-9:
            raise ValueError(f"State weights must sum to 1, got {c.sum()}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def uniform(cls, n: int) -> "StateWeights":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "StateWeights":
        values = np.asarray(values, dtype=float)
        if np.any(values <= 0):
            raise ValueError("State weights must be strictly positive")
        return cls(values / values.sum())


@dataclass
class AlpResult:
    """ALP solution r and J_alp = Φr."""
    r: np.ndarray
    values: ValueFunction
    lp_status: LpStatus
    pivot_count: int
    beta: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "r": self.r.tolist(),
            "values": [float(v) for v in self.values.values],
            "lp_status": self.lp_status.value,
            "pivot_count": self.pivot_count,
            "beta": self.beta,
        }


def parse_basis_spec(spec: str) -> Tuple[BasisKind, Dict[str, Any]]:
    """Parse 'identity', 'aggregation:k', 'grid-distance', 'poly:degree' or 'random:d[:seed]'."""
    name, _, rest = spec.partition(":")
    args = [a for a in rest.split(":") if a] if rest else []
    try:
        if name == "identity" and not args:
            return BasisKind.IDENTITY, {}
        if name == "grid-distance" and not args:
            return BasisKind.GRID_DISTANCE, {}
        if name == "aggregation" and len(args) == 1:
            return BasisKind.AGGREGATION, {"cells": int(args[0])}
        if name in ("poly", "polynomial") and len(args) == 1:
            return BasisKind.POLYNOMIAL, {"degree": int(args[0])}
        if name == "random" and len(args) in (1, 2):
            return BasisKind.RANDOM, {
                "d": int(args[0]), "seed": int(args[1]) if len(args) == 2 else 0
            }
    except ValueError:
        pass
    raise BasisError(f"Unknown basis spec: {spec!r}")


def _aggregation(n: int, cells: int) -> np.ndarray:
    if not 1 <= cells <= n:
        raise BasisError(f"aggregation needs 1 <= cells <= n, got {cells}")
    cell_of = np.arange(n) * cells // n
    phi = np.zeros((n, cells))
    phi[:, 0] = 1.0
    # Indicator of cell 0 is implied by the constant column.
    for k in range(1, cells):
        phi[cell_of == k, k] = 1.0
    return phi


def _grid_distance(mdp: CoMdp) -> np.ndarray:
    grid = mdp.grid
    if grid is None:
        raise BasisError("grid-distance basis needs a grid-world model")

    def nearest_fly(cell: int) -> int:
        row, col = grid.coordinates(cell)
        return min(
            abs(row - fr) + abs(col - fc)
            for fr, fc in (grid.coordinates(f) for f in grid.fly_cells)
        )

    phi = np.zeros((mdp.n, 4))
    for x in range(mdp.n):
        s1, s2 = grid.spider_cells(x)
        phi[x] = (1.0, nearest_fly(s1), nearest_fly(s2), float(s1 == s2))
    return phi


def _state_coordinates(mdp: CoMdp) -> np.ndarray:
    """Normalized coordinates in [0, 1]: grid positions, else the state index."""
    if mdp.grid is not None:
        side = mdp.grid.side
        coords = np.zeros((mdp.n, 4))
        for x in range(mdp.n):
            s1, s2 = mdp.grid.spider_cells(x)
            coords[x] = (*mdp.grid.coordinates(s1), *mdp.grid.coordinates(s2))
        return coords / max(side - 1, 1)
    return (np.arange(mdp.n, dtype=float) / max(mdp.n - 1, 1))[:, None]


def _polynomial(mdp: CoMdp, degree: int) -> np.ndarray:
    if degree < 0:
        raise BasisError(f"polynomial degree must be >= 0, got {degree}")
    coords = _state_coordinates(mdp)
    columns = [np.ones(mdp.n)]
    for order in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(coords.shape[1]), order):
            columns.append(np.prod(coords[:, combo], axis=1))
    return np.column_stack(columns)


def _random_projection(n: int, d: int, seed: int) -> np.ndarray:
    if not 1 <= d <= n:
        raise BasisError(f"random basis needs 1 <= d <= n, got {d}")
    rng = np.random.default_rng(seed)
    phi = np.empty((n, d))
    phi[:, 0] = 1.0
    phi[:, 1:] = rng.standard_normal((n, d - 1))
    return phi


def build_features(
    kind: Union[BasisKind, str], params: Optional[Dict[str, Any]], mdp: CoMdp
) -> FeatureMatrix:
    """Construct Φ for the model and check d <= n and full column rank."""
    kind = BasisKind(kind)
    params = params or {}
    if kind is BasisKind.IDENTITY:
        phi = np.eye(mdp.n)
    elif kind is BasisKind.AGGREGATION:
        phi = _aggregation(mdp.n, int(params["cells"]))
    elif kind is BasisKind.GRID_DISTANCE:
        phi = _grid_distance(mdp)
    elif kind is BasisKind.POLYNOMIAL:
        phi = _polynomial(mdp, int(params["degree"]))
    else:
        phi = _random_projection(mdp.n, int(params["d"]), int(params.get("seed", 0)))

    n, d = phi.shape
    if d > n:
        raise BasisError(f"{kind.value} basis has d={d} columns for n={n} states")
    rank = np.linalg.matrix_rank(phi, tol=RANK_TOL)
    if rank < d:
        raise BasisError(f"{kind.value} basis is rank deficient: rank {rank} < d={d}")
    logger.debug("features built", kind=kind.value, states=n, columns=d)
    return FeatureMatrix(phi, kind)


def features_from_spec(spec: str, mdp: CoMdp) -> FeatureMatrix:
    kind, params = parse_basis_spec(spec)
    return build_features(kind, params, mdp)


def _solve(
    objective: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    phi: FeatureMatrix,
    options: Optional[LpOptions],
    context: str,
    reference: Optional[Values],
) -> AlpResult:
    solution = solve_lp(LpProblem(objective, A, b), options)
    if not solution.is_optimal:
        raise AlpError(
            f"{context}: LP is {solution.status.value} "
            f"(n={phi.n}, d={phi.d}, pivots={solution.pivot_count}); "
            "the basis must contain the constant column and have full rank"
        )
    values = ValueFunction(phi.combine(solution.x), ValueTag.ALP)
    beta = None
    if reference is not None:
        beta = float(np.max(np.abs(_vector(reference) - values.values)))
    return AlpResult(solution.x, values, solution.status, solution.pivot_count, beta)


def alp_evaluate_ih(
    mdp: CoMdp,
    mu: JointPolicy,
    phi: FeatureMatrix,
    c: StateWeights,
    options: Optional[LpOptions] = None,
    reference: Optional[Values] = None,
) -> AlpResult:
    """
    Infinite-horizon ALP evaluation of mu.

    Constraint per state x, in increasing state order:
    (Φr)(x) - α Σ_y p_xy(mu(x)) (Φr)(y) <= g_mu(x).
    """
    if not isinstance(mdp.horizon, InfiniteHorizon):
        raise ModelError("Infinite-horizon ALP needs an infinite-horizon model")
    if phi.n != mdp.n or len(c.c) != mdp.n:
        raise BasisError("Basis and weights must cover every state")
    P_mu, g_mu = mdp.policy_kernel(mu)
    A = phi.phi - mdp.horizon.discount * (P_mu @ phi.phi)
    result = _solve(phi.phi.T @ c.c, A, g_mu, phi, options, "infinite-horizon ALP", reference)
    logger.debug("alp evaluated", pivots=result.pivot_count, d=phi.d)
    return result


def alp_evaluate_fh_stage(
    mdp: CoMdp,
    k: int,
    mu_k: JointPolicy,
    J_next: Values,
    phi: FeatureMatrix,
    c: StateWeights,
    options: Optional[LpOptions] = None,
    reference: Optional[Values] = None,
) -> AlpResult:
    """
    One finite-horizon stage: maximize c·Φr subject to
    (Φr)(x) <= Σ_y p_xy(mu_k(x))[g_xy(mu_k(x)) + J_next(y)].
    """
    if not mdp.is_finite:
        raise ModelError("Finite-horizon ALP needs a finite-horizon model")
    if phi.n != mdp.n or len(c.c) != mdp.n:
        raise BasisError("Basis and weights must cover every state")
    bound = mdp.stage_values(mdp.policy_rows(mu_k), J_next, 1.0)
    result = _solve(phi.phi.T @ c.c, phi.phi, bound, phi, options, f"stage {k} ALP", reference)
    logger.debug("alp stage evaluated", stage=k, pivots=result.pivot_count, d=phi.d)
    return result


def approximation_error(exact: Values, approximate: Values) -> float:
    """beta = max_x |J(x) - J_alp(x)|."""
    return float(np.max(np.abs(_vector(exact) - _vector(approximate))))
