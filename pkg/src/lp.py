"""
Dense two-phase primal simplex.

Solves ``maximize c·x subject to A x <= b`` with sign-unconstrained x, the
form every approximate policy evaluation in this package produces.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import structlog

from .models import ComdpError

logger = structlog.get_logger(__name__)

PIVOT_TOL = 1e-10
FEASIBILITY_TOL = 1e-7
PHASE_ONE_TOL = 1e-8
RATIO_TIE_TOL = 1e-12


class LpError(ComdpError):
    """Raised for malformed problems or an exhausted pivot budget."""
    pass


class LpStatus(Enum):
    """Solver outcome."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LpProblem:
    """maximize objective·x subject to A x <= b, x free."""
    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        objective = np.array(self.objective, dtype=float).ravel()
        b = np.array(self.b, dtype=float).ravel()
        A = np.array(self.A, dtype=float).reshape(len(b), len(objective))
        for name, array in (("objective", objective), ("A", A), ("b", b)):
            if not np.all(np.isfinite(array)):
                raise LpError(f"LP {name} has non-finite entries")
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    @property
    def dims(self) -> int:
        return self.A.shape[1]


@dataclass
class LpSolution:
    """Solver outcome; x and objective_value are present iff OPTIMAL."""
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    pivot_count: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "x": self.x.tolist() if self.x is not None else None,
            "objective_value": self.objective_value,
            "pivot_count": self.pivot_count,
        }


@dataclass
class LpOptions:
    """Tolerances and anti-cycling knobs."""
    pivot_tol: float = PIVOT_TOL
    feasibility_tol: float = FEASIBILITY_TOL
    phase_one_tol: float = PHASE_ONE_TOL
    bland_factor: int = 3
    pivot_cap_factor: int = 50
    dump_path: Optional[Union[str, Path]] = None


class SimplexTableau:
    """
    Dense tableau in equality form with a non-negative right-hand side.

    The last row holds reduced costs z_j - c_j and, in its last column, the
    current objective value. Bland's smallest-index rule replaces Dantzig's
    rule once the objective has stalled for bland_factor·(rows + columns)
    pivots.
    """

    def __init__(self, A: np.ndarray, rhs: np.ndarray, basis: List[int], options: LpOptions):
        rows, cols = A.shape
        self.T = np.zeros((rows + 1, cols + 1))
        self.T[:rows, :cols] = A
        self.T[:rows, cols] = rhs
        self.basis = np.array(basis, dtype=np.int64)
        self.options = options
        self.pivots = 0

    @property
    def rows(self) -> int:
        return self.T.shape[0] - 1

    @property
    def cols(self) -> int:
        return self.T.shape[1] - 1

    @property
    def value(self) -> float:
        return float(self.T[-1, -1])

    def set_objective(self, costs: np.ndarray) -> None:
        """Install maximize costs·z and price out the current basis."""
        cb = costs[self.basis]
        self.T[-1, :-1] = cb @ self.T[:-1, :-1] - costs
        self.T[-1, -1] = cb @ self.T[:-1, -1]

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.pivots += 1

    def entering(self, bland: bool) -> Optional[int]:
        reduced = self.T[-1, :-1]
        candidates = np.flatnonzero(reduced < -self.options.pivot_tol)
        if len(candidates) == 0:
            return None
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmin(reduced[candidates])])

    def leaving(self, col: int) -> Optional[int]:
        column = self.T[:-1, col]
        eligible = np.flatnonzero(column > self.options.pivot_tol)
        if len(eligible) == 0:
            return None
        ratios = self.T[eligible, -1] / column[eligible]
        ties = eligible[ratios <= ratios.min() + RATIO_TIE_TOL]
        return int(ties[np.argmin(self.basis[ties])])

    def run(self) -> LpStatus:
        """Pivot to optimality or detect an unbounded ray."""
        stall_limit = self.options.bland_factor * (self.rows + self.cols)
        pivot_cap = self.pivots + self.options.pivot_cap_factor * (self.rows + self.cols + 1)
        best = self.value
        stalled = 0
        bland = False
        while True:
            col = self.entering(bland)
            if col is None:
                return LpStatus.OPTIMAL
            row = self.leaving(col)
            if row is None:
                return LpStatus.UNBOUNDED
            self.pivot(row, col)
            if self.value > best + RATIO_TIE_TOL:
                best = self.value
                stalled = 0
            else:
                stalled += 1
                if not bland and stalled > stall_limit:
                    bland = True
                    logger.debug("switching to Bland rule", pivots=self.pivots)
            if self.pivots > pivot_cap:
                raise LpError(f"Pivot limit exceeded after {self.pivots} pivots")

    def solution(self) -> np.ndarray:
        z = np.zeros(self.cols)
        z[self.basis] = self.T[:-1, -1]
        return z

    def drop_row(self, row: int) -> None:
        self.T = np.delete(self.T, row, axis=0)
        self.basis = np.delete(self.basis, row)

    def drop_columns(self, first: int) -> None:
        """Remove columns first..cols-1 (none of them basic)."""
        self.T = np.delete(self.T, np.arange(first, self.cols), axis=1)

    def dump(self, path: Union[str, Path], title: str) -> None:
        with open(path, "a") as f:
            f.write(f"# {title}\n")
            f.write("basis: " + " ".join(str(b) for b in self.basis) + "\n")
            np.savetxt(f, self.T, fmt="%.10g")
            f.write("\n")


def solve_lp(problem: LpProblem, options: Optional[LpOptions] = None) -> LpSolution:
    """
    Solve the LP with the two-phase primal simplex method.

    Free variables are split as x = x⁺ - x⁻. Columns are ordered
    [x⁺ | x⁻ | slacks | artificials]; rows with negative b are negated and
    receive an artificial variable.
    """
    options = options or LpOptions()
    rows, d = problem.rows, problem.dims

    negative = np.flatnonzero(problem.b < 0)
    artificial_count = len(negative)
    cols = 2 * d + rows + artificial_count
    A = np.zeros((rows, cols))
    A[:, :d] = problem.A
    A[:, d:2 * d] = -problem.A
    A[:, 2 * d:2 * d + rows] = np.eye(rows)
    rhs = problem.b.copy()
    A[negative] *= -1.0
    rhs[negative] *= -1.0
    basis = list(range(2 * d, 2 * d + rows))
    for k, row in enumerate(negative):
        col = 2 * d + rows + k
        A[row, col] = 1.0
        basis[row] = col

    tableau = SimplexTableau(A, rhs, basis, options)
    first_artificial = 2 * d + rows

    if artificial_count:
        costs = np.zeros(cols)
        costs[first_artificial:] = -1.0
        tableau.set_objective(costs)
        tableau.run()
        if -tableau.value > options.phase_one_tol:
            logger.debug("lp infeasible", phase_one=-tableau.value, pivots=tableau.pivots)
            return LpSolution(LpStatus.INFEASIBLE, pivot_count=tableau.pivots)
        _drive_out_artificials(tableau, first_artificial)
        tableau.drop_columns(first_artificial)

    costs = np.zeros(tableau.cols)
    costs[:d] = problem.objective
    costs[d:2 * d] = -problem.objective
    tableau.set_objective(costs)
    status = tableau.run()

    if options.dump_path is not None:
        tableau.dump(options.dump_path, f"{status.value} rows={rows} d={d} pivots={tableau.pivots}")

    if status is LpStatus.UNBOUNDED:
        logger.debug("lp unbounded", pivots=tableau.pivots)
        return LpSolution(LpStatus.UNBOUNDED, pivot_count=tableau.pivots)

    z = tableau.solution()
    x = z[:d] - z[d:2 * d]
    residual = float(np.max(problem.A @ x - problem.b)) if rows else 0.0
    if residual > options.feasibility_tol:
        logger.warning("lp solution outside feasibility tolerance", residual=residual)
    logger.debug("lp solved", rows=rows, dims=d, pivots=tableau.pivots)
    return LpSolution(
        LpStatus.OPTIMAL,
        x=x,
        objective_value=float(problem.objective @ x),
        pivot_count=tableau.pivots,
    )


def _drive_out_artificials(tableau: SimplexTableau, first_artificial: int) -> None:
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    row = 0
    while row < tableau.rows:
        if tableau.basis[row] < first_artificial:
            row += 1
            continue
        candidates = np.flatnonzero(
            np.abs(tableau.T[row, :first_artificial]) > tableau.options.pivot_tol
        )
        if len(candidates):
            tableau.pivot(row, int(candidates[0]))
            row += 1
        else:
            tableau.drop_row(row)
