"""
Exact full-state dynamic programming over joint actions.

Bellman, greedy and policy operators, exact policy evaluation, value
iteration, joint policy iteration and finite-horizon backward induction.
All argmins break ties towards the lexicographically smallest joint action.
"""

from typing import List, Optional, Tuple

import numpy as np
import structlog

from .mdp import CoMdp, ModelError, OperationCounter, Values, _vector
from .models import (
    FiniteHorizon, InfiniteHorizon, JointPolicy, NonstationaryPolicy, ValueFunction, ValueTag
)

logger = structlog.get_logger(__name__)

RESIDUAL_TOL = 1e-9
# Relative margin a joint action needs to replace the current one in policy iteration.
IMPROVEMENT_TOL = 1e-12


def _require_infinite(mdp: CoMdp) -> float:
    if not isinstance(mdp.horizon, InfiniteHorizon):
        raise ModelError("Operation needs an infinite-horizon model")
    return mdp.horizon.discount


def _require_finite(mdp: CoMdp) -> FiniteHorizon:
    if not isinstance(mdp.horizon, FiniteHorizon):
        raise ModelError("Operation needs a finite-horizon model")
    return mdp.horizon


def _segment_argmin(mdp: CoMdp, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-state minimum of joint-action values and its first (smallest) local index."""
    counts = np.diff(mdp.row_offsets)
    if np.all(counts == counts[0]):
        block = q.reshape(mdp.n, int(counts[0]))
        local = np.argmin(block, axis=1)
        return block[np.arange(mdp.n), local], local
    minima = np.empty(mdp.n)
    local = np.empty(mdp.n, dtype=np.int64)
    for x in range(mdp.n):
        segment = q[mdp.row_offsets[x]:mdp.row_offsets[x + 1]]
        local[x] = int(np.argmin(segment))
        minima[x] = segment[local[x]]
    return minima, local


def _joint_minimum(
    mdp: CoMdp, J: Values, discount: float, counter: Optional[OperationCounter]
) -> Tuple[np.ndarray, JointPolicy]:
    q = mdp.stage_values(None, J, discount, counter)
    minima, local = _segment_argmin(mdp, q)
    return minima, mdp.decode_rows(local)


def bellman_backup(
    mdp: CoMdp, J: Values, counter: Optional[OperationCounter] = None
) -> ValueFunction:
    """(TJ)(x) = min over joint u of Σ_y p_xy(u)[g_xy(u) + αJ(y)]."""
    alpha = _require_infinite(mdp)
    minima, _ = _joint_minimum(mdp, J, alpha, counter)
    return ValueFunction(minima)


def greedy_joint_policy(
    mdp: CoMdp, J: Values, counter: Optional[OperationCounter] = None
) -> JointPolicy:
    """Lexicographically smallest joint action attaining (TJ)(x) at every x."""
    alpha = _require_infinite(mdp)
    _, policy = _joint_minimum(mdp, J, alpha, counter)
    return policy


def apply_policy_operator(mdp: CoMdp, mu: JointPolicy, J: Values) -> ValueFunction:
    """(T_mu J)(x) = Σ_y p_xy(mu(x))[g_xy(mu(x)) + αJ(y)]."""
    alpha = _require_infinite(mdp)
    return ValueFunction(mdp.stage_values(mdp.policy_rows(mu), J, alpha))


def evaluate_policy_exact_ih(mdp: CoMdp, mu: JointPolicy) -> ValueFunction:
    """Solve (I - αP_mu) J = g_mu directly."""
    alpha = _require_infinite(mdp)
    P_mu, g_mu = mdp.policy_kernel(mu)
    try:
        values = np.linalg.solve(np.eye(mdp.n) - alpha * P_mu, g_mu)
    except np.linalg.LinAlgError as e:
        raise ModelError(f"Policy evaluation system is singular: {e}")
    residual = float(np.max(np.abs(g_mu + alpha * (P_mu @ values) - values)))
    if residual > RESIDUAL_TOL:
        logger.warning("policy evaluation residual above tolerance", residual=residual)
    return ValueFunction(values, ValueTag.EXACT)


def value_iteration(
    mdp: CoMdp,
    tol: float,
    max_iters: int = 100000,
    counter: Optional[OperationCounter] = None,
) -> Tuple[ValueFunction, JointPolicy, int]:
    """
    Iterate J ← TJ from J = 0 until ‖TJ - J‖∞ <= tol.

    Returns the last backup, its greedy policy and the number of sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    alpha = _require_infinite(mdp)
    J = np.zeros(mdp.n)
    for iteration in range(1, max_iters + 1):
        TJ, _ = _joint_minimum(mdp, J, alpha, counter)
        residual = float(np.max(np.abs(TJ - J)))
        J = TJ
        if residual <= tol:
            break
    else:
        logger.warning("value iteration hit the sweep cap", sweeps=max_iters, residual=residual)
    policy = greedy_joint_policy(mdp, J, counter)
    logger.info("value iteration converged", sweeps=iteration, residual=residual)
    return ValueFunction(J), policy, iteration


def improve_joint_policy(
    mdp: CoMdp, mu: JointPolicy, J: Values, counter: Optional[OperationCounter] = None
) -> JointPolicy:
    """
    Greedy joint policy that keeps mu(x) unless some joint action beats it
    by more than IMPROVEMENT_TOL·(1 + |min|); replacements are lexicographically smallest.
    """
    alpha = _require_infinite(mdp)
    q = mdp.stage_values(None, J, alpha, counter)
    minima, local = _segment_argmin(mdp, q)
    rows = mdp.policy_rows(mu)
    keep = q[rows] <= minima + IMPROVEMENT_TOL * (1.0 + np.abs(minima))
    local = np.where(keep, rows - mdp.row_offsets[:-1], local)
    return mdp.decode_rows(local)


def policy_iteration_joint(
    mdp: CoMdp,
    mu0: JointPolicy,
    max_iters: int = 1000,
    counter: Optional[OperationCounter] = None,
) -> Tuple[JointPolicy, int]:
    """
    Alternate exact evaluation and joint greedy improvement until the policy repeats.

    Near-ties keep the current action, so round-off cannot flip between
    equally good joint actions.

    Returns the final policy and the number of improvement sweeps.
    """
    _require_infinite(mdp)
    mu = mu0
    for iteration in range(1, max_iters + 1):
        J = evaluate_policy_exact_ih(mdp, mu)
        improved = improve_joint_policy(mdp, mu, J, counter)
        if improved == mu:
            logger.info("joint policy iteration converged", sweeps=iteration)
            return mu, iteration
        mu = improved
    logger.warning("joint policy iteration hit the sweep cap", sweeps=max_iters)
    return mu, max_iters


def finite_horizon_dp(
    mdp: CoMdp, counter: Optional[OperationCounter] = None
) -> Tuple[NonstationaryPolicy, List[ValueFunction]]:
    """Backward induction with joint minimization; returns (policy, [J_0, ..., J_N])."""
    horizon = _require_finite(mdp)
    N = horizon.stages
    values: List[np.ndarray] = [np.zeros(mdp.n)] * (N + 1)
    values[N] = np.asarray(horizon.terminal_cost, dtype=float)
    stages: List[JointPolicy] = [None] * N
    for k in range(N - 1, -1, -1):
        values[k], stages[k] = _joint_minimum(mdp, values[k + 1], 1.0, counter)
    logger.info("finite-horizon dynamic programming done", stages=N)
    return NonstationaryPolicy(tuple(stages)), [ValueFunction(v) for v in values]


def evaluate_policy_exact_fh(mdp: CoMdp, pi: NonstationaryPolicy) -> List[ValueFunction]:
    """Exact stage values [J_{0,π}, ..., J_{N,π}] of a nonstationary policy."""
    horizon = _require_finite(mdp)
    N = horizon.stages
    if pi.horizon != N:
        raise ModelError(f"Policy has {pi.horizon} stages, model horizon is {N}")
    values: List[np.ndarray] = [np.zeros(mdp.n)] * (N + 1)
    values[N] = np.asarray(horizon.terminal_cost, dtype=float)
    for k in range(N - 1, -1, -1):
        values[k] = mdp.stage_values(mdp.policy_rows(pi[k]), values[k + 1], 1.0)
    return [ValueFunction(v) for v in values]


def stage_backup(mdp: CoMdp, mu: JointPolicy, J_next: Values) -> np.ndarray:
    """Undiscounted one-stage backup T_mu J_next used by finite-horizon checks."""
    return mdp.stage_values(mdp.policy_rows(mu), _vector(J_next), 1.0)
