"""
Decentralized policy improvement with ALP evaluation.

Agents improve their policy components one at a time: agent i minimizes
over its own actions with agents before it already updated and agents
after it held at the base policy. A sweep therefore evaluates Σ_i |U^i(x)|
one-step expectations per state instead of Π_i |U^i(x)|.
"""

import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .alp import AlpResult, FeatureMatrix, StateWeights, alp_evaluate_fh_stage, alp_evaluate_ih
from .exact_dp import evaluate_policy_exact_ih
from .lp import LpOptions
from .mdp import CoMdp, ModelError, OperationCounter, Values, _vector
from .models import (
    DpiTrace, FiniteHorizon, InfiniteHorizon, IterationRecord, JointPolicy,
    NonstationaryPolicy, ValueFunction
)

logger = structlog.get_logger(__name__)


def _improve_component(
    mdp: CoMdp,
    agent: int,
    actions: np.ndarray,
    J: np.ndarray,
    discount: float,
    counter: Optional[OperationCounter],
) -> np.ndarray:
    """Best action of one agent at every state with the other components fixed."""
    positions = mdp.positions(JointPolicy(actions))
    strides = mdp.strides[:, agent]
    counts = mdp.action_counts[:, agent]
    # Row of each state's joint action with the agent's position zeroed.
    anchors = (
        mdp.row_offsets[:-1]
        + np.sum(positions.T * mdp.strides, axis=1)
        - positions[agent] * strides
    )
    if np.all(counts == counts[0]):
        rows = (anchors[:, None] + np.arange(counts[0])[None, :] * strides[:, None]).ravel()
        q = mdp.stage_values(rows, J, discount, counter)
        best = np.argmin(q.reshape(mdp.n, int(counts[0])), axis=1)
        if mdp._ids_are_positions:
            return best.astype(np.int64)
        return np.array(
            [mdp.agent_actions[x][agent][best[x]] for x in range(mdp.n)], dtype=np.int64
        )

    rows = np.concatenate([
        anchors[x] + np.arange(counts[x]) * strides[x] for x in range(mdp.n)
    ])
    q = mdp.stage_values(rows, J, discount, counter)
    component = np.empty(mdp.n, dtype=np.int64)
    start = 0
    for x in range(mdp.n):
        stop = start + int(counts[x])
        component[x] = mdp.agent_actions[x][agent][int(np.argmin(q[start:stop]))]
        start = stop
    return component


def dpi_agent_step(
    mdp: CoMdp,
    agent: int,
    updated_prefix: Sequence[Sequence[int]],
    base_suffix: Sequence[Sequence[int]],
    J: Values,
    discount: float,
    counter: Optional[OperationCounter] = None,
) -> np.ndarray:
    """
    Improved component of one agent.

    updated_prefix holds the already improved components of agents
    0..agent-1 and base_suffix the base components of agents agent+1..m-1.
    Ties go to the smallest action id.
    """
    if len(updated_prefix) != agent or len(base_suffix) != mdp.m - agent - 1:
        raise ModelError(
            f"Agent {agent} needs {agent} prefix and {mdp.m - agent - 1} suffix components, "
            f"got {len(updated_prefix)} and {len(base_suffix)}"
        )
    placeholder = [mdp.agent_actions[x][agent][0] for x in range(mdp.n)]
    actions = np.array(
        [list(c) for c in updated_prefix] + [placeholder] + [list(c) for c in base_suffix],
        dtype=np.int64,
    ).reshape(mdp.m, mdp.n)
    return _improve_component(mdp, agent, actions, _vector(J), discount, counter)


def dpi_sweep(
    mdp: CoMdp,
    base: JointPolicy,
    J: Values,
    discount: float,
    counter: Optional[OperationCounter] = None,
    order: Optional[Sequence[int]] = None,
) -> JointPolicy:
    """
    One round of agent-by-agent improvement against J.

    Agents run in index order unless ``order`` gives a permutation; each
    agent sees the components already improved in this sweep.
    """
    J = _vector(J)
    current = base.actions.copy()
    if order is None:
        for i in range(mdp.m):
            current[i] = dpi_agent_step(
                mdp, i, current[:i], base.actions[i + 1:], J, discount, counter
            )
    else:
        if sorted(order) != list(range(mdp.m)):
            raise ModelError(f"Agent order {list(order)} is not a permutation of 0..{mdp.m - 1}")
        for i in order:
            current[i] = _improve_component(mdp, i, current, J, discount, counter)
    return JointPolicy(current)


def _agent_order(mdp: CoMdp, agent_order: str, rng: np.random.Generator) -> Optional[List[int]]:
    if agent_order == "random":
        return [int(i) for i in rng.permutation(mdp.m)]
    return None


def _changed(policy: JointPolicy, other: JointPolicy) -> List[int]:
    return [policy.changed_states(other, i) for i in range(policy.m)]


def solve_ih_dpi_alp(
    mdp: CoMdp,
    mu0: JointPolicy,
    phi: FeatureMatrix,
    c: StateWeights,
    max_iters: int = 100,
    stop_eps: float = 1e-9,
    options: Optional[LpOptions] = None,
    verify: bool = False,
    agent_order: str = "fixed",
    seed: int = 0,
    counter: Optional[OperationCounter] = None,
) -> Tuple[JointPolicy, DpiTrace]:
    """
    Alternate ALP evaluation and DPI sweeps for a discounted model.

    Stops when the sweep returns its base policy, when the ALP values of
    consecutive policies differ by less than stop_eps, or after max_iters
    sweeps. With verify set every iterate is also evaluated exactly and the
    policy with the lowest mean exact cost is returned; otherwise the last.
    """
    if not isinstance(mdp.horizon, InfiniteHorizon):
        raise ModelError("Infinite-horizon DPI needs an infinite-horizon model")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    alpha = mdp.horizon.discount
    rng = np.random.default_rng(seed)
    trace = DpiTrace()

    logger.info("infinite-horizon DPI started", states=mdp.n, agents=mdp.m, d=phi.d)
    mu = mu0
    alp = alp_evaluate_ih(mdp, mu, phi, c, options)
    trace.evaluations = 1
    pending_pivots = alp.pivot_count
    best = None

    for t in range(1, max_iters + 1):
        started = time.perf_counter()
        next_mu = dpi_sweep(mdp, mu, alp.values, alpha, counter, _agent_order(mdp, agent_order, rng))
        trace.sweeps += 1

        exact = beta = None
        if verify:
            exact = evaluate_policy_exact_ih(mdp, mu)
            beta = exact.max_gap(alp.values)
            mean_cost = float(np.mean(exact.values))
            if best is None or mean_cost < best[0]:
                best = (mean_cost, mu)

        repeated = next_mu == mu
        next_alp: Optional[AlpResult] = None
        if not repeated:
            next_alp = alp_evaluate_ih(mdp, next_mu, phi, c, options)
            trace.evaluations += 1
            pending_pivots += next_alp.pivot_count

        trace.add(IterationRecord(
            iteration=t,
            policy=mu,
            next_policy=next_mu,
            alp_values=alp.values,
            changed_states=_changed(next_mu, mu),
            wall_ms=(time.perf_counter() - started) * 1000.0,
            lp_pivots=pending_pivots,
            exact_values=exact,
            beta=beta,
        ))
        pending_pivots = 0

        if repeated:
            trace.converged, trace.stop_reason = True, "policy repeated"
            break
        gap = next_alp.values.max_gap(alp.values)
        mu, alp = next_mu, next_alp
        if gap < stop_eps:
            trace.converged, trace.stop_reason = True, "values converged"
            break
    else:
        trace.stop_reason = "iteration cap"

    trace.last_policy = mu
    if verify:
        mean_cost = float(np.mean(evaluate_policy_exact_ih(mdp, mu).values))
        if mean_cost < best[0]:
            best = (mean_cost, mu)
        mu = best[1]

    logger.info(
        "infinite-horizon DPI finished", iterations=len(trace.records),
        sweeps=trace.sweeps, reason=trace.stop_reason, lp_pivots=trace.lp_pivots
    )
    return mu, trace


def solve_fh_dpi_alp(
    mdp: CoMdp,
    pi0: NonstationaryPolicy,
    phi: FeatureMatrix,
    c: StateWeights,
    max_iters_per_stage: int = 50,
    stop_eps: float = 1e-9,
    options: Optional[LpOptions] = None,
    verify: bool = False,
    agent_order: str = "fixed",
    seed: int = 0,
    counter: Optional[OperationCounter] = None,
) -> Tuple[NonstationaryPolicy, DpiTrace]:
    """
    Backward pass over stages N-1..0 with ALP stage evaluation.

    At stage k the DPI sweep runs against the ALP value of stage k+1 with
    discount 1 and the improved stage policy replaces the current one after
    every sweep. A stage ends when no state's ALP stage cost drops by more
    than stop_eps, when the stage policy repeats, or at the iteration cap.
    The base stage policy is only evaluated in verify mode, where its ALP
    values go to ``trace.base_stage_values``.
    ``trace.stage_values`` holds the final ALP values J_0..J_N with J_N = g_N.
    """
    if not isinstance(mdp.horizon, FiniteHorizon):
        raise ModelError("Finite-horizon DPI needs a finite-horizon model")
    N = mdp.horizon.stages
    if pi0.horizon != N:
        raise ModelError(f"Initial policy has {pi0.horizon} stages, model horizon is {N}")
    if max_iters_per_stage < 1:
        raise ValueError("max_iters_per_stage must be >= 1")
    rng = np.random.default_rng(seed)
    trace = DpiTrace()
    stages = list(pi0.stages)
    stage_values: List[ValueFunction] = [None] * (N + 1)
    base_values: List[ValueFunction] = [None] * N
    iterations = [0] * N
    stage_values[N] = ValueFunction(mdp.horizon.terminal_cost)
    # Exact values of the improved policy for stages after k (verify mode).
    exact_next = np.asarray(mdp.horizon.terminal_cost, dtype=float)

    logger.info("finite-horizon DPI started", states=mdp.n, agents=mdp.m, stages=N, d=phi.d)
    for k in range(N - 1, -1, -1):
        J_next = stage_values[k + 1].values
        mu = stages[k]
        alp: Optional[AlpResult] = None
        pending_pivots = 0
        if verify:
            base = alp_evaluate_fh_stage(mdp, k, mu, J_next, phi, c, options)
            trace.evaluations += 1
            base_values[k] = base.values
            pending_pivots = base.pivot_count

        for it in range(1, max_iters_per_stage + 1):
            started = time.perf_counter()
            next_mu = dpi_sweep(mdp, mu, J_next, 1.0, counter, _agent_order(mdp, agent_order, rng))
            trace.sweeps += 1
            iterations[k] = it

            repeated = next_mu == mu
            # The first sweep has no earlier ALP value to compare against.
            improved = alp is None
            next_alp = alp
            if not repeated or alp is None:
                next_alp = alp_evaluate_fh_stage(mdp, k, next_mu, J_next, phi, c, options)
                trace.evaluations += 1
                pending_pivots += next_alp.pivot_count
                if alp is not None:
                    improved = bool(np.any(alp.values.values - next_alp.values.values > stop_eps))

            exact = beta = None
            if verify:
                exact = ValueFunction(mdp.stage_values(mdp.policy_rows(next_mu), exact_next, 1.0))
                beta = exact.max_gap(next_alp.values)

            trace.add(IterationRecord(
                iteration=it,
                stage=k,
                policy=mu,
                next_policy=next_mu,
                alp_values=next_alp.values,
                changed_states=_changed(next_mu, mu),
                wall_ms=(time.perf_counter() - started) * 1000.0,
                lp_pivots=pending_pivots,
                exact_values=exact,
                beta=beta,
            ))
            pending_pivots = 0
            mu, alp = next_mu, next_alp
            if repeated or not improved:
                break

        stages[k] = mu
        stage_values[k] = alp.values
        if verify:
            exact_next = mdp.stage_values(mdp.policy_rows(mu), exact_next, 1.0)
        logger.debug("stage finished", stage=k, iterations=iterations[k])

    trace.stage_iterations = iterations
    trace.stage_values = stage_values
    trace.base_stage_values = base_values if verify else []
    trace.converged = True
    trace.stop_reason = "all stages done"
    policy = NonstationaryPolicy(tuple(stages))
    trace.last_policy = policy
    logger.info(
        "finite-horizon DPI finished", stages=N, sweeps=trace.sweeps,
        max_stage_iterations=max(iterations), lp_pivots=trace.lp_pivots
    )
    return policy, trace
