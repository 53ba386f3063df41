"""
Solver runner dispatching models to the exact and DPI-ALP methods.

Times the solver call, gathers iteration and cost statistics and writes
policy, trace and summary files.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import structlog

from .alp import FeatureMatrix, StateWeights, features_from_spec
from .config import Config
from .dpi import solve_fh_dpi_alp, solve_ih_dpi_alp
from .exact_dp import (
    evaluate_policy_exact_fh, evaluate_policy_exact_ih, finite_horizon_dp,
    policy_iteration_joint, value_iteration
)
from .lp import LpOptions
from .mdp import (
    CoMdp, ModelError, OperationCounter, first_action_policy, random_nonstationary_policy,
    random_policy
)
from .models import DpiTrace, JointPolicy, NonstationaryPolicy

logger = structlog.get_logger(__name__)

METHODS = ("dpi-alp", "pi-joint", "vi", "dp-fh")
INFINITE_ONLY = ("pi-joint", "vi")
FINITE_ONLY = ("dp-fh",)


@dataclass
class SolveOutcome:
    """Result and statistics of one solver run."""
    method: str
    policy: Union[JointPolicy, NonstationaryPolicy]
    wall_ms: float
    iterations: int
    sweeps: int
    n: int
    basis: Optional[str] = None
    d: Optional[int] = None
    iterations_per_stage: Optional[int] = None
    lp_pivots: int = 0
    expectations: int = 0
    exact_cost_mean: Optional[float] = None
    exact_cost_max: Optional[float] = None
    beta_per_iter: List[Optional[float]] = field(default_factory=list)
    stop_reason: str = ""
    trace: Optional[DpiTrace] = None

    @property
    def dim_reduction_factor(self) -> float:
        return self.n / (self.d or self.n)

    def to_summary(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "basis": self.basis,
            "d": self.d,
            "iterations": self.iterations,
            "sweeps": self.sweeps,
            "iterations_per_stage": self.iterations_per_stage,
            "wall_ms": self.wall_ms,
            "lp_pivots": self.lp_pivots,
            "expectations": self.expectations,
            "dim_reduction_factor": self.dim_reduction_factor,
            "exact_cost_at_start_states": (
                {"mean": self.exact_cost_mean, "max": self.exact_cost_max}
                if self.exact_cost_mean is not None else None
            ),
            "beta_per_iter": self.beta_per_iter,
            "stop_reason": self.stop_reason,
        }


def start_states(mdp: CoMdp) -> np.ndarray:
    """States used for cost reporting: non-goal states of grid worlds, else all."""
    if mdp.grid is not None and mdp.grid.goal_states:
        return np.setdiff1d(np.arange(mdp.n), np.array(mdp.grid.goal_states))
    return np.arange(mdp.n)


def load_weights(spec: Optional[str], n: int) -> StateWeights:
    """'uniform' (default) or a JSON file holding n positive weights."""
    if spec is None or spec == "uniform":
        return StateWeights.uniform(n)
    with open(spec) as f:
        values = json.load(f)
    if len(values) != n:
        raise ModelError(f"Weights file {spec} has {len(values)} entries, expected {n}")
    return StateWeights.from_values(values)


class SolverRunner:
    """
    Runs one method on one model.

    Features:
    - Method and horizon dispatch
    - Monotonic timing around the solver call only
    - Exact cost reporting at start states
    - Policy, trace and summary output
    """

    def __init__(self, config: Config):
        self.config = config

    def lp_options(self, dump_path: Optional[Union[str, Path]] = None) -> LpOptions:
        return LpOptions(
            pivot_tol=self.config.lp_pivot_tol,
            feasibility_tol=self.config.lp_feasibility_tol,
            phase_one_tol=self.config.lp_phase_one_tol,
            bland_factor=self.config.lp_bland_factor,
            dump_path=dump_path,
        )

    def default_basis(self, mdp: CoMdp) -> str:
        if mdp.grid is None and self.config.default_basis == "grid-distance":
            return "identity"
        return self.config.default_basis

    def initial_policy(self, mdp: CoMdp, init: str, seed: int):
        rng = np.random.default_rng(seed)
        if mdp.is_finite:
            if init == "random":
                return random_nonstationary_policy(mdp, rng)
            return NonstationaryPolicy(
                tuple(first_action_policy(mdp) for _ in range(mdp.horizon.stages))
            )
        return random_policy(mdp, rng) if init == "random" else first_action_policy(mdp)

    def exact_cost(self, mdp: CoMdp, policy) -> np.ndarray:
        if mdp.is_finite:
            values = evaluate_policy_exact_fh(mdp, policy)[0].values
        else:
            values = evaluate_policy_exact_ih(mdp, policy).values
        return values[start_states(mdp)]

    def solve(
        self,
        mdp: CoMdp,
        method: str,
        basis: Optional[str] = None,
        weights: Optional[str] = None,
        verify: bool = False,
        init: str = "first",
        seed: int = 0,
        dump_tableau: Optional[Union[str, Path]] = None,
    ) -> SolveOutcome:
        """
        Run a method and collect its statistics.

        Exact methods always report their exact cost; dpi-alp only in verify mode.
        """
        if method not in METHODS:
            raise ModelError(f"Unknown method: {method}")
        counter = OperationCounter()
        logger.info("solve started", method=method, states=mdp.n, agents=mdp.m)

        if method == "dpi-alp":
            outcome = self._solve_dpi(
                mdp, basis or self.default_basis(mdp), weights, verify, init, seed,
                dump_tableau, counter
            )
        else:
            outcome = self._solve_exact(mdp, method, counter)
        outcome.expectations = counter.expectations

        if method != "dpi-alp" or verify:
            costs = self.exact_cost(mdp, outcome.policy)
            outcome.exact_cost_mean = float(np.mean(costs))
            outcome.exact_cost_max = float(np.max(costs))

        logger.info(
            "solve finished", method=method, iterations=outcome.iterations,
            sweeps=outcome.sweeps, wall_ms=round(outcome.wall_ms, 3),
            exact_cost=outcome.exact_cost_mean
        )
        return outcome

    def _solve_exact(self, mdp: CoMdp, method: str, counter: OperationCounter) -> SolveOutcome:
        started = time.perf_counter()
        if method == "vi":
            _, policy, sweeps = value_iteration(mdp, self.config.vi_tol, counter=counter)
            iterations, per_stage = sweeps, None
        elif method == "pi-joint":
            policy, sweeps = policy_iteration_joint(
                mdp, first_action_policy(mdp), self.config.pi_max_iters, counter
            )
            iterations, per_stage = sweeps, None
        else:
            policy, _ = finite_horizon_dp(mdp, counter)
            sweeps = mdp.horizon.stages
            iterations, per_stage = 1, 1
        wall_ms = (time.perf_counter() - started) * 1000.0
        return SolveOutcome(
            method=method, policy=policy, wall_ms=wall_ms, iterations=iterations,
            sweeps=sweeps, n=mdp.n, iterations_per_stage=per_stage,
        )

    def _solve_dpi(
        self,
        mdp: CoMdp,
        basis: str,
        weights: Optional[str],
        verify: bool,
        init: str,
        seed: int,
        dump_tableau: Optional[Union[str, Path]],
        counter: OperationCounter,
    ) -> SolveOutcome:
        phi: FeatureMatrix = features_from_spec(basis, mdp)
        c = load_weights(weights, mdp.n)
        options = self.lp_options(dump_tableau)
        start = self.initial_policy(mdp, init, seed)
        kwargs = dict(
            stop_eps=self.config.dpi_stop_eps, options=options, verify=verify,
            agent_order=self.config.agent_order, seed=seed, counter=counter,
        )

        started = time.perf_counter()
        if mdp.is_finite:
            policy, trace = solve_fh_dpi_alp(
                mdp, start, phi, c, self.config.dpi_stage_max_iters, **kwargs
            )
        else:
            policy, trace = solve_ih_dpi_alp(mdp, start, phi, c, self.config.dpi_max_iters, **kwargs)
        wall_ms = (time.perf_counter() - started) * 1000.0

        if mdp.is_finite:
            iterations, per_stage = trace.sweeps, max(trace.stage_iterations)
        else:
            iterations, per_stage = len(trace.records), None
        return SolveOutcome(
            method="dpi-alp", policy=policy, wall_ms=wall_ms, iterations=iterations,
            sweeps=trace.sweeps, n=mdp.n, basis=basis, d=phi.d,
            iterations_per_stage=per_stage, lp_pivots=trace.lp_pivots,
            beta_per_iter=trace.betas if verify else [], stop_reason=trace.stop_reason,
            trace=trace,
        )


def write_outputs(outcome: SolveOutcome, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write policy.json, trace.jsonl and summary.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "policy": out_dir / "policy.json",
        "trace": out_dir / "trace.jsonl",
        "summary": out_dir / "summary.json",
    }
    with open(paths["policy"], "w") as f:
        json.dump(outcome.policy.to_dict(), f)
    with open(paths["trace"], "w") as f:
        if outcome.trace is not None:
            for record in outcome.trace.to_jsonl():
                f.write(json.dumps(record) + "\n")
    with open(paths["summary"], "w") as f:
        json.dump(outcome.to_summary(), f, indent=2)
    logger.info("outputs written", out_dir=str(out_dir))
    return paths


def create_solver_runner(config: Config) -> SolverRunner:
    """Factory function to create a solver runner."""
    return SolverRunner(config)
