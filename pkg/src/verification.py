"""
Executable checks of the DPI cost-improvement bounds.

Finite horizon: J_{k,π̃} <= J_{k,π} + (N-k)β for every stage k, where β is
the largest gap between the exact stage values of the base policy π and the
ALP stage values produced while computing π̃.

Infinite horizon: J_{μ_{t+1}} <= J_{μ_t} + β_t/(1-α) for every DPI
iteration, where β_t is the gap between J_{μ_t} and its ALP value.

Both bounds rest on the ALP values lying below the exact base-policy
values, so every report also checks that premise.
"""

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import structlog

from .alp import StateWeights, build_features, BasisKind
from .config import Config
from .dpi import solve_fh_dpi_alp, solve_ih_dpi_alp
from .envs import build_random_comdp
from .exact_dp import evaluate_policy_exact_fh, evaluate_policy_exact_ih
from .lp import LpOptions
from .mdp import CoMdp, ModelError, Values, _vector, random_nonstationary_policy, random_policy
from .models import (
    BoundReport, ComdpError, FiniteHorizon, InfiniteHorizon, JointPolicy, NonstationaryPolicy
)

logger = structlog.get_logger(__name__)

BOUND_TOL = 1e-7
PREMISE_TOL = 1e-6
MAX_LISTED_VIOLATIONS = 20


class BoundViolation(ComdpError):
    """Raised when an improvement bound or its premise fails."""

    def __init__(self, message: str, report: BoundReport):
        super().__init__(message)
        self.report = report


def _violations(
    slack: np.ndarray, label: str, **context: Any
) -> List[Dict[str, Any]]:
    bad = np.flatnonzero(slack < 0)
    return [
        {"check": label, "x": int(x), "slack": float(slack[x]), **context}
        for x in bad[:MAX_LISTED_VIOLATIONS]
    ]


def verify_theorem1(
    mdp: CoMdp,
    pi: NonstationaryPolicy,
    pi_tilde: NonstationaryPolicy,
    alp_values: Sequence[Values],
) -> BoundReport:
    """
    Finite-horizon improvement bound for π̃ computed from π.

    alp_values are the ALP stage values J_0..J_N recorded by the solver
    (J_N = g_N); Err_k = J_{k,π} - alp_values[k].
    """
    if not isinstance(mdp.horizon, FiniteHorizon):
        raise ModelError("The finite-horizon bound needs a finite-horizon model")
    N = mdp.horizon.stages
    if len(alp_values) != N + 1:
        raise ModelError(f"Expected {N + 1} stage values, got {len(alp_values)}")

    base = evaluate_policy_exact_fh(mdp, pi)
    improved = evaluate_policy_exact_fh(mdp, pi_tilde)
    errors = [base[k].values - _vector(alp_values[k]) for k in range(N + 1)]
    beta = max(float(np.max(np.abs(err))) for err in errors)

    violations: List[Dict[str, Any]] = []
    worst = np.inf
    premise_holds = True
    for k in range(N + 1):
        slack = base[k].values + (N - k) * beta + BOUND_TOL - improved[k].values
        worst = min(worst, float(np.min(slack)))
        violations.extend(_violations(slack, "bound", stage=k))
        premise = errors[k] + PREMISE_TOL
        if np.any(premise < 0):
            premise_holds = False
            violations.extend(_violations(premise, "premise", stage=k))

    bound_holds = worst >= 0
    holds = bound_holds and premise_holds
    message = (
        f"finite-horizon bound {'holds' if holds else 'violated'}: "
        f"worst slack {worst:.3g}, beta {beta:.3g}, N={N}"
    )
    if not premise_holds:
        message += "; ALP stage values exceed the exact base-policy values"
    return BoundReport("theorem1", holds, premise_holds, worst, beta, violations, message)


def verify_theorem2(
    mdp: CoMdp, mu_t: JointPolicy, mu_next: JointPolicy, J_alp: Values
) -> BoundReport:
    """Infinite-horizon improvement bound for one DPI iteration μ_t → μ_{t+1}."""
    if not isinstance(mdp.horizon, InfiniteHorizon):
        raise ModelError("The infinite-horizon bound needs an infinite-horizon model")
    alpha = mdp.horizon.discount
    current = evaluate_policy_exact_ih(mdp, mu_t).values
    following = evaluate_policy_exact_ih(mdp, mu_next).values
    approx = _vector(J_alp)
    beta = float(np.max(np.abs(current - approx)))

    slack = current + beta / (1.0 - alpha) + BOUND_TOL - following
    worst = float(np.min(slack))
    violations = _violations(slack, "bound")
    premise = current - approx + PREMISE_TOL
    premise_holds = bool(np.all(premise >= 0))
    violations.extend(_violations(premise, "premise"))

    holds = worst >= 0 and premise_holds
    message = (
        f"infinite-horizon bound {'holds' if holds else 'violated'}: "
        f"worst slack {worst:.3g}, beta {beta:.3g}, alpha={alpha}"
    )
    if not premise_holds:
        message += "; ALP values exceed the exact policy values"
    return BoundReport("theorem2", holds, premise_holds, worst, beta, violations, message)


@dataclass
class SuiteResult:
    """Aggregated outcome of a randomized bound suite."""
    suite: str
    seeds: int
    checks: int = 0
    failures: List[Dict[str, Any]] = field(default_factory=list)
    worst_slack: float = float("inf")
    max_beta: float = 0.0
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, seed: int, report: BoundReport, **context: Any) -> None:
        self.checks += 1
        self.worst_slack = min(self.worst_slack, report.worst_slack)
        self.max_beta = max(self.max_beta, report.beta)
        if not report.holds:
            self.failures.append({"seed": seed, **context, **report.to_dict()})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "seeds": self.seeds,
            "checks": self.checks,
            "passed": self.passed,
            "worst_slack": self.worst_slack,
            "max_beta": self.max_beta,
            "failures": self.failures,
            "timestamp": self.timestamp.isoformat(),
        }


def _instance_shape(rng: np.random.Generator) -> Dict[str, int]:
    n = int(rng.integers(3, 11))
    return {
        "n": n,
        "m": int(rng.integers(1, 4)),
        "actions_per_agent": int(rng.integers(2, 4)),
        "branching": int(rng.integers(2, n + 1)),
        "d": int(rng.integers(1, n)),
    }


DEFAULT_REPLAY_DIR = "replays"


def _write_replay(
    replay_dir: Optional[Union[str, Path]], suite: str, seed: int, mdp: CoMdp,
    payload: Dict[str, Any]
) -> Optional[Path]:
    if replay_dir is None:
        return None
    replay_dir = Path(replay_dir)
    replay_dir.mkdir(parents=True, exist_ok=True)
    path = replay_dir / f"{suite}_seed{seed}.json"
    with open(path, "w") as f:
        json.dump({"suite": suite, "seed": seed, "model": mdp.to_dict(), **payload}, f)
    logger.error("offending instance written", path=str(path), seed=seed)
    return path


def _lp_options(config: Config) -> LpOptions:
    return LpOptions(
        pivot_tol=config.lp_pivot_tol,
        feasibility_tol=config.lp_feasibility_tol,
        phase_one_tol=config.lp_phase_one_tol,
        bland_factor=config.lp_bland_factor,
    )


def run_ih_suite(
    seeds: int = 100,
    inject_bug: bool = False,
    replay_dir: Optional[Union[str, Path]] = None,
    config: Optional[Config] = None,
    max_iters: int = 5,
) -> SuiteResult:
    """
    Infinite-horizon bound on random models with n <= 10, m <= 3, alpha in {0.5, 0.9}.

    Every DPI iteration is checked. inject_bug lifts one ALP value above the
    exact policy value so the premise check must fail.
    """
    config = config or Config()
    options = _lp_options(config)
    result = SuiteResult("ih", seeds)
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        shape = _instance_shape(rng)
        alpha = (0.5, 0.9)[seed % 2]
        mdp = build_random_comdp(
            seed, shape["n"], shape["m"], shape["actions_per_agent"], shape["branching"],
            mode=f"ih:{alpha}",
        )
        phi = build_features(BasisKind.RANDOM, {"d": shape["d"], "seed": seed}, mdp)
        c = StateWeights.uniform(mdp.n)
        _, trace = solve_ih_dpi_alp(
            mdp, random_policy(mdp, rng), phi, c, max_iters=max_iters,
            stop_eps=config.dpi_stop_eps, options=options,
        )
        failed = False
        for record in trace.records:
            J_alp = record.alp_values.values.copy()
            if inject_bug and record.iteration == 1:
                J_alp[0] = evaluate_policy_exact_ih(mdp, record.policy).values[0] + 1.0
            report = verify_theorem2(mdp, record.policy, record.next_policy, J_alp)
            result.record(seed, report, iteration=record.iteration, **shape)
            if not report.holds:
                failed = True
                logger.error("bound violated", suite="ih", seed=seed, message=report.message)
        if failed:
            _write_replay(replay_dir, "ih", seed, mdp, {
                "shape": shape,
                "policies": [r.policy.to_dict() for r in trace.records],
            })
    logger.info(
        "ih suite finished", seeds=seeds, checks=result.checks,
        failures=len(result.failures), worst_slack=result.worst_slack
    )
    return result


def run_fh_suite(
    seeds: int = 100,
    inject_bug: bool = False,
    replay_dir: Optional[Union[str, Path]] = None,
    config: Optional[Config] = None,
) -> SuiteResult:
    """
    Finite-horizon bound on random two-agent models with n <= 10, N <= 5.

    inject_bug lifts the stage-0 ALP value of state 0 above the exact
    base-policy value so the premise check must fail.
    """
    config = config or Config()
    options = _lp_options(config)
    result = SuiteResult("fh", seeds)
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        shape = _instance_shape(rng)
        shape["m"] = 2
        shape["N"] = int(rng.integers(1, 6))
        mdp = build_random_comdp(
            seed, shape["n"], shape["m"], shape["actions_per_agent"], shape["branching"],
            mode=f"fh:{shape['N']}",
        )
        phi = build_features(BasisKind.RANDOM, {"d": shape["d"], "seed": seed}, mdp)
        c = StateWeights.uniform(mdp.n)
        pi = random_nonstationary_policy(mdp, rng)
        pi_tilde, trace = solve_fh_dpi_alp(
            mdp, pi, phi, c, max_iters_per_stage=config.dpi_stage_max_iters,
            stop_eps=config.dpi_stop_eps, options=options,
        )
        values = [v.values.copy() for v in trace.stage_values]
        if inject_bug:
            values[0][0] = evaluate_policy_exact_fh(mdp, pi)[0].values[0] + 1.0
        report = verify_theorem1(mdp, pi, pi_tilde, values)
        result.record(seed, report, **shape)
        if not report.holds:
            logger.error("bound violated", suite="fh", seed=seed, message=report.message)
            _write_replay(replay_dir, "fh", seed, mdp, {
                "shape": shape,
                "policy": pi.to_dict(),
                "improved_policy": pi_tilde.to_dict(),
            })
    logger.info(
        "fh suite finished", seeds=seeds, checks=result.checks,
        failures=len(result.failures), worst_slack=result.worst_slack
    )
    return result


def run_suite(suite: str, seeds: int, **kwargs: Any) -> SuiteResult:
    if suite == "ih":
        return run_ih_suite(seeds, **kwargs)
    if suite == "fh":
        return run_fh_suite(seeds, **kwargs)
    raise ValueError(f"Unknown suite: {suite!r}")


def standalone_verify(seeds: Optional[int] = None) -> None:
    """Run both suites, print a JSON report and exit 0 iff every bound holds."""
    try:
        from .config import load_config

        config = load_config()
        seeds = seeds or config.verify_seeds
        results = [
            run_suite(suite, seeds, replay_dir=DEFAULT_REPLAY_DIR, config=config)
            for suite in ("fh", "ih")
        ]
        passed = all(r.passed for r in results)
        print(json.dumps({
            "passed": passed,
            "suites": [r.to_dict() for r in results],
        }, indent=2))
        exit(0 if passed else 1)

    except ComdpError as e:
        print(json.dumps({
            "passed": False,
            "message": f"Verification error: {str(e)}",
            "timestamp": datetime.now(timezone.utc).isoformat()
        }, indent=2))
        exit(1)
