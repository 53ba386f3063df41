"""
Command-line sub-commands: gen-env, solve, bench and verify-bounds.
"""

import argparse
import json
from pathlib import Path
from typing import Optional, Sequence, Tuple

import structlog

from .alp import BasisError, parse_basis_spec
from .bench import run_bench, write_csv
from .config import Config, create_directories, load_bench_config
from .envs import GeneratorError, GridSpec, build_random_comdp, build_spiders_and_flies
from .mdp import load_model, save_model, validate
from .models import ComdpError
from .runner import FINITE_ONLY, INFINITE_ONLY, METHODS, create_solver_runner, write_outputs
from .verification import DEFAULT_REPLAY_DIR, run_suite

logger = structlog.get_logger(__name__)


class UsageError(ComdpError):
    """Raised for invalid command-line flags."""
    pass


def _int_pair(text: str, flag: str) -> Tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects two comma-separated integers, got {text!r}")
    return a, b


def _float_pair(text: str, flag: str) -> Tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects two comma-separated numbers, got {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comdp_bench",
        description="Cooperative multi-agent MDP solvers with DPI and ALP evaluation",
    )
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    parser.add_argument("--log-path", help="Directory for log files")
    parser.add_argument("--log-json", action="store_true", help="Render log events as JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-env", help="Generate a model file")
    gen.add_argument("--grid", type=int, help="Grid side h of the spiders-and-flies world")
    gen.add_argument("--flies", help="Fly cells a,b (default: opposite corners)")
    gen.add_argument("--slip", type=float, help="Probability of the intended move")
    gen.add_argument("--collision-penalty", type=float)
    gen.add_argument("--wall-penalty", type=float)
    gen.add_argument("--stage-cost", type=float)
    gen.add_argument("--random", action="store_true", help="Generate a random model instead")
    gen.add_argument("--states", type=int, default=10, help="Random model: number of states")
    gen.add_argument("--agents", type=int, default=2, help="Random model: number of agents")
    gen.add_argument("--actions", type=int, default=2, help="Random model: actions per agent")
    gen.add_argument("--branching", type=int, help="Random model: successors per row")
    gen.add_argument("--cost-range", default="0,1", help="Random model: low,high")
    gen.add_argument("--mode", required=True, help="fh:N or ih:alpha")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="Output model file")

    solve = sub.add_parser("solve", help="Solve a model file")
    solve.add_argument("model", help="JSON model file")
    solve.add_argument("--method", required=True, choices=METHODS)
    solve.add_argument("--basis", help="identity | aggregation:k | grid-distance | poly:deg | random:d[:seed]")
    solve.add_argument("--weights", help="uniform or a JSON file of state weights")
    solve.add_argument("--verify", action="store_true", help="Evaluate iterates exactly")
    solve.add_argument("--init", choices=("first", "random"), default="first")
    solve.add_argument("--agent-order", choices=("fixed", "random"))
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out-dir", required=True)
    solve.add_argument("--dump-tableau", help="Append final simplex tableaus to this file")

    bench = sub.add_parser("bench", help="Run a benchmark configuration")
    bench.add_argument("bench_config", help="JSON benchmark configuration")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", help="CSV output (default: from the configuration)")

    verify = sub.add_parser("verify-bounds", help="Run the randomized bound suites")
    verify.add_argument("--suite", choices=("fh", "ih", "all"), default="all")
    verify.add_argument("--seeds", type=int)
    verify.add_argument("--inject-bug", action="store_true",
                        help="Perturb ALP values above the exact values")
    verify.add_argument("--report", help="JSON report file")
    verify.add_argument("--replay-dir",
                        help="Directory for offending instances (default: replays/ next to "
                             "--report, else ./replays)")
    return parser


def apply_overrides(config: Config, args: argparse.Namespace) -> Config:
    """Copy command-line values onto configuration fields."""
    overrides = {
        "log_level": getattr(args, "log_level", None),
        "log_path": getattr(args, "log_path", None),
        "slip_p": getattr(args, "slip", None),
        "collision_penalty": getattr(args, "collision_penalty", None),
        "wall_penalty": getattr(args, "wall_penalty", None),
        "stage_cost": getattr(args, "stage_cost", None),
        "agent_order": getattr(args, "agent_order", None),
        "bench_trials": getattr(args, "trials", None),
        "verify_seeds": getattr(args, "seeds", None),
    }
    values = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "log_json", False):
        values["log_json"] = True
    try:
        return Config(**{**config.dict(), **values})
    except ValueError as e:
        raise UsageError(str(e))


def cmd_gen_env(args: argparse.Namespace, config: Config) -> int:
    if args.grid is None and not args.random:
        raise UsageError("gen-env needs --grid h or --random")
    if args.slip is not None and not 0.0 < args.slip <= 1.0:
        raise UsageError(f"--slip must lie in (0, 1], got {args.slip}")
    try:
        if args.random:
            mdp = build_random_comdp(
                args.seed, args.states, args.agents, args.actions,
                args.branching or args.states, _float_pair(args.cost_range, "--cost-range"),
                args.mode,
            )
        else:
            flies = _int_pair(args.flies, "--flies") if args.flies else None
            spec = GridSpec.from_mode(
                args.grid, args.mode, flies,
                slip_p=config.slip_p,
                collision_penalty=config.collision_penalty,
                wall_penalty=config.wall_penalty,
                stage_cost=config.stage_cost,
            )
            mdp = build_spiders_and_flies(spec)
    except GeneratorError as e:
        raise UsageError(str(e))

    violations = validate(mdp)
    if violations:
        raise ComdpError(f"Generated model is invalid: {violations[0]}")
    save_model(mdp, args.out)
    joint = int(mdp.joint_action_count(0))
    print(f"n={mdp.n} m={mdp.m} joint_actions={joint} rows={mdp.num_rows}")
    return 0


def cmd_solve(args: argparse.Namespace, config: Config) -> int:
    if not Path(args.model).exists():
        raise UsageError(f"Model file not found: {args.model}")
    mdp = load_model(args.model)
    violations = validate(mdp)
    if violations:
        raise ComdpError(f"Model {args.model} is invalid: {'; '.join(violations[:5])}")
    if mdp.is_finite and args.method in INFINITE_ONLY:
        raise UsageError(f"--method {args.method} needs an infinite-horizon model")
    if not mdp.is_finite and args.method in FINITE_ONLY:
        raise UsageError(f"--method {args.method} needs a finite-horizon model")
    if args.basis is not None:
        try:
            parse_basis_spec(args.basis)
        except BasisError as e:
            raise UsageError(str(e))

    create_directories(config, args.out_dir)
    runner = create_solver_runner(config)
    outcome = runner.solve(
        mdp, args.method, basis=args.basis, weights=args.weights, verify=args.verify,
        init=args.init, seed=args.seed, dump_tableau=args.dump_tableau,
    )
    write_outputs(outcome, args.out_dir)
    print(json.dumps(outcome.to_summary()))
    return 0


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    try:
        bench = load_bench_config(args.bench_config)
    except Exception as e:
        raise UsageError(f"Cannot parse benchmark configuration {args.bench_config}: {e}")
    out = args.out or bench.output
    if out is None:
        raise UsageError("bench needs --out or an output path in the configuration")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    results = run_bench(bench, config, trials=args.trials, workers=args.workers)
    write_csv(results, out)
    print(f"{len(results)} rows written to {out}")
    return 0


def cmd_verify_bounds(args: argparse.Namespace, config: Config) -> int:
    suites = ("fh", "ih") if args.suite == "all" else (args.suite,)
    replay_dir = args.replay_dir
    if replay_dir is None and args.report:
        replay_dir = Path(args.report).parent / DEFAULT_REPLAY_DIR
    elif replay_dir is None:
        replay_dir = Path(DEFAULT_REPLAY_DIR)
    results = [
        run_suite(
            suite, config.verify_seeds, inject_bug=args.inject_bug,
            replay_dir=replay_dir, config=config,
        )
        for suite in suites
    ]
    passed = all(r.passed for r in results)
    report = {"passed": passed, "suites": [r.to_dict() for r in results]}
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2)
    for r in results:
        print(f"{r.suite}: {'PASS' if r.passed else 'FAIL'} checks={r.checks} "
              f"worst_slack={r.worst_slack:.3g} failures={len(r.failures)}")
    if not passed:
        logger.error("bound suite failed", suites=[r.suite for r in results if not r.passed])
    return 0 if passed else 1


COMMANDS = {
    "gen-env": cmd_gen_env,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "verify-bounds": cmd_verify_bounds,
}


def run_command(args: argparse.Namespace, config: Config) -> int:
    return COMMANDS[args.command](args, config)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
