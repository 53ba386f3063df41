"""
Benchmark harness comparing solver methods on model files.

Each row runs one (model, method, basis) combination for a number of timed
trials; the CSV reports median wall time and the speedup against the exact
baseline of the same model.
"""

import csv
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog

from .config import BenchConfig, BenchRow, Config
from .mdp import load_model
from .runner import SolverRunner

logger = structlog.get_logger(__name__)

SCHEMA_VERSION = 1
COLUMNS = (
    "model", "method", "basis", "d", "iterations", "iterations_per_stage", "wall_ms",
    "speedup_vs_baseline", "dim_reduction_factor", "exact_cost",
)


@dataclass
class BenchResult:
    """One CSV row."""
    model: str
    method: str
    basis: str
    d: int
    iterations: int
    iterations_per_stage: Optional[int]
    wall_ms: float
    dim_reduction_factor: float
    exact_cost: Optional[float]
    finite: bool
    speedup_vs_baseline: Optional[float] = None

    @property
    def baseline_method(self) -> str:
        return "dp-fh" if self.finite else "pi-joint"


def run_row(row: BenchRow, config: Config, trials: int) -> BenchResult:
    """Run one benchmark row; non-timing columns come from the first trial."""
    mdp = load_model(row.model)
    runner = SolverRunner(config)
    timings = []
    first = None
    for _ in range(trials):
        outcome = runner.solve(mdp, row.method, basis=row.basis, verify=row.verify, seed=row.seed)
        timings.append(outcome.wall_ms)
        first = first or outcome
    result = BenchResult(
        model=row.model,
        method=row.method,
        basis=first.basis or "",
        d=first.d or mdp.n,
        iterations=first.iterations,
        iterations_per_stage=first.iterations_per_stage,
        wall_ms=statistics.median(timings),
        dim_reduction_factor=first.dim_reduction_factor,
        exact_cost=first.exact_cost_mean,
        finite=mdp.is_finite,
    )
    logger.info("benchmark row", **{k: v for k, v in asdict(result).items() if k != "finite"})
    return result


def _run_row_args(args: Tuple[Dict[str, Any], Dict[str, Any], int]) -> BenchResult:
    row, config, trials = args
    return run_row(BenchRow(**row), Config(**config), trials)


def fill_speedups(results: List[BenchResult]) -> None:
    """speedup = median baseline wall time / median row wall time, per model."""
    baselines = {
        r.model: r.wall_ms for r in results if r.method == r.baseline_method
    }
    for r in results:
        baseline = baselines.get(r.model)
        if baseline is not None and r.wall_ms > 0:
            r.speedup_vs_baseline = baseline / r.wall_ms


def run_bench(
    bench: BenchConfig, config: Config, trials: Optional[int] = None, workers: int = 1
) -> List[BenchResult]:
    """Run every row, in a process pool when workers > 1."""
    trials = trials or bench.trials or config.bench_trials
    logger.info("benchmark started", rows=len(bench.rows), trials=trials, workers=workers)
    if workers > 1:
        jobs = [(row.dict(), config.dict(), trials) for row in bench.rows]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_row_args, jobs))
    else:
        results = [run_row(row, config, trials) for row in bench.rows]
    fill_speedups(results)
    return results


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return value


def write_csv(results: List[BenchResult], path: Union[str, Path]) -> None:
    """CSV whose first header cell carries the schema version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"schema={SCHEMA_VERSION}", *COLUMNS])
        for r in results:
            values = asdict(r)
            writer.writerow([SCHEMA_VERSION, *(_cell(values[c]) for c in COLUMNS)])
    logger.info("benchmark written", path=str(path), rows=len(results))
