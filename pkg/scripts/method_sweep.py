#!/usr/bin/env python3
"""Compare Newton and tensor campaigns over several seeds on the bundled benchmark."""

import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

SRC = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(SRC))
sys.path.insert(0, str(SRC / "roughness-calibrator"))

import click
import orjson
from rich.console import Console
from rich.table import Table

from shared.utils import setup_logging
from config import settings
from errors import CampaignError
from models import CampaignConfig, SolverMethod
from network_model import load_measurements, load_network
from system_assembly import CalibrationProblem
from calibration import run_campaign


console = Console()


@dataclass
class SweepResult:
    """Best residual of one campaign."""
    method: str
    seed: int
    best_residual_m3s: Optional[float]
    duration_s: float


def run_sweep(
    problem: CalibrationProblem,
    seeds: List[int],
    launches: int,
    inner_runs: int,
) -> List[SweepResult]:
    x0 = problem.initial_state()
    results = []
    for seed in seeds:
        for method in (SolverMethod.NEWTON, SolverMethod.TENSOR):
            cfg = CampaignConfig(launches=launches, inner_runs=inner_runs, method=method, seed=seed)
            start = time.perf_counter()
            try:
                best = run_campaign(problem, x0, cfg).best.residual_m3s
            except CampaignError:
                best = None
            results.append(SweepResult(method.value, seed, best, time.perf_counter() - start))
            console.print(f"  {method.value:7s} seed {seed}: {best if best is not None else 'failed'}")
    return results


def summarize(results: List[SweepResult]) -> Dict[str, Dict[str, float]]:
    summary = {}
    for method in (SolverMethod.NEWTON.value, SolverMethod.TENSOR.value):
        values = [r.best_residual_m3s for r in results if r.method == method and r.best_residual_m3s is not None]
        durations = [r.duration_s for r in results if r.method == method]
        summary[method] = {
            "campaigns": len(durations),
            "failed": len(durations) - len(values),
            "min_m3s": min(values) if values else float("nan"),
            "median_m3s": statistics.median(values) if values else float("nan"),
            "max_m3s": max(values) if values else float("nan"),
            "mean_duration_s": statistics.mean(durations) if durations else 0.0,
        }
    return summary


@click.command()
@click.option("--seeds", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--first-seed", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--launches", type=click.IntRange(min=1), default=settings.launches, show_default=True)
@click.option("--inner-runs", type=click.IntRange(min=1), default=settings.inner_runs, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def main(seeds: int, first_seed: int, launches: int, inner_runs: int, out: Optional[Path]) -> None:
    setup_logging(level="WARNING")
    topo, pipes = load_network(settings.data_dir / "threecycle.net")
    problem = CalibrationProblem(topo, pipes, load_measurements(settings.data_dir / "threecycle_meas.csv", topo))

    console.print(f"🚰 {seeds} seeds, {launches} launches x {inner_runs} runs per campaign")
    results = run_sweep(problem, list(range(first_seed, first_seed + seeds)), launches, inner_runs)
    summary = summarize(results)

    table = Table(title="Best residual per campaign (m^3/s)")
    table.add_column("method", style="cyan")
    for column in ("campaigns", "failed", "min", "median", "max", "mean time (s)"):
        table.add_column(column, justify="right")
    for method, s in summary.items():
        table.add_row(
            method,
            str(s["campaigns"]),
            str(s["failed"]),
            f"{s['min_m3s']:.3e}",
            f"{s['median_m3s']:.3e}",
            f"{s['max_m3s']:.3e}",
            f"{s['mean_duration_s']:.1f}",
        )
    console.print(table)

    if out is not None:
        doc = {"summary": summary, "campaigns": [r.__dict__ for r in results]}
        out.write_bytes(orjson.dumps(doc, option=orjson.OPT_INDENT_2))
        console.print(f"Sweep written to [bold]{out}[/bold]")


if __name__ == "__main__":
    main()
