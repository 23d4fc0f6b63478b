"""Roughness Calibrator - command-line entry point."""

import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

sys.path.insert(0, str(Path(__file__).parent.parent))

import click
import numpy as np
import orjson
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from shared.utils import setup_logging, get_logger
from config import settings
from errors import (
    CalibrationError,
    CampaignError,
    FlowDomainError,
    NetworkFileError,
    NotFactorizableError,
    TopologyError,
)
from models import CampaignConfig, CampaignResult, SolverMethod
from calibration import run_campaign
from conic import Conic, LinePair, classify, factor, is_real_factorizable
from forward_sim import generate_measurements, reference_state, write_ground_truth
from network_model import (
    LPS_PER_M3S,
    MeasurementSet,
    NetworkTopology,
    PipeCatalog,
    load_measurements,
    load_network,
    random_network,
    write_measurements,
)
from system_assembly import CalibrationProblem, numerical_rank
from tensor_factorization import (
    PAIR_E,
    beta_transform,
    candidate_directions,
    inadmissible_pipes,
    kernel_transform,
    root_diagnostic,
    select_separators,
)
from tensor_solver import explicit_tensor_model, tensor_jacobian, tensor_residual
from turbulent_flow import derivatives, flow


logger = get_logger("cli")
console = Console()

EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_CAMPAIGN = 3

INPUT_ERRORS = (NetworkFileError, TopologyError, ValidationError, ValueError)

DEMAND_COLUMNS = ["set", "node", "q_lps", "h_s_m"]

# step lengths tried along each candidate direction
SCAN_STEPS = [0.5**k for k in range(11)]


def _fail(message: str, code: int) -> NoReturn:
    console.print(f"[bold red]Error:[/bold red] {message}")
    sys.exit(code)


def _relative(diff: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(diff) / max(np.linalg.norm(ref), np.finfo(float).tiny))


def _write_json(path: Path, doc: Dict[str, Any]) -> None:
    path.write_bytes(orjson.dumps(doc, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))


def _load_problem(network: Path, measurements: Path) -> CalibrationProblem:
    topo, pipes = load_network(network)
    sets = load_measurements(measurements, topo)
    return CalibrationProblem(topo, pipes, sets)


# ----- Report building -----

def _state_block(problem: CalibrationProblem, x: np.ndarray) -> Dict[str, Any]:
    eps, heads = problem.split(np.asarray(x, dtype=float))
    v = problem.residual(np.asarray(x, dtype=float)).v
    return {
        "x": np.asarray(x, dtype=float).tolist(),
        "roughness_mm": (eps * 1e3).tolist(),
        "unmeasured_heads_m": [h.tolist() for h in heads],
        "residual_m3s": v,
        "residual_lps": v * LPS_PER_M3S,
    }


def build_report(
    problem: CalibrationProblem,
    result: CampaignResult,
    cfg: CampaignConfig,
    x0: np.ndarray,
    x_ref: Optional[np.ndarray],
) -> Dict[str, Any]:
    """
    Run report of a calibration campaign.

    Every numeric field carries its unit in the key name; launches are
    ordered by launch index.
    """
    topo = problem.topo
    launches = []
    for lr in result.launches:
        launches.append({
            "launch": lr.launch,
            "succeeded": lr.succeeded,
            "roughness_mm": lr.roughness_mm,
            "unmeasured_heads_m": lr.unmeasured_heads_m,
            "residual_m3s": lr.residual_m3s,
            "residual_lps": lr.residual_lps,
            "iter_of_best": lr.best_run,
            "mean_iterations_to_best": lr.mean_iterations_to_best,
            "total_inner_runs": lr.total_runs,
            "failed_inner_runs": lr.failed_runs,
            "eps_f_final_m3s": lr.eps_f_final,
            "eps_x_final": lr.eps_x_final,
            "out_of_range_pipes": [topo.pipe_ids[j] for j in lr.out_of_range_pipes],
            "x": lr.x,
        })

    return {
        "method": SolverMethod(result.method).value,
        "seed": result.seed,
        "launch_count": cfg.launches,
        "inner_runs": cfg.inner_runs,
        "pipe_ids": list(topo.pipe_ids),
        "unmeasured_node_ids": [topo.node_ids[r] for r in topo.unmeasured_nodes],
        "measurement_sets": [ms.id for ms in problem.sets],
        "n_m_min": topo.n_m_min,
        "initial": _state_block(problem, x0),
        "reference": _state_block(problem, x_ref) if x_ref is not None else None,
        "launches": launches,
        "best_launch": result.best_launch,
    }


def _fmt(value: Optional[float], spec: str) -> str:
    return "-" if value is None else format(value, spec)


def render_campaign_table(report: Dict[str, Any]) -> Table:
    """Quantities as rows, x* and the launches as columns."""
    table = Table(title=f"{report['method']} calibration, seed {report['seed']}")
    table.add_column("quantity", style="cyan")
    columns: List[Dict[str, Any]] = []
    if report["reference"] is not None:
        table.add_column("x*", justify="right", style="green")
        columns.append(report["reference"])
    for lr in report["launches"]:
        style = "bold" if lr["launch"] == report["best_launch"] else None
        table.add_column(f"L{lr['launch']}", justify="right", style=style)
        columns.append(lr)

    for j, pipe_id in enumerate(report["pipe_ids"]):
        table.add_row(
            f"ε {pipe_id} (mm)",
            *[_fmt(c["roughness_mm"][j], ".4f") if c.get("roughness_mm") else "-" for c in columns],
        )
    for i, set_id in enumerate(report["measurement_sets"]):
        for u, node_id in enumerate(report["unmeasured_node_ids"]):
            table.add_row(
                f"h {node_id} set {set_id} (m)",
                *[_fmt(c["unmeasured_heads_m"][i][u], ".3f") if c.get("unmeasured_heads_m") else "-"
                  for c in columns],
            )
    table.add_row("v (m^3/s)", *[_fmt(c.get("residual_m3s"), ".3e") for c in columns])
    table.add_row("v (l/s)", *[_fmt(c.get("residual_lps"), ".3e") for c in columns])
    table.add_row("iter of x+", *[_fmt(c.get("iter_of_best"), "d") for c in columns])
    table.add_row("avg # iter to x+", *[_fmt(c.get("mean_iterations_to_best"), ".2f") for c in columns])
    return table


# ----- Commands -----

@click.group()
@click.option("--log-level", default=settings.log_level, show_default=True, help="Log level")
@click.option("--log-json/--no-log-json", default=settings.log_json, help="JSON log lines")
def cli(log_level: str, log_json: bool) -> None:
    """Pipe roughness calibration for water distribution networks."""
    setup_logging(level=log_level, json_format=log_json)


@cli.command("calibrate")
@click.option("--network", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.data_dir / "threecycle.net", show_default=True)
@click.option("--measurements", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.data_dir / "threecycle_meas.csv", show_default=True)
@click.option("--method", type=click.Choice([m.value for m in SolverMethod]),
              default=SolverMethod.TENSOR.value, show_default=True)
@click.option("--launches", type=click.IntRange(min=1), default=settings.launches, show_default=True)
@click.option("--inner-runs", type=click.IntRange(min=1), default=settings.inner_runs, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=settings.seed, show_default=True)
@click.option("--parallel", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.report_path, show_default=True)
@click.option("--table/--no-table", default=True, help="Print the result table")
def cmd_calibrate(
    network: Path,
    measurements: Path,
    method: str,
    launches: int,
    inner_runs: int,
    seed: int,
    parallel: int,
    report_path: Path,
    table: bool,
) -> None:
    """Identify pipe roughnesses and unmeasured heads with a multi-start campaign."""
    try:
        problem = _load_problem(network, measurements)
        cfg = CampaignConfig(
            launches=launches,
            inner_runs=inner_runs,
            method=SolverMethod(method),
            seed=seed,
            parallel=parallel,
        )
    except INPUT_ERRORS as e:
        _fail(str(e), EXIT_INPUT)

    x0 = problem.initial_state()

    x_ref = None
    if problem.pipes.reference_roughness is not None:
        try:
            x_ref = reference_state(problem, problem.pipes.reference_roughness)
        except CalibrationError as e:
            logger.warning("Reference state unavailable", error=str(e))

    try:
        result = run_campaign(problem, x0, cfg)
    except CampaignError as e:
        _fail(str(e), EXIT_CAMPAIGN)
    except CalibrationError as e:
        _fail(str(e), EXIT_FAILURE)

    report = build_report(problem, result, cfg, x0.x, x_ref)
    _write_json(report_path, report)
    if table:
        console.print(render_campaign_table(report))
    console.print(f"Report written to [bold]{report_path}[/bold]")


def _read_roughness(path: Path, n_l: int) -> np.ndarray:
    try:
        doc = orjson.loads(path.read_bytes())
    except FileNotFoundError as e:
        raise NetworkFileError(str(path), "file not found") from e
    except orjson.JSONDecodeError as e:
        raise NetworkFileError(str(path), f"invalid JSON: {e}") from e

    if isinstance(doc, dict) and "roughness_m" in doc:
        eps = np.asarray(doc["roughness_m"], dtype=float)
    elif isinstance(doc, dict) and "roughness_mm" in doc:
        eps = np.asarray(doc["roughness_mm"], dtype=float) / 1e3
    elif isinstance(doc, list):
        eps = np.asarray(doc, dtype=float)
    else:
        raise NetworkFileError(str(path), "expected a list or a roughness_m / roughness_mm entry")
    if eps.shape != (n_l,):
        raise NetworkFileError(str(path), f"expected {n_l} roughness values, got {eps.size}")
    if np.any(eps < 0):
        raise NetworkFileError(str(path), "roughness must be non-negative")
    return eps


def _read_demands(path: Path, topo: NetworkTopology):
    """Demand CSV `set,node,q_lps,h_s_m`: inner rows carry q, source rows h_s."""
    try:
        frame = pd.read_csv(path, dtype={"node": str})
    except FileNotFoundError as e:
        raise NetworkFileError(str(path), "file not found") from e
    if list(frame.columns) != DEMAND_COLUMNS:
        raise NetworkFileError(str(path), f"expected columns {DEMAND_COLUMNS}, got {list(frame.columns)}")

    inner_index = {nid: r for r, nid in enumerate(topo.node_ids)}
    source_index = {nid: r for r, nid in enumerate(topo.source_ids)}
    ids, demands, heads = [], [], []
    for set_id, rows in frame.groupby("set", sort=True):
        q = np.zeros(topo.n_j)
        h_s = topo.default_source_heads.astype(float).copy()
        for row in rows.itertuples(index=False):
            node = str(row.node)
            if node in inner_index and not pd.isna(row.q_lps):
                q[inner_index[node]] = float(row.q_lps) / LPS_PER_M3S
            elif node in source_index and not pd.isna(row.h_s_m):
                h_s[source_index[node]] = float(row.h_s_m)
            elif node not in inner_index and node not in source_index:
                raise NetworkFileError(str(path), f"set {set_id} references unknown node {node!r}")
        if np.any(np.isnan(h_s)):
            raise NetworkFileError(str(path), f"set {set_id} lacks source heads")
        ids.append(int(set_id))
        demands.append(q)
        heads.append(h_s)
    return ids, demands, heads


def _random_demands(rng: np.random.Generator, topo: NetworkTopology, count: int):
    if np.any(np.isnan(topo.default_source_heads)):
        raise NetworkFileError("<network>", "random sets need source_head_m on every source")
    demands = [rng.uniform(0.5, 2.5, size=topo.n_j) / LPS_PER_M3S for _ in range(count)]
    return list(range(1, count + 1)), demands, [topo.default_source_heads.copy() for _ in range(count)]


@cli.command("simulate")
@click.option("--network", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.data_dir / "threecycle.net", show_default=True)
@click.option("--roughness-file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="JSON roughness (m); defaults to the network's reference roughness")
@click.option("--demands-file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="CSV set,node,q_lps,h_s_m")
@click.option("--random-sets", type=click.IntRange(min=1), default=None,
              help="Draw this many random demand sets instead of reading a file")
@click.option("--seed", type=click.IntRange(min=0), default=settings.seed, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--truth-out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def cmd_simulate(
    network: Path,
    roughness_file: Optional[Path],
    demands_file: Optional[Path],
    random_sets: Optional[int],
    seed: int,
    out: Path,
    truth_out: Optional[Path],
) -> None:
    """Forward-simulate measurement sets from a planted roughness."""
    if (demands_file is None) == (random_sets is None):
        _fail("give exactly one of --demands-file and --random-sets", EXIT_INPUT)

    try:
        topo, pipes = load_network(network)
        if roughness_file is not None:
            eps = _read_roughness(roughness_file, topo.n_l)
        elif pipes.reference_roughness is not None:
            eps = pipes.reference_roughness
        else:
            raise NetworkFileError(str(network), "no roughness_m on the pipes and no --roughness-file")
        if demands_file is not None:
            ids, demands, heads = _read_demands(demands_file, topo)
        else:
            ids, demands, heads = _random_demands(np.random.default_rng(seed), topo, random_sets)
    except INPUT_ERRORS as e:
        _fail(str(e), EXIT_INPUT)

    try:
        sets, truth = generate_measurements(eps, demands, heads, topo, pipes)
    except CalibrationError as e:
        _fail(str(e), EXIT_FAILURE)

    sets = [MeasurementSet(id=i, y_h=ms.y_h, q=ms.q, h_s=ms.h_s) for i, ms in zip(ids, sets)]
    write_measurements(out, sets, topo)
    if truth_out is not None:
        write_ground_truth(truth_out, eps, sets, truth, topo)
    console.print(f"{len(sets)} measurement sets written to [bold]{out}[/bold]")


# ----- Diagnostics -----

def derivative_errors(
    eps: np.ndarray,
    dh: np.ndarray,
    pipes: PipeCatalog,
    rel_step: float = settings.fd_relative_step,
) -> Dict[str, float]:
    """Worst relative deviation of each derivative family from central differences."""
    b = derivatives(eps, dh, pipes)
    h_e = rel_step * np.maximum(eps, 1e-6)
    h_d = rel_step * np.abs(dh)

    def central(fun, x, y, step_x, step_y):
        return (fun(x + step_x, y + step_y) - fun(x - step_x, y - step_y)) / (2.0 * (step_x + step_y))

    zero = np.zeros_like(eps)
    fd = {
        "p_eps": central(lambda e, d: flow(e, d, pipes), eps, dh, h_e, zero),
        "p_dh": central(lambda e, d: flow(e, d, pipes), eps, dh, zero, h_d),
        "p_eps2": central(lambda e, d: derivatives(e, d, pipes).p_eps, eps, dh, h_e, zero),
        "p_epsdh": central(lambda e, d: derivatives(e, d, pipes).p_eps, eps, dh, zero, h_d),
        "p_dh2": central(lambda e, d: derivatives(e, d, pipes).p_dh, eps, dh, zero, h_d),
    }
    return {
        name: float(np.max(np.abs(getattr(b, name) - approx) / np.maximum(np.abs(approx), 1e-300)))
        for name, approx in fd.items()
    }


def _scan(problem: CalibrationProblem, x: np.ndarray, d: np.ndarray) -> Dict[str, Any]:
    state = problem.unbounded_state(x)
    best_v, best_mu = float("inf"), None
    for mu in SCAN_STEPS:
        try:
            v = problem.residual(state.project(x + mu * d)).v
        except FlowDomainError:
            continue
        if v < best_v:
            best_v, best_mu = v, mu
    return {"best_step": best_mu, "best_residual_m3s": best_v if best_mu is not None else None}


def diagnose(problem: CalibrationProblem, x: np.ndarray) -> Dict[str, Any]:
    """Derivative, model identity, factorization and kernel diagnostics at x."""
    report = problem.residual(x)
    bundles = problem.bundles(x)
    J = problem.jacobian(x, bundles)
    eps, _ = problem.split(x)
    zero = np.zeros(problem.size)
    model_at_zero = tensor_residual(zero, problem, bundles, report.per_set).stacked

    fd = {}
    for dh in problem.head_losses(x):
        for name, err in derivative_errors(eps, dh, problem.pipes).items():
            fd[name] = max(fd.get(name, 0.0), err)

    fbar0, _ = problem.kernel_rhs(report.per_set)
    separators = [select_separators(b, f0) for b, f0 in zip(bundles, fbar0)]
    candidates = candidate_directions(separators, problem)

    kt = kernel_transform(problem, bundles, separators, report.per_set)
    roots = root_diagnostic(x, problem)

    scans = []
    for cand in candidates:
        entry = {
            "pairing": ["e" if c == PAIR_E else "b" for c in cand.pairing],
            "imag_norm": cand.imag_norm,
            "lstsq_residual": cand.lstsq_residual,
        }
        entry.update(_scan(problem, x, cand.direction.d))
        scans.append(entry)

    return {
        "residual_m3s": report.v,
        "residual_lps": report.v_lps,
        "jacobian_rank": numerical_rank(J),
        "unknowns": problem.size,
        "n_m_min": problem.topo.n_m_min,
        "fd_relative_error": fd,
        "tensor_residual_at_zero_error": _relative(model_at_zero - report.f, report.f),
        "tensor_jacobian_at_zero_error": _relative(tensor_jacobian(zero, problem, bundles) - J, J),
        "separators_factored": int(sum(int(np.sum(s.feasible)) for s in separators)),
        "separators_total": int(sum(np.size(s.feasible) for s in separators)),
        "separators_inadmissible": [
            [problem.sets[i].id, problem.topo.pipe_ids[j]] for i, j in inadmissible_pipes(separators)
        ],
        "root_corollary_max": float(np.max(np.abs(roots.corollary))),
        "root_hat_max": float(np.max(np.abs(roots.hat))),
        "pseudo_inverse_defect": beta_transform(kt).inversion_defect,
        "candidates": scans,
    }


def explicit_hessian_check(seed: int, n_j: int = 3, n_l: int = 4, n_m: int = 2) -> Dict[str, float]:
    """Hadamard-form model against explicit component Hessians on a random network."""
    rng = np.random.default_rng(seed)
    topo, pipes = random_network(rng, n_j, n_l, n_p=n_j - 1)
    demands = [rng.uniform(0.5, 2.0, size=n_j) / LPS_PER_M3S for _ in range(n_m)]
    sets, _ = generate_measurements(
        pipes.reference_roughness, demands, [topo.default_source_heads] * n_m, topo, pipes
    )
    problem = CalibrationProblem(topo, pipes, sets)
    x = problem.initial_state().x
    bundles = problem.bundles(x)
    f_slices = problem.residual(x).per_set
    d = 1e-3 * np.abs(x) * rng.standard_normal(x.size)
    model = tensor_residual(d, problem, bundles, f_slices).stacked
    explicit = explicit_tensor_model(problem, x, d)
    return {"relative_error": _relative(model - explicit, explicit), "unknowns": float(problem.size)}


def _read_state(path: Path, problem: CalibrationProblem) -> np.ndarray:
    try:
        doc = orjson.loads(path.read_bytes())
    except FileNotFoundError as e:
        raise NetworkFileError(str(path), "file not found") from e
    except orjson.JSONDecodeError as e:
        raise NetworkFileError(str(path), f"invalid JSON: {e}") from e
    if isinstance(doc, dict) and "x" in doc:
        x = np.asarray(doc["x"], dtype=float)
        if x.shape != (problem.size,):
            raise NetworkFileError(str(path), f"expected {problem.size} state values, got {x.size}")
        return x
    return reference_state(problem, _read_roughness(path, problem.n_l))


@cli.command("check")
@click.option("--network", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.data_dir / "threecycle.net", show_default=True)
@click.option("--measurements", type=click.Path(dir_okay=False, path_type=Path),
              default=settings.data_dir / "threecycle_meas.csv", show_default=True)
@click.option("--at", "at_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="JSON with a stacked state `x` or a roughness; defaults to the initial state")
@click.option("--hessian-bruteforce", is_flag=True, help="Compare against explicit Hessians")
@click.option("--seed", type=click.IntRange(min=0), default=settings.seed, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
def cmd_check(
    network: Path,
    measurements: Path,
    at_path: Optional[Path],
    hessian_bruteforce: bool,
    seed: int,
    report_path: Optional[Path],
) -> None:
    """Derivative and tensor-model diagnostics at a state."""
    try:
        problem = _load_problem(network, measurements)
        x = _read_state(at_path, problem) if at_path is not None else problem.initial_state().x
    except INPUT_ERRORS as e:
        _fail(str(e), EXIT_INPUT)
    except CalibrationError as e:
        _fail(str(e), EXIT_FAILURE)

    try:
        doc = diagnose(problem, x)
        if hessian_bruteforce:
            doc["hessian_bruteforce"] = explicit_hessian_check(seed)
    except CalibrationError as e:
        _fail(str(e), EXIT_FAILURE)

    table = Table(title="Diagnostics")
    table.add_column("check", style="cyan")
    table.add_column("value", justify="right")
    table.add_row("v (m^3/s)", f"{doc['residual_m3s']:.3e}")
    table.add_row("Jacobian rank / unknowns", f"{doc['jacobian_rank']} / {doc['unknowns']}")
    for name, err in doc["fd_relative_error"].items():
        table.add_row(f"FD rel. error {name}", f"{err:.2e}")
    table.add_row("tensor model at d=0 vs f", f"{doc['tensor_residual_at_zero_error']:.2e}")
    table.add_row("tensor Jacobian at d=0 vs J", f"{doc['tensor_jacobian_at_zero_error']:.2e}")
    table.add_row("factored pipes", f"{doc['separators_factored']} / {doc['separators_total']}")
    table.add_row("pipes failing the determinant check", str(len(doc["separators_inadmissible"])))
    table.add_row("pseudo-inverse defect", f"{doc['pseudo_inverse_defect']:.2e}")
    for cand in doc["candidates"]:
        table.add_row(
            f"candidate {''.join(cand['pairing'])}",
            _fmt(cand["best_residual_m3s"], ".3e") + f" (step {_fmt(cand['best_step'], '.4g')})",
        )
    if "hessian_bruteforce" in doc:
        table.add_row("explicit Hessian rel. error", f"{doc['hessian_bruteforce']['relative_error']:.2e}")
    console.print(table)

    if report_path is not None:
        _write_json(report_path, doc)


def _format_line(line: Sequence[complex]) -> str:
    def num(v: complex) -> str:
        v = complex(v)
        if abs(v.imag) <= 1e-12 * max(1.0, abs(v.real)):
            return f"{v.real:.6g}"
        return f"({v.real:.6g}{v.imag:+.6g}j)"

    A, B, C = line
    return f"{num(A)}·x + {num(B)}·y + {num(C)}"


def _format_pair(lp: LinePair) -> str:
    nu = complex(lp.nu)
    scale = f"{nu.real:.6g}" if abs(nu.imag) <= 1e-12 * max(1.0, abs(nu.real)) else f"({nu:.6g})"
    return f"{scale}·({_format_line(lp.first)})·({_format_line(lp.second)})"


@cli.command("factor-conic", context_settings={"ignore_unknown_options": True})
@click.argument("coefficients", nargs=6, type=float)
def cmd_factor_conic(coefficients: Sequence[float]) -> None:
    """Classify and factor a x² + 2h xy + b y² + 2f x + 2g y + c (args: A H B F G C)."""
    try:
        conic = Conic(*coefficients)
    except ValueError as e:
        _fail(str(e), EXIT_INPUT)

    kind = classify(conic)
    console.print(f"class: [bold]{kind.value}[/bold]  Δ={conic.delta:.6g}  Δ̂={conic.delta_hat:.6g}")
    try:
        pairs = factor(conic)
    except NotFactorizableError:
        console.print(f"non-degenerate, Δ={conic.delta:.6g}")
        return

    console.print(f"real factorizable: {is_real_factorizable(conic)}")
    for lp in pairs:
        label = lp.triple if lp.triple is not None else "bilinear"
        console.print(f"{label}: {_format_pair(lp)}")


if __name__ == "__main__":
    cli()
