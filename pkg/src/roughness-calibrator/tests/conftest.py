"""Shared fixtures: bundled benchmark and small forward-simulated networks."""

import pytest
import numpy as np
from pathlib import Path

import sys
SRC_DIR = Path(__file__).parent.parent.parent
sys.path.insert(0, str(SRC_DIR))
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import setup_logging
from config import settings
from forward_sim import generate_measurements
from network_model import load_measurements, load_network, network_from_document
from system_assembly import CalibrationProblem


DATA_DIR = Path(__file__).parent.parent / "data"

# Table values of the bundled benchmark
BENCHMARK_X0_HEADS = [93.9488, 90.8934, 89.9429, 84.8642, 84.9250, 77.3115]
BENCHMARK_XSTAR_HEADS = [93.104, 90.885, 88.538, 84.846, 82.818, 77.280]
BENCHMARK_XSTAR_RESIDUAL = 1.082e-7


def _node(node_id, sensor=True):
    return {"id": node_id, "elevation_m": 0.0, "sensor": sensor}


def _pipe(pipe_id, start, end, length=10.0, roughness=None):
    doc = {"id": pipe_id, "from": start, "to": end, "length_m": length, "diameter_m": 0.04}
    if roughness is not None:
        doc["roughness_m"] = roughness
    return doc


SERIES_DOC = {
    "nodes": [
        {"id": "R", "source": True, "source_head_m": 100.0},
        _node("a"),
        _node("b"),
    ],
    "pipes": [
        _pipe("p1", "R", "a", roughness=0.001),
        _pipe("p2", "a", "b", roughness=0.0008),
    ],
}

SINGLE_DOC = {
    "nodes": [{"id": "R", "source": True, "source_head_m": 50.0}, _node("a")],
    "pipes": [_pipe("p1", "R", "a", length=20.0, roughness=0.0012)],
}

# one cycle a-b-c, node a unmeasured
LOOP_DOC = {
    "nodes": [
        {"id": "R", "source": True, "source_head_m": 100.0},
        _node("a", sensor=False),
        _node("b"),
        _node("c"),
    ],
    "pipes": [
        _pipe("p1", "R", "a", roughness=0.0015),
        _pipe("p2", "a", "b", length=15.0, roughness=0.001),
        _pipe("p3", "a", "c", length=20.0, roughness=0.0007),
        _pipe("p4", "b", "c", length=5.0, roughness=0.0005),
    ],
}


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    setup_logging(level=settings.log_level)


def simulated_problem(doc, demands_lps, source_head=None):
    """CalibrationProblem whose measurements come from the network's planted roughness."""
    topo, pipes = network_from_document(doc)
    h_s = topo.default_source_heads if source_head is None else np.array([source_head])
    demands = [np.asarray(q, dtype=float) / 1000.0 for q in demands_lps]
    sets, truth = generate_measurements(pipes.reference_roughness, demands, [h_s] * len(demands), topo, pipes)
    return CalibrationProblem(topo, pipes, sets), truth


@pytest.fixture(scope="session")
def benchmark_tables():
    return {
        "x0_heads": BENCHMARK_X0_HEADS,
        "xstar_heads": BENCHMARK_XSTAR_HEADS,
        "xstar_residual": BENCHMARK_XSTAR_RESIDUAL,
    }


@pytest.fixture(scope="session")
def network_docs():
    return {"series": SERIES_DOC, "single": SINGLE_DOC, "loop": LOOP_DOC}


@pytest.fixture(scope="session")
def simulate():
    return simulated_problem


@pytest.fixture(scope="session")
def benchmark_problem():
    topo, pipes = load_network(DATA_DIR / "threecycle.net")
    sets = load_measurements(DATA_DIR / "threecycle_meas.csv", topo)
    return CalibrationProblem(topo, pipes, sets)


@pytest.fixture(scope="session")
def series_problem():
    problem, _ = simulated_problem(SERIES_DOC, [[1.0, 1.5]])
    return problem


@pytest.fixture(scope="session")
def single_pipe_problem():
    problem, _ = simulated_problem(SINGLE_DOC, [[2.0]])
    return problem


@pytest.fixture(scope="session")
def loop_problem():
    problem, _ = simulated_problem(LOOP_DOC, [[0.5, 1.5, 1.0], [1.0, 0.8, 2.0]])
    return problem
