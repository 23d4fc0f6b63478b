"""Network graph, structural matrices and network/measurement file ingestion.

Sign conventions: a pipe's column of the incidence matrix A carries +1 at the
inner node it flows into and -1 at the inner node it leaves; the source
incidence carries +1 at the source it leaves and -1 at the source it enters.
Head loss along pipe j is then Δh = C̃_sᵀ h_s - Aᵀ(C_hᵀ y_h + C̄_hᵀ h_N + z).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import orjson
import pandas as pd

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import NetworkFileError, TopologyError


logger = get_logger("network-model")

GROUND = "__sources__"
MEASUREMENT_COLUMNS = ["set", "node", "y_h_m", "q_lps", "h_s_m"]
LPS_PER_M3S = 1000.0


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Graph structure of a network with its selector matrices."""

    node_ids: Tuple[str, ...]
    source_ids: Tuple[str, ...]
    pipe_ids: Tuple[str, ...]
    incidence: np.ndarray
    source_incidence: np.ndarray
    cycle: np.ndarray
    sensor_select: np.ndarray
    sensor_complement: np.ndarray
    elevations: np.ndarray
    default_source_heads: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_j(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_s(self) -> int:
        return self.source_incidence.shape[0]

    @property
    def n_l(self) -> int:
        return self.incidence.shape[1]

    @property
    def n_p(self) -> int:
        return self.sensor_select.shape[0]

    @property
    def n_u(self) -> int:
        """Number of unmeasured inner nodes per measurement set."""
        return self.n_j - self.n_p

    @property
    def n_m_min(self) -> int:
        """Minimal number of measurement sets, ⌈n_l / n_p⌉."""
        if self.n_p == 0:
            return 0
        return math.ceil(self.n_l / self.n_p)

    @property
    def sensor_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.sensor_select.sum(axis=0))

    @property
    def unmeasured_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.sensor_complement.sum(axis=0))

    def complete_incidence(self) -> np.ndarray:
        """Stacked [-A; C̃_s], one +1 and one -1 per column."""
        return np.vstack([-self.incidence, self.source_incidence])

    def validate(self) -> None:
        """Check every structural invariant, raising TopologyError on failure."""
        n_j, n_l = self.n_j, self.n_l

        if self.source_incidence.shape[1] != n_l or self.cycle.shape[1] != n_l:
            raise TopologyError("incidence, source incidence and cycle matrices disagree on pipe count")
        if self.elevations.shape != (n_j,):
            raise TopologyError(f"expected {n_j} elevations, got {self.elevations.shape}")
        if self.sensor_select.shape[1] != n_j or self.sensor_complement.shape != (n_j - self.n_p, n_j):
            raise TopologyError("sensor selectors do not match the inner node count")

        full = self.complete_incidence()
        if not (np.all((full == 1).sum(axis=0) == 1) and np.all((full == -1).sum(axis=0) == 1)):
            raise TopologyError("every pipe needs exactly one start and one end node")

        if np.linalg.matrix_rank(self.incidence) != n_j:
            raise TopologyError("incidence matrix is rank deficient (is every node connected to a source?)")
        if self.cycle.shape[0] != n_l - n_j or (n_l > n_j and np.linalg.matrix_rank(self.cycle) != n_l - n_j):
            raise TopologyError(f"cycle matrix must have rank {n_l - n_j}")
        if np.any(self.cycle @ self.incidence.T != 0):
            raise TopologyError("cycle matrix is not in the kernel of the incidence matrix")

        selector_sum = self.sensor_select.T @ self.sensor_select + self.sensor_complement.T @ self.sensor_complement
        if not np.array_equal(selector_sum, np.eye(n_j, dtype=selector_sum.dtype)):
            raise TopologyError("sensor selectors do not partition the inner nodes")


@dataclass(frozen=True, eq=False)
class PipeCatalog:
    """Per-pipe physical parameters and fluid constants."""

    length: np.ndarray
    diameter: np.ndarray
    area: np.ndarray
    k: np.ndarray
    c_l: np.ndarray
    gravity: float
    density: float
    viscosity: float
    reference_roughness: Optional[np.ndarray] = None

    @classmethod
    def from_geometry(
        cls,
        length: Sequence[float],
        diameter: Sequence[float],
        gravity: float = settings.gravity,
        density: float = settings.fluid_density,
        viscosity: float = settings.fluid_viscosity,
        reference_roughness: Optional[Sequence[float]] = None,
    ) -> "PipeCatalog":
        length = np.asarray(length, dtype=float)
        diameter = np.asarray(diameter, dtype=float)
        if length.shape != diameter.shape:
            raise ValueError("length and diameter vectors differ in size")
        if np.any(length <= 0) or np.any(diameter <= 0):
            raise ValueError("pipe lengths and diameters must be strictly positive")

        area = np.pi * diameter**2 / 4.0
        ref = None if reference_roughness is None else np.asarray(reference_roughness, dtype=float)
        return cls(
            length=length,
            diameter=diameter,
            area=area,
            k=length / (2.0 * diameter * gravity * area**2),
            c_l=gravity * area / length,
            gravity=float(gravity),
            density=float(density),
            viscosity=float(viscosity),
            reference_roughness=ref,
        )

    @property
    def n_l(self) -> int:
        return self.length.shape[0]

    @property
    def viscous(self) -> np.ndarray:
        """Viscous term η A / (ρ d) of the Colebrook-White relation."""
        return self.viscosity * self.area / (self.density * self.diameter)

    def row(self, j: Union[int, Sequence[int]]) -> "PipeCatalog":
        """Catalog restricted to pipe(s) j, keeping the fluid constants."""
        idx = np.atleast_1d(j)
        ref = None if self.reference_roughness is None else self.reference_roughness[idx]
        return PipeCatalog(
            length=self.length[idx],
            diameter=self.diameter[idx],
            area=self.area[idx],
            k=self.k[idx],
            c_l=self.c_l[idx],
            gravity=self.gravity,
            density=self.density,
            viscosity=self.viscosity,
            reference_roughness=ref,
        )


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """One steady-state snapshot: sensed heads, consumptions, source heads (SI)."""

    id: int
    y_h: np.ndarray
    q: np.ndarray
    h_s: np.ndarray

    def check(self, topo: NetworkTopology) -> None:
        if self.y_h.shape != (topo.n_p,) or self.q.shape != (topo.n_j,) or self.h_s.shape != (topo.n_s,):
            raise ValueError(f"measurement set {self.id} does not match the network dimensions")
        if not (np.all(np.isfinite(self.y_h)) and np.all(np.isfinite(self.h_s)) and np.all(np.isfinite(self.q))):
            raise ValueError(f"measurement set {self.id} has non-finite values")


def fundamental_cycles(
    n_l: int,
    endpoints: Sequence[Tuple[str, str]],
) -> np.ndarray:
    """Cycle matrix from a BFS spanning tree, one row per chord.

    Args:
        n_l: Number of pipes
        endpoints: (from, to) labels per pipe with every source mapped to GROUND

    Returns:
        Integer matrix S with S·Aᵀ = 0
    """
    graph = nx.MultiGraph()
    graph.add_node(GROUND)
    for j, (u, v) in enumerate(endpoints):
        graph.add_edge(u, v, key=j)

    parent: Dict[str, Tuple[str, int]] = {}
    depth = {GROUND: 0}
    for u, v in nx.bfs_edges(graph, GROUND):
        pipe = min(graph[u][v].keys())
        parent[v] = (u, pipe)
        depth[v] = depth[u] + 1

    tree_pipes = {pipe for _, pipe in parent.values()}
    rows: List[np.ndarray] = []
    for j, (u, v) in enumerate(endpoints):
        if j in tree_pipes:
            continue
        row = np.zeros(n_l, dtype=int)
        row[j] = 1
        # close the loop v -> ... -> u through the tree
        a, b = v, u
        up: List[Tuple[str, str, int]] = []
        down: List[Tuple[str, str, int]] = []
        while a != b:
            if depth[a] >= depth[b]:
                p, pipe = parent[a]
                up.append((a, p, pipe))
                a = p
            else:
                p, pipe = parent[b]
                down.append((p, b, pipe))
                b = p
        for start, end, pipe in up + down[::-1]:
            row[pipe] += 1 if endpoints[pipe] == (start, end) else -1
        rows.append(row)

    if not rows:
        return np.zeros((0, n_l), dtype=int)
    return np.vstack(rows)


def network_from_document(doc: Dict[str, Any], origin: str = "<document>") -> Tuple[NetworkTopology, PipeCatalog]:
    """Build and validate topology and pipe catalog from a parsed network document."""
    try:
        nodes = doc["nodes"]
        pipes = doc["pipes"]
    except (KeyError, TypeError) as e:
        raise NetworkFileError(origin, f"missing section {e}") from e
    if not nodes or not pipes:
        raise NetworkFileError(origin, "network needs at least one node and one pipe")

    inner: List[str] = []
    sources: List[str] = []
    elevations: List[float] = []
    sensors: List[bool] = []
    source_heads: List[float] = []
    for node in nodes:
        node_id = str(node["id"])
        if node_id in inner or node_id in sources:
            raise NetworkFileError(origin, f"duplicate node id {node_id!r}")
        if node.get("source", False):
            sources.append(node_id)
            head = node.get("source_head_m")
            source_heads.append(float(head) if head is not None else np.nan)
        else:
            inner.append(node_id)
            elevations.append(float(node.get("elevation_m", 0.0)))
            sensors.append(bool(node.get("sensor", False)))

    if not sources:
        raise NetworkFileError(origin, "network has no source node")
    if not inner:
        raise NetworkFileError(origin, "network has no inner node")

    inner_index = {nid: r for r, nid in enumerate(inner)}
    source_index = {nid: r for r, nid in enumerate(sources)}
    n_j, n_s, n_l = len(inner), len(sources), len(pipes)

    A = np.zeros((n_j, n_l), dtype=int)
    Cs = np.zeros((n_s, n_l), dtype=int)
    endpoints: List[Tuple[str, str]] = []
    pipe_ids: List[str] = []
    lengths: List[float] = []
    diameters: List[float] = []
    roughness: List[Optional[float]] = []
    for j, pipe in enumerate(pipes):
        start, end = str(pipe["from"]), str(pipe["to"])
        if start == end:
            raise NetworkFileError(origin, f"pipe {pipe.get('id', j)} is a self-loop")
        for label in (start, end):
            if label not in inner_index and label not in source_index:
                raise NetworkFileError(origin, f"pipe {pipe.get('id', j)} references unknown node {label!r}")

        if start in inner_index:
            A[inner_index[start], j] = -1
        else:
            Cs[source_index[start], j] = 1
        if end in inner_index:
            A[inner_index[end], j] = 1
        else:
            Cs[source_index[end], j] = -1

        endpoints.append((start if start in inner_index else GROUND, end if end in inner_index else GROUND))
        pipe_ids.append(str(pipe.get("id", f"p{j + 1}")))
        lengths.append(float(pipe["length_m"]))
        diameters.append(float(pipe["diameter_m"]))
        roughness.append(pipe.get("roughness_m"))

    graph = nx.MultiGraph()
    graph.add_nodes_from(inner + [GROUND])
    graph.add_edges_from(endpoints)
    if not nx.is_connected(graph):
        raise TopologyError(f"{origin}: network graph is disconnected")

    if "cycle_matrix" in doc:
        S = np.asarray(doc["cycle_matrix"], dtype=int).reshape(-1, n_l)
    else:
        S = fundamental_cycles(n_l, endpoints)

    sensor_rows = [r for r, s in enumerate(sensors) if s]
    other_rows = [r for r, s in enumerate(sensors) if not s]
    eye = np.eye(n_j, dtype=int)

    topo = NetworkTopology(
        node_ids=tuple(inner),
        source_ids=tuple(sources),
        pipe_ids=tuple(pipe_ids),
        incidence=A,
        source_incidence=Cs,
        cycle=S,
        sensor_select=eye[sensor_rows].reshape(len(sensor_rows), n_j),
        sensor_complement=eye[other_rows].reshape(len(other_rows), n_j),
        elevations=np.asarray(elevations, dtype=float),
        default_source_heads=np.asarray(source_heads, dtype=float),
    )
    topo.validate()

    fluid = doc.get("fluid", {}) or {}
    reference = None
    if all(r is not None for r in roughness):
        reference = [float(r) for r in roughness]
    try:
        catalog = PipeCatalog.from_geometry(
            lengths,
            diameters,
            gravity=float(fluid.get("g", settings.gravity)),
            density=float(fluid.get("rho", settings.fluid_density)),
            viscosity=float(fluid.get("eta", settings.fluid_viscosity)),
            reference_roughness=reference,
        )
    except ValueError as e:
        raise NetworkFileError(origin, str(e)) from e

    logger.debug(
        "Network built",
        origin=origin,
        n_j=n_j,
        n_s=n_s,
        n_l=n_l,
        n_p=topo.n_p,
        cycles=S.shape[0],
    )
    return topo, catalog


def load_network(path: Union[str, Path]) -> Tuple[NetworkTopology, PipeCatalog]:
    """
    Load a JSON network file.

    Args:
        path: Network file with `nodes`, `pipes` and optional `fluid` sections

    Returns:
        Validated topology and pipe catalog
    """
    path = Path(path)
    try:
        doc = orjson.loads(path.read_bytes())
    except FileNotFoundError as e:
        raise NetworkFileError(str(path), "file not found") from e
    except orjson.JSONDecodeError as e:
        raise NetworkFileError(str(path), f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise NetworkFileError(str(path), "top level must be an object")

    topo, catalog = network_from_document(doc, origin=str(path))
    logger.info("Network loaded", path=str(path), n_j=topo.n_j, n_l=topo.n_l, n_p=topo.n_p)
    return topo, catalog


def load_measurements(path: Union[str, Path], topo: NetworkTopology) -> List[MeasurementSet]:
    """
    Load measurement sets from CSV (`set,node,y_h_m,q_lps,h_s_m`, flows in l/s).

    Args:
        path: Measurement CSV
        topo: Topology the node ids refer to

    Returns:
        Measurement sets ordered by set index, flows in m^3/s
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"node": str})
    except FileNotFoundError as e:
        raise NetworkFileError(str(path), "file not found") from e
    except pd.errors.EmptyDataError as e:
        raise NetworkFileError(str(path), "file is empty") from e

    if list(frame.columns) != MEASUREMENT_COLUMNS:
        raise NetworkFileError(
            str(path), f"expected columns {MEASUREMENT_COLUMNS}, got {list(frame.columns)}"
        )
    if frame.empty:
        raise NetworkFileError(str(path), "file has no measurement rows")

    inner_index = {nid: r for r, nid in enumerate(topo.node_ids)}
    source_index = {nid: r for r, nid in enumerate(topo.source_ids)}
    sensor_pos = {int(node): r for r, node in enumerate(topo.sensor_nodes)}

    sets: List[MeasurementSet] = []
    for set_id, rows in frame.groupby("set", sort=True):
        y_h = np.full(topo.n_p, np.nan)
        q = np.zeros(topo.n_j)
        h_s = topo.default_source_heads.astype(float).copy()
        for row in rows.itertuples(index=False):
            node = str(row.node)
            if node in inner_index:
                r = inner_index[node]
                if r in sensor_pos and not pd.isna(row.y_h_m):
                    y_h[sensor_pos[r]] = float(row.y_h_m)
                if not pd.isna(row.q_lps):
                    q[r] = float(row.q_lps) / LPS_PER_M3S
            elif node in source_index:
                if not pd.isna(row.h_s_m):
                    h_s[source_index[node]] = float(row.h_s_m)
            else:
                raise NetworkFileError(str(path), f"set {set_id} references unknown node {node!r}")

        if np.any(np.isnan(y_h)):
            missing = [topo.node_ids[topo.sensor_nodes[p]] for p in np.flatnonzero(np.isnan(y_h))]
            raise NetworkFileError(str(path), f"set {set_id} lacks sensed heads for {missing}")
        if np.any(np.isnan(h_s)):
            raise NetworkFileError(str(path), f"set {set_id} lacks source heads")
        sets.append(MeasurementSet(id=int(set_id), y_h=y_h, q=q, h_s=h_s))

    if len(sets) < topo.n_m_min:
        logger.warning(
            "Fewer measurement sets than unknowns require",
            sets=len(sets),
            n_m_min=topo.n_m_min,
        )
    logger.info("Measurements loaded", path=str(path), sets=len(sets))
    return sets


def write_measurements(
    path: Union[str, Path],
    sets: Sequence[MeasurementSet],
    topo: NetworkTopology,
) -> None:
    """Write measurement sets in the CSV layout read by load_measurements."""
    sensor_of = {int(node): p for p, node in enumerate(topo.sensor_nodes)}
    records = []
    for ms in sets:
        for r, node_id in enumerate(topo.node_ids):
            if r not in sensor_of and ms.q[r] == 0.0:
                continue
            records.append({
                "set": ms.id,
                "node": node_id,
                "y_h_m": ms.y_h[sensor_of[r]] if r in sensor_of else None,
                "q_lps": ms.q[r] * LPS_PER_M3S,
                "h_s_m": None,
            })
        for s, source_id in enumerate(topo.source_ids):
            records.append({"set": ms.id, "node": source_id, "y_h_m": None, "q_lps": None, "h_s_m": ms.h_s[s]})

    frame = pd.DataFrame.from_records(records, columns=MEASUREMENT_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info("Measurements written", path=str(path), sets=len(sets), rows=len(frame))


def head_loss(
    topo: NetworkTopology,
    z: np.ndarray,
    h_s: np.ndarray,
    y_h: np.ndarray,
    h_N: np.ndarray,
) -> np.ndarray:
    """Head loss per pipe, C̃_sᵀ h_s - Aᵀ(C_hᵀ y_h + C̄_hᵀ h_N + z)."""
    inner_heads = topo.sensor_select.T @ y_h + topo.sensor_complement.T @ h_N + z
    return topo.source_incidence.T @ h_s - topo.incidence.T @ inner_heads


def laplacian(topo: NetworkTopology, pipes: PipeCatalog) -> np.ndarray:
    """L = A diag(c_l) Aᵀ, symmetric positive definite for a valid network."""
    A = topo.incidence.astype(float)
    return (A * pipes.c_l) @ A.T


def random_network(
    rng: np.random.Generator,
    n_j: int,
    n_l: int,
    n_p: Optional[int] = None,
    diameter_range: Tuple[float, float] = (0.03, 0.1),
    length_range: Tuple[float, float] = (5.0, 50.0),
    elevation_max: float = 0.0,
) -> Tuple[NetworkTopology, PipeCatalog]:
    """
    Random connected network: a spanning tree hanging off one source plus chords.

    Args:
        rng: Random generator
        n_j: Inner nodes
        n_l: Pipes, at least n_j
        n_p: Sensors (defaults to all inner nodes)
        diameter_range: Uniform diameter range in m
        length_range: Uniform length range in m
        elevation_max: Elevations drawn uniformly from [0, elevation_max]

    Returns:
        Topology and pipe catalog with a planted reference roughness
    """
    n_p = n_j if n_p is None else n_p
    max_chords = n_j * (n_j - 1) // 2
    if n_l < n_j or n_l - n_j > max_chords:
        raise ValueError(f"cannot build a simple network with {n_j} inner nodes and {n_l} pipes")

    nodes = [{"id": "R", "source": True, "source_head_m": 100.0}]
    sensor_set = set(rng.choice(n_j, size=n_p, replace=False).tolist())
    for r in range(n_j):
        nodes.append({
            "id": f"n{r + 1}",
            "elevation_m": float(rng.uniform(0.0, elevation_max)) if elevation_max > 0 else 0.0,
            "sensor": r in sensor_set,
        })

    links = []
    for r in range(n_j):
        up = int(rng.integers(-1, r)) if r > 0 else -1
        links.append(("R" if up < 0 else f"n{up + 1}", f"n{r + 1}"))
    used = {frozenset(link) for link in links}
    free = [
        (f"n{u + 1}", f"n{v + 1}")
        for u in range(n_j)
        for v in range(u + 1, n_j)
        if frozenset((f"n{u + 1}", f"n{v + 1}")) not in used
    ]
    if n_l - n_j > len(free):
        raise ValueError(f"only {len(free)} chords fit on the drawn spanning tree, {n_l - n_j} requested")
    for c in rng.choice(len(free), size=n_l - n_j, replace=False):
        u, v = free[int(c)]
        links.append((u, v) if rng.random() < 0.5 else (v, u))

    diameters = rng.uniform(*diameter_range, size=n_l)
    pipes = [
        {
            "id": f"p{j + 1}",
            "from": start,
            "to": end,
            "length_m": float(rng.uniform(*length_range)),
            "diameter_m": float(diameters[j]),
            "roughness_m": float(rng.uniform(0.005, 0.04) * diameters[j]),
        }
        for j, (start, end) in enumerate(links)
    ]
    return network_from_document({"nodes": nodes, "pipes": pipes}, origin="<random>")
