"""Problem instances for the TSP and the capacitated vehicle routing problem.

Instances are plain frozen dataclasses around a symmetric distance matrix.
Node 0 is always the depot. Instance files use a small canonical JSON
format (see :func:`save_instance`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path


class InstanceError(ValueError):
    """Raised for malformed or infeasible instances."""


def _check_distances(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InstanceError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InstanceError("distance matrix contains non-finite entries")
    if np.any(d < 0):
        raise InstanceError("distances must be nonnegative")
    if np.any(np.diag(d) != 0):
        raise InstanceError("distance matrix must have a zero diagonal")
    if not np.array_equal(d, d.T):
        i, j = np.argwhere(d != d.T)[0]
        raise InstanceError(
            f"distance matrix is not symmetric: d[{i}][{j}]={d[i, j]} != d[{j}][{i}]={d[j, i]}"
        )
    d = d.copy()
    d.setflags(write=False)
    return d


@dataclass(frozen=True, eq=False)
class TspInstance:
    """Complete undirected weighted graph on ``n`` nodes."""

    name: str
    distances: np.ndarray
    note: str = ""

    def __post_init__(self):
        d = _check_distances(self.distances)
        if d.shape[0] < 3:
            raise InstanceError(f"a TSP instance needs n >= 3 nodes, got {d.shape[0]}")
        object.__setattr__(self, "distances", d)

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    def tour_length(self, tour: Sequence[int]) -> float:
        """Length of the closed cycle visiting ``tour`` in order."""
        t = list(tour)
        return float(sum(self.distances[a, b] for a, b in zip(t, t[1:] + t[:1])))

    def __eq__(self, other):
        if not isinstance(other, TspInstance):
            return NotImplemented
        return self.name == other.name and np.array_equal(self.distances, other.distances)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CvrpInstance:
    """CVRP on nodes ``0..n`` with node 0 the depot and ``n`` customers."""

    base: TspInstance
    demands: tuple
    capacity: int

    def __post_init__(self):
        demands = tuple(int(x) for x in self.demands)
        if len(demands) != self.base.n:
            raise InstanceError(
                f"expected {self.base.n} demands (one per node), got {len(demands)}"
            )
        if demands[0] != 0:
            raise InstanceError("the depot (node 0) must have demand 0")
        if int(self.capacity) < 1:
            raise InstanceError("capacity must be a positive integer")
        for v, dv in enumerate(demands[1:], start=1):
            if dv < 1:
                raise InstanceError(f"customer {v} has non-positive demand {dv}")
            if dv > self.capacity:
                raise InstanceError(
                    f"customer {v} demand {dv} exceeds vehicle capacity {self.capacity}"
                )
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def n(self) -> int:
        """Number of customers (the depot is not counted)."""
        return self.base.n - 1

    @property
    def distances(self) -> np.ndarray:
        return self.base.distances

    def __eq__(self, other):
        if not isinstance(other, CvrpInstance):
            return NotImplemented
        return (
            self.base == other.base
            and self.demands == other.demands
            and self.capacity == other.capacity
        )

    __hash__ = None


@dataclass(frozen=True)
class FleetPlan:
    vehicles: int
    horizon: int


def fleet_plan(inst: CvrpInstance) -> FleetPlan:
    """Vehicle count ``ceil(sum(d) / C)`` and worst-case horizon ``T = n``."""
    total = sum(inst.demands)
    return FleetPlan(vehicles=max(1, math.ceil(total / inst.capacity)), horizon=inst.n)


# -- serialization -------------------------------------------------------------


def _plain_number(x: float):
    x = float(x)
    return int(x) if x.is_integer() else x


def instance_to_dict(inst) -> dict:
    if isinstance(inst, CvrpInstance):
        base, demands, capacity = inst.base, list(inst.demands), inst.capacity
    else:
        base, demands, capacity = inst, None, None
    doc = {
        "name": base.name,
        "nodes": base.n,
        "depot": 0,
        "distances": [[_plain_number(v) for v in row] for row in base.distances],
    }
    if demands is not None:
        doc["demands"] = demands
        doc["capacity"] = capacity
    if base.note:
        doc["note"] = base.note
    return doc


def dumps_instance(inst) -> str:
    """Canonical JSON text: sorted keys, one matrix row per line."""
    doc = instance_to_dict(inst)
    lines = []
    for key in sorted(doc):
        if key == "distances":
            rows = ",\n".join("    " + json.dumps(r) for r in doc[key])
            lines.append(f'  "distances": [\n{rows}\n  ]')
        else:
            lines.append(f"  {json.dumps(key)}: {json.dumps(doc[key])}")
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_instance(inst, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def instance_from_dict(doc: dict):
    """Build a :class:`CvrpInstance` (or :class:`TspInstance` when no demands)."""
    try:
        name = str(doc["name"])
        nodes = int(doc["nodes"])
        distances = np.array(doc["distances"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    if int(doc.get("depot", 0)) != 0:
        raise InstanceError("only depot = 0 is supported")
    if distances.shape != (nodes, nodes):
        raise InstanceError(
            f"'nodes' is {nodes} but distance matrix has shape {distances.shape}"
        )
    base = TspInstance(name, distances, note=str(doc.get("note", "")))
    if doc.get("demands") is None:
        return base
    if "capacity" not in doc:
        raise InstanceError("instance with demands must specify a capacity")
    return CvrpInstance(base, tuple(doc["demands"]), int(doc["capacity"]))


def load_instance(path):
    """Load and validate an instance JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


# -- generators ----------------------------------------------------------------


def generate_random_tsp(n: int, seed: int, low: float = 10, high: float = 50,
                        euclidean: bool = False) -> TspInstance:
    """Random symmetric integer distances in ``[low, high]``.

    With ``euclidean=True`` the nodes are points drawn uniformly from a
    square of side ``high`` and distances are rounded Euclidean lengths
    (clipped below at ``low``), which gives near-metric instances.
    """
    if n < 3:
        raise InstanceError(f"n must be at least 3, got {n}")
    if not (0 < low <= high):
        raise InstanceError(f"invalid distance range [{low}, {high}]")
    rng = np.random.default_rng(seed)
    if euclidean:
        pts = rng.uniform(0, high, size=(n, 2))
        d = np.rint(np.linalg.norm(pts[:, None] - pts[None], axis=-1))
        d = np.clip(d, low, None)
    else:
        d = rng.integers(int(math.ceil(low)), int(math.floor(high)) + 1, size=(n, n)).astype(float)
        d = np.triu(d, 1)
        d = d + d.T
    np.fill_diagonal(d, 0)
    kind = "euclid" if euclidean else "uniform"
    return TspInstance(f"random-{kind}-n{n}-s{seed}", d)


def extract_cluster_tsp(inst: CvrpInstance, customers: Sequence[int]) -> TspInstance:
    """TSP over the depot plus ``customers`` (in the given order)."""
    nodes = [0] + [int(c) for c in customers]
    if len(set(nodes)) != len(nodes):
        raise InstanceError("customer subset contains duplicates or the depot")
    bad = [c for c in nodes if not 0 <= c < inst.base.n]
    if bad:
        raise InstanceError(f"unknown node index {bad[0]}")
    sub = inst.distances[np.ix_(nodes, nodes)]
    label = "-".join(str(c) for c in customers)
    return TspInstance(f"{inst.name}[{label}]", sub, note=inst.base.note)


# -- sample 11-node CVRP ------------------------------------------------------

SAMPLE_DEMANDS = (0, 1, 3, 2, 2, 2, 5, 2, 1, 5, 5)
SAMPLE_CAPACITY = 10
# known route edges; customers numbered along each route
SAMPLE_ROUTES = (
    ((0, 1, 10), (1, 2, 21), (2, 3, 33), (3, 4, 42), (4, 5, 47), (5, 0, 38)),
    ((0, 6, 31), (6, 7, 45), (7, 8, 20), (8, 0, 30)),
    ((0, 9, 42), (9, 10, 15), (10, 0, 30)),
)
SAMPLE_BLUE = (1, 2, 3, 4, 5)
SAMPLE_NOTE = (
    "completion: only the route edges are known; every other pair is the "
    "shortest-path distance through those edges"
)


def sample_cvrp() -> CvrpInstance:
    """Sample 11-node CVRP with three routes and a completed matrix."""
    n = len(SAMPLE_DEMANDS)
    w = np.zeros((n, n))
    for route in SAMPLE_ROUTES:
        for a, b, weight in route:
            w[a, b] = w[b, a] = weight
    d = shortest_path(w, method="FW", directed=False)
    base = TspInstance("sample-cvrp", np.rint(d), note=SAMPLE_NOTE)
    return CvrpInstance(base, SAMPLE_DEMANDS, SAMPLE_CAPACITY)


def blue_route_tsp(n: int = 6) -> TspInstance:
    """``n``-node TSP on the depot and the first ``n - 1`` blue-route customers."""
    if not 3 <= n <= 6:
        raise InstanceError(f"blue-route supports 3 <= n <= 6, got {n}")
    sub = extract_cluster_tsp(sample_cvrp(), SAMPLE_BLUE[: n - 1])
    return TspInstance(f"blue-route-n{n}", sub.distances, note=SAMPLE_NOTE)
