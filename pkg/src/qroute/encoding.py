"""QUBO and Ising formulations of the TSP, the CVRP and the clustering phase.

Conventions
-----------
* A QUBO energy is ``x @ q @ x + offset`` with ``q`` symmetric, so an
  off-diagonal coupling ``c * x_i * x_j`` is stored as ``c / 2`` in both
  ``q[i, j]`` and ``q[j, i]``.
* Spins are ``z = 2x - 1`` (``z = +1`` for a set bit).
* Bitstrings are written with variable 0 first; as an integer basis index
  variable 0 is the most significant bit.

TSP layout: city 0 is pinned to position 0 and the remaining ``(n-1)**2``
bits ``x[pos, city]`` (``pos, city`` in ``1..n-1``) are stored
position-major, ``index = (pos - 1) * (n - 1) + (city - 1)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .instance import CvrpInstance, FleetPlan, TspInstance, fleet_plan


class EncodingError(ValueError):
    pass


MAX_ENUM_DIM = 34


# -- variable maps -------------------------------------------------------------


@dataclass(frozen=True)
class VariableMap:
    """Bijection between semantic variables and flat QUBO indices.

    ``kind`` is ``"tsp"`` (keys ``(pos, city)``), ``"cvrp"`` (keys
    ``("x", k, v, t)`` and ``("y", k, b)``) or ``"clustering"`` (keys
    ``("x", k, v)`` and ``("y", k, b)``). ``n`` is the node count for the
    TSP and the customer count otherwise.
    """

    kind: str
    n: int
    vehicles: int = 1
    horizon: int = 0
    slack_bits: int = 0

    @property
    def n_decision(self) -> int:
        if self.kind == "tsp":
            return (self.n - 1) ** 2
        if self.kind == "cvrp":
            return self.vehicles * self.horizon * (self.n + 1)
        if self.kind == "clustering":
            return self.vehicles * self.n
        raise EncodingError(f"unknown variable map kind {self.kind!r}")

    @property
    def dim(self) -> int:
        extra = 0 if self.kind == "tsp" else self.vehicles * self.slack_bits
        return self.n_decision + extra

    def index(self, *key) -> int:
        if self.kind == "tsp":
            pos, city = key
            m = self.n - 1
            if not (1 <= pos <= m and 1 <= city <= m):
                raise KeyError(key)
            return (pos - 1) * m + (city - 1)
        tag, k, *rest = key
        if not 0 <= k < self.vehicles:
            raise KeyError(key)
        if tag == "y":
            (b,) = rest
            if not 0 <= b < self.slack_bits:
                raise KeyError(key)
            return self.n_decision + k * self.slack_bits + b
        if self.kind == "cvrp":
            v, t = rest
            if not (0 <= v <= self.n and 1 <= t <= self.horizon):
                raise KeyError(key)
            return (k * self.horizon + (t - 1)) * (self.n + 1) + v
        (v,) = rest
        if not 1 <= v <= self.n:
            raise KeyError(key)
        return k * self.n + (v - 1)

    def key(self, index: int) -> tuple:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        if self.kind == "tsp":
            m = self.n - 1
            return (index // m + 1, index % m + 1)
        if index >= self.n_decision:
            k, b = divmod(index - self.n_decision, self.slack_bits)
            return ("y", k, b)
        if self.kind == "cvrp":
            block, v = divmod(index, self.n + 1)
            k, t0 = divmod(block, self.horizon)
            return ("x", k, v, t0 + 1)
        k, v0 = divmod(index, self.n)
        return ("x", k, v0 + 1)


def slack_bit_count(capacity: int) -> int:
    """Bits needed to encode a slack in ``0..C``: ``ceil(log2(C + 1))``."""
    return max(1, math.ceil(math.log2(capacity + 1)))


# -- QUBO model ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuboProblem:
    q: np.ndarray
    offset: float
    varmap: VariableMap | None = None
    scaling: float = 1.0
    penalty: dict = field(default_factory=dict)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise EncodingError("QUBO matrix must be square")
        if not np.allclose(q, q.T, rtol=0, atol=1e-12):
            raise EncodingError("QUBO matrix must be symmetric")
        q = (q + q.T) / 2
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "offset", float(self.offset))
        if self.varmap is not None and self.varmap.dim != q.shape[0]:
            raise EncodingError("variable map does not match the matrix size")

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def energy(self, x) -> float:
        return qubo_energy(self, x)

    def energies(self) -> np.ndarray:
        """Energies of all ``2**dim`` basis states, indexed MSB-first."""
        return all_energies(self.q, self.offset)


def _as_bits(x, dim: int) -> np.ndarray:
    if isinstance(x, str):
        x = [int(c) for c in x]
    arr = np.asarray(x)
    if arr.shape != (dim,):
        raise EncodingError(f"expected a bitstring of length {dim}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise EncodingError("bitstring entries must be 0 or 1")
    return arr.astype(float)


def bits_to_str(x) -> str:
    return "".join(str(int(b)) for b in x)


def index_to_bits(index: int, dim: int) -> np.ndarray:
    return np.array([(index >> (dim - 1 - i)) & 1 for i in range(dim)], dtype=np.int8)


def bits_to_index(x) -> int:
    if isinstance(x, str):
        return int(x, 2) if x else 0
    out = 0
    for b in x:
        out = (out << 1) | int(b)
    return out


def qubo_energy(qubo: QuboProblem, x) -> float:
    """``x @ q @ x + offset`` for a single bitstring."""
    xb = _as_bits(x, qubo.dim)
    return float(xb @ qubo.q @ xb + qubo.offset)


class _Builder:
    """Accumulates linear, quadratic and constant terms into a symmetric matrix."""

    def __init__(self, dim: int):
        self.q = np.zeros((dim, dim))
        self.const = 0.0

    def linear(self, i: int, c: float):
        self.q[i, i] += c

    def pair(self, i: int, j: int, c: float):
        if i == j:  # x_i^2 == x_i
            self.q[i, i] += c
        else:
            self.q[i, j] += c / 2
            self.q[j, i] += c / 2

    def square(self, terms, const: float, weight: float = 1.0):
        """Add ``weight * (const + sum(c_i x_i))**2``."""
        terms = list(terms)
        self.const += weight * const * const
        for i, c in terms:
            self.linear(i, weight * (2 * const * c + c * c))
        for (i, ci), (j, cj) in itertools.combinations(terms, 2):
            self.pair(i, j, weight * 2 * ci * cj)


# -- TSP -----------------------------------------------------------------------


def _tsp_parts(inst: TspInstance) -> tuple[_Builder, _Builder, VariableMap]:
    """Unscaled distance and constraint parts of the TSP model."""
    n = inst.n
    vm = VariableMap("tsp", n)
    m = n - 1
    D = inst.distances
    dist, pen = _Builder(vm.dim), _Builder(vm.dim)
    # city 0 sits at position 0: edges to positions 1 and n-1 become linear
    for c in range(1, n):
        dist.linear(vm.index(1, c), D[0, c])
        dist.linear(vm.index(m, c), D[c, 0])
    for pos in range(1, m):
        for a in range(1, n):
            for b in range(1, n):
                if a != b:
                    dist.pair(vm.index(pos, a), vm.index(pos + 1, b), D[a, b])
    for pos in range(1, n):
        pen.square([(vm.index(pos, c), 1.0) for c in range(1, n)], -1.0)
    for c in range(1, n):
        pen.square([(vm.index(pos, c), 1.0) for pos in range(1, n)], -1.0)
    return dist, pen, vm


def build_tsp_qubo(inst: TspInstance, s: float = 1.0, P: float = 100.0) -> QuboProblem:
    """One-hot TSP model on ``(n-1)**2`` bits.

    ``energy(x) = s * (d(x) + P / 2 * v(x))`` with ``d`` the distance term and
    ``v`` the violation weight. This is the usual penalty tensor (diagonal
    ``-2sP``, row/column couplings ``sP``, distance couplings summed over both
    orderings of every pair) divided by two, so a feasible bitstring has
    energy exactly ``s`` times its tour length while ``P`` keeps the units of
    the tensor form.
    """
    if s <= 0 or P <= 0:
        raise EncodingError("scaling s and penalty P must be positive")
    dist, pen, vm = _tsp_parts(inst)
    q = s * (dist.q + 0.5 * P * pen.q)
    offset = s * (dist.const + 0.5 * P * pen.const)
    return QuboProblem(q, offset, vm, scaling=s, penalty={"P": float(P)})


def encode_tsp_path(path: Sequence[int]) -> str:
    """Bitstring for a tour given as a permutation of ``0..n-1`` starting at 0."""
    path = [int(c) for c in path]
    n = len(path)
    if n < 3 or path[0] != 0 or sorted(path) != list(range(n)):
        raise EncodingError(f"not a tour starting at city 0: {path}")
    vm = VariableMap("tsp", n)
    bits = ["0"] * vm.dim
    for pos, city in enumerate(path[1:], start=1):
        bits[vm.index(pos, city)] = "1"
    return "".join(bits)


def _tsp_grid(x, n: int) -> np.ndarray:
    m = n - 1
    return _as_bits(x, m * m).reshape(m, m)


def violation_weight(x, varmap: VariableMap) -> int:
    """Sum of squared row and column deficits of the one-hot grid."""
    if varmap.kind != "tsp":
        raise EncodingError("violation weight is defined for TSP maps only")
    g = _tsp_grid(x, varmap.n)
    return int(((1 - g.sum(axis=1)) ** 2).sum() + ((1 - g.sum(axis=0)) ** 2).sum())


@dataclass(frozen=True)
class TspDecoding:
    tour: tuple | None
    violation: int

    @property
    def feasible(self) -> bool:
        return self.tour is not None


def decode_tsp(x, n: int) -> TspDecoding:
    g = _tsp_grid(x, n)
    v = violation_weight(x, VariableMap("tsp", n))
    if v:
        return TspDecoding(None, v)
    cities = np.argmax(g, axis=1) + 1
    return TspDecoding((0,) + tuple(int(c) for c in cities), 0)


def tsp_model_parts(inst: TspInstance) -> tuple[QuboProblem, QuboProblem]:
    """Unscaled distance term ``d(x)`` and violation weight ``v(x)`` as QUBOs."""
    dist, pen, vm = _tsp_parts(inst)
    return QuboProblem(dist.q, dist.const, vm), QuboProblem(pen.q, pen.const, vm)


def tsp_distance_term(x, inst: TspInstance) -> float:
    """Distance part of the model (no scaling, no penalty) for any bitstring."""
    return qubo_energy(tsp_model_parts(inst)[0], x)


@lru_cache(maxsize=16)
def tsp_feasible_states(n: int) -> tuple[np.ndarray, tuple]:
    """Basis indices of all ``(n-1)!`` feasible states and their tours."""
    m = n - 1
    tours = tuple((0,) + p for p in itertools.permutations(range(1, n)))
    idx = np.empty(len(tours), dtype=np.int64)
    for k, t in enumerate(tours):
        i = 0
        for pos, city in enumerate(t[1:], start=1):
            i |= 1 << (m * m - 1 - ((pos - 1) * m + (city - 1)))
        idx[k] = i
    idx.setflags(write=False)
    return idx, tours


# -- CVRP ----------------------------------------------------------------------


def build_cvrp_qubo(inst: CvrpInstance, plan: FleetPlan | None = None,
                    P1: float = 100.0, P2: float = 100.0, P3: float = 100.0,
                    s: float = 1.0) -> QuboProblem:
    """Full CVRP model ``H_obj + P1*H_C1 + P2*H_C2 + P3*H_C3``.

    Each vehicle starts and ends at the depot; those two stops are fixed
    constants outside the ``T`` free time steps, so the depot edges at the
    ends of a route enter as linear terms. An idle time step is spent at the
    depot (``v = 0``).
    """
    plan = plan or fleet_plan(inst)
    if min(P1, P2, P3) <= 0:
        raise EncodingError("penalties must be positive")
    if plan.vehicles < 1 or plan.horizon < 1:
        raise EncodingError(f"invalid fleet plan {plan}")
    if plan.vehicles * plan.horizon < inst.n:
        raise EncodingError(f"fleet plan {plan} cannot visit {inst.n} customers")
    n, K, T = inst.n, plan.vehicles, plan.horizon
    nb = slack_bit_count(inst.capacity)
    vm = VariableMap("cvrp", n, K, T, nb)
    D = inst.distances
    obj, c1, c2, c3 = (_Builder(vm.dim) for _ in range(4))
    for k in range(K):
        for v in range(1, n + 1):
            obj.linear(vm.index("x", k, v, 1), D[0, v])
            obj.linear(vm.index("x", k, v, T), D[v, 0])
        for t in range(1, T):
            for a in range(n + 1):
                for b in range(n + 1):
                    if D[a, b]:
                        obj.pair(vm.index("x", k, a, t), vm.index("x", k, b, t + 1), D[a, b])
    for v in range(1, n + 1):
        c1.square([(vm.index("x", k, v, t), 1.0) for k in range(K) for t in range(1, T + 1)], -1.0)
    for k in range(K):
        for t in range(1, T + 1):
            c2.square([(vm.index("x", k, v, t), 1.0) for v in range(n + 1)], -1.0)
    for k in range(K):
        terms = [(vm.index("x", k, v, t), float(inst.demands[v]))
                 for t in range(1, T + 1) for v in range(1, n + 1)]
        terms += [(vm.index("y", k, b), float(2 ** b)) for b in range(nb)]
        c3.square(terms, -float(inst.capacity))
    q = s * (obj.q + P1 * c1.q + P2 * c2.q + P3 * c3.q)
    off = s * (obj.const + P1 * c1.const + P2 * c2.const + P3 * c3.const)
    return QuboProblem(q, off, vm, scaling=s, penalty={"P1": P1, "P2": P2, "P3": P3})


def encode_cvrp(routes: Sequence[Sequence[int]], inst: CvrpInstance, plan: FleetPlan) -> np.ndarray:
    """Bitstring for per-vehicle customer sequences, with matching slack bits."""
    nb = slack_bit_count(inst.capacity)
    vm = VariableMap("cvrp", inst.n, plan.vehicles, plan.horizon, nb)
    if len(routes) > plan.vehicles:
        raise EncodingError("more routes than vehicles")
    x = np.zeros(vm.dim, dtype=np.int8)
    for k in range(plan.vehicles):
        route = list(routes[k]) if k < len(routes) else []
        if len(route) > plan.horizon:
            raise EncodingError(f"route {route} longer than the horizon")
        for t in range(1, plan.horizon + 1):
            v = route[t - 1] if t <= len(route) else 0
            x[vm.index("x", k, v, t)] = 1
        slack = inst.capacity - sum(inst.demands[v] for v in route)
        if slack < 0:
            raise EncodingError(f"route {route} exceeds the capacity")
        for b in range(nb):
            x[vm.index("y", k, b)] = (slack >> b) & 1
    return x


def decode_cvrp(x, varmap: VariableMap) -> list[list[int]] | None:
    """Per-vehicle customer sequences, or ``None`` when C1 or C2 is violated."""
    xb = _as_bits(x, varmap.dim).astype(int)
    n, K, T = varmap.n, varmap.vehicles, varmap.horizon
    routes, seen = [], []
    for k in range(K):
        route = []
        for t in range(1, T + 1):
            active = [v for v in range(n + 1) if xb[varmap.index("x", k, v, t)]]
            if len(active) != 1:
                return None
            if active[0]:
                route.append(active[0])
        routes.append(route)
        seen += route
    if sorted(seen) != list(range(1, n + 1)):
        return None
    return routes


def routes_length(routes, distances: np.ndarray) -> float:
    total = 0.0
    for r in routes:
        path = [0] + list(r) + [0]
        total += sum(distances[a, b] for a, b in zip(path, path[1:]))
    return float(total)


# -- clustering ----------------------------------------------------------------


def build_clustering_qubo(inst: CvrpInstance, P1: float = 100.0, P2: float = 100.0,
                          p: float = 1.0, vehicles: int | None = None) -> QuboProblem:
    """Capacitated clustering (multiple knapsack) model.

    The intra-cluster distance term sums over ordered customer pairs and is
    weighted by ``P3 = p * K / n`` so it approximates one route length per
    cluster.
    """
    if min(P1, P2, p) <= 0:
        raise EncodingError("penalties and p must be positive")
    n = inst.n
    K = vehicles or fleet_plan(inst).vehicles
    nb = slack_bit_count(inst.capacity)
    vm = VariableMap("clustering", n, K, 0, nb)
    P3 = p * K / n
    D = inst.distances
    cap, assign, dist = (_Builder(vm.dim) for _ in range(3))
    for k in range(K):
        terms = [(vm.index("x", k, v), float(inst.demands[v])) for v in range(1, n + 1)]
        terms += [(vm.index("y", k, b), float(2 ** b)) for b in range(nb)]
        cap.square(terms, -float(inst.capacity))
    for v in range(1, n + 1):
        assign.square([(vm.index("x", k, v), 1.0) for k in range(K)], -1.0)
    for k in range(K):
        for u in range(1, n + 1):
            for v in range(1, n + 1):
                if u != v:
                    dist.pair(vm.index("x", k, u), vm.index("x", k, v), D[u, v])
    q = P1 * cap.q + P2 * assign.q + P3 * dist.q
    off = P1 * cap.const + P2 * assign.const + P3 * dist.const
    return QuboProblem(q, off, vm, penalty={"P1": P1, "P2": P2, "P3": P3})


def encode_clustering(clusters: Sequence[Sequence[int]], inst: CvrpInstance,
                      vehicles: int) -> np.ndarray:
    nb = slack_bit_count(inst.capacity)
    vm = VariableMap("clustering", inst.n, vehicles, 0, nb)
    x = np.zeros(vm.dim, dtype=np.int8)
    for k, members in enumerate(clusters):
        for v in members:
            x[vm.index("x", k, v)] = 1
        slack = inst.capacity - sum(inst.demands[v] for v in members)
        if slack < 0:
            raise EncodingError(f"cluster {list(members)} exceeds the capacity")
        for b in range(nb):
            x[vm.index("y", k, b)] = (slack >> b) & 1
    return x


# -- Ising ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IsingHamiltonian:
    """``constant + sum h_i z_i + sum_{i<j} J_ij z_i z_j`` with ``J`` strictly upper."""

    h: np.ndarray
    J: np.ndarray
    constant: float

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        J = np.triu(np.array(self.J, dtype=float), 1)
        if J.shape != (h.size, h.size):
            raise EncodingError("coupling matrix does not match the field vector")
        h.setflags(write=False)
        J.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def dim(self) -> int:
        return self.h.size

    def energy(self, z) -> float:
        return ising_energy(self, z)

    def energies(self) -> np.ndarray:
        """Energies of all basis states; bit 1 means spin +1."""
        return ising_to_qubo(self).energies()


def qubo_to_ising(qubo: QuboProblem) -> IsingHamiltonian:
    q = qubo.q
    diag = np.diag(q)
    off = q - np.diag(diag)
    h = diag / 2 + off.sum(axis=1) / 2
    J = np.triu(off, 1) / 2  # 2 q_ij x_i x_j -> (q_ij / 2) z_i z_j + linear + const
    const = qubo.offset + diag.sum() / 2 + np.triu(off, 1).sum() / 2
    return IsingHamiltonian(h, J, const)


def ising_to_qubo(ham: IsingHamiltonian) -> QuboProblem:
    """Inverse substitution ``z = 2x - 1``."""
    J = ham.J
    Js = J + J.T
    q = 2 * Js  # 4 J_ij x_i x_j split over both triangles
    q[np.diag_indices_from(q)] = 2 * ham.h - 2 * Js.sum(axis=1)
    const = ham.constant - ham.h.sum() + J.sum()
    return QuboProblem(q, const)


def ising_energy(ham: IsingHamiltonian, z) -> float:
    z = np.asarray([int(c) for c in z] if isinstance(z, str) else z, dtype=float)
    if z.shape != (ham.dim,):
        raise EncodingError(f"expected {ham.dim} spins, got shape {z.shape}")
    if not np.all(np.abs(z) == 1):
        raise EncodingError("spins must be +1 or -1")
    return float(ham.constant + ham.h @ z + z @ ham.J @ z)


# -- enumeration ---------------------------------------------------------------


def _linear_form_table(coeffs: np.ndarray) -> np.ndarray:
    """``sum_j coeffs[j] * bit_j(i)`` for every index ``i`` (bit 0 = MSB)."""
    out = np.zeros(1)
    for c in coeffs:
        out = (out[:, None] + np.array([0.0, c])).ravel()
    return out


def all_energies(q: np.ndarray, offset: float = 0.0) -> np.ndarray:
    """All ``2**d`` energies in ``O(2**d)`` memory and time, MSB-first."""
    d = q.shape[0]
    if d > MAX_ENUM_DIM:
        raise EncodingError(f"refusing to enumerate 2**{d} states")
    energies = np.array([float(offset)])
    for k in range(d):
        field_k = q[k, k] + 2 * _linear_form_table(q[:k, k])
        energies = (energies[:, None] + np.outer(field_k, [0.0, 1.0])).ravel()
    return energies


def iter_energy_chunks(qubo: QuboProblem, chunk_bits: int = 20) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(start_index, energies)`` blocks covering all basis states.

    The leading ``dim - chunk_bits`` variables are fixed per block, so peak
    memory is ``2**chunk_bits`` floats regardless of ``dim``.
    """
    q, d = qubo.q, qubo.dim
    if d > MAX_ENUM_DIM:
        raise EncodingError(f"refusing to enumerate 2**{d} states")
    lo = min(d, chunk_bits)
    hi = d - lo
    q_low = q[hi:, hi:]
    base = all_energies(q_low, 0.0)
    for h in range(2 ** hi):
        xh = index_to_bits(h, hi).astype(float) if hi else np.zeros(0)
        e_hi = float(xh @ q[:hi, :hi] @ xh) + qubo.offset
        cross = 2 * (xh @ q[:hi, hi:]) if hi else np.zeros(lo)
        yield h << lo, base + e_hi + _linear_form_table(cross)
