"""Brute-force ground truth for the small instances used in experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .encoding import (
    QuboProblem,
    bits_to_str,
    build_tsp_qubo,
    index_to_bits,
    iter_energy_chunks,
    tsp_feasible_states,
    tsp_model_parts,
)
from .instance import CvrpInstance, TspInstance, fleet_plan, generate_random_tsp


class BoundError(ValueError):
    """Requested computation exceeds the enumeration bound."""


MAX_TSP_NODES = 12
MAX_SPECTRUM_DIM = 26
FULL_SPECTRUM_DIM = 20
MAX_PMIN_NODES = 9
MAX_CVRP_CUSTOMERS = 8


def _level_tol(e: float) -> float:
    return 1e-9 * max(1.0, abs(e))


# -- TSP -----------------------------------------------------------------------


def optimal_tsp(inst: TspInstance, max_n: int = MAX_TSP_NODES) -> tuple[tuple, float]:
    """Exhaustive search over direction-reduced tours.

    Returns the lexicographically smallest optimal tour (as a city sequence
    starting at 0) and its length.
    """
    n = inst.n
    if n > max_n:
        raise BoundError(f"optimal_tsp enumerates (n-1)!/2 tours; n={n} exceeds {max_n}")
    D = inst.distances
    best_len, best = math.inf, None
    for first in range(1, n):
        rest = [c for c in range(1, n) if c != first]
        if not rest:
            continue
        perms = np.array(list(itertools.permutations(rest)), dtype=np.intp)
        # keep one direction: first city smaller than last
        perms = perms[perms[:, -1] > first]
        if perms.size == 0:
            continue
        lengths = D[0, first] + D[first, perms[:, 0]] + D[perms[:, -1], 0]
        for k in range(perms.shape[1] - 1):
            lengths = lengths + D[perms[:, k], perms[:, k + 1]]
        k = int(np.argmin(lengths))  # first minimum = lexicographically smallest
        if lengths[k] < best_len - _level_tol(best_len if best is not None else 0.0):
            best_len = float(lengths[k])
            best = (0, first) + tuple(int(c) for c in perms[k])
    return best, best_len


def all_tour_lengths(inst: TspInstance) -> np.ndarray:
    """Lengths of all ``(n-1)!`` feasible states in :func:`tsp_feasible_states` order."""
    _, tours = tsp_feasible_states(inst.n)
    t = np.array(tours, dtype=np.intp)
    D = inst.distances
    return D[t, np.roll(t, -1, axis=1)].sum(axis=1)


def uniform_baseline(inst: TspInstance) -> tuple[float, float]:
    """Metric pair ``(c, f)`` of the uniform superposition over all bitstrings."""
    n = inst.n
    if n > 10:
        raise BoundError("uniform baseline enumerates all (n-1)! tours")
    f = math.factorial(n - 1) / 2.0 ** ((n - 1) ** 2)
    lengths = all_tour_lengths(inst)
    mean = lengths.mean()
    c = 1.0 if mean == 0 else float(lengths.min() / mean)
    return c, f


# -- spectra -------------------------------------------------------------------


@dataclass
class Spectrum:
    energies: np.ndarray  # ascending; all 2**dim values, or the lowest k
    ground_states: list
    gap: float
    minimum: float
    maximum: float
    complete: bool

    @property
    def width(self) -> float:
        return self.maximum - self.minimum


def _distinct_gap(sorted_e: np.ndarray) -> float:
    e0 = sorted_e[0]
    above = sorted_e[sorted_e > e0 + _level_tol(e0)]
    return float(above[0] - e0) if above.size else 0.0


def enumerate_spectrum(qubo: QuboProblem, top_k: int = 1024,
                       max_dim: int = MAX_SPECTRUM_DIM) -> Spectrum:
    """Exhaustive spectrum of a QUBO.

    Up to ``FULL_SPECTRUM_DIM`` variables the full sorted spectrum is kept;
    beyond that only the ``top_k`` lowest energies are streamed, along with
    the exact minimum and maximum.
    """
    d = qubo.dim
    if d > max_dim:
        raise BoundError(f"spectrum enumeration limited to {max_dim} variables, got {d}")
    if d <= FULL_SPECTRUM_DIM:
        e = qubo.energies()
        order = np.argsort(e, kind="stable")
        es = e[order]
        ground = order[es <= es[0] + _level_tol(es[0])]
        return Spectrum(es, [bits_to_str(index_to_bits(int(i), d)) for i in ground],
                        _distinct_gap(es), float(es[0]), float(es[-1]), True)
    lo_e = np.empty(0)
    lo_i = np.empty(0, dtype=np.int64)
    emax = -math.inf
    for start, e in iter_energy_chunks(qubo):
        emax = max(emax, float(e.max()))
        k = min(top_k, e.size)
        part = np.argpartition(e, k - 1)[:k]
        lo_e = np.concatenate([lo_e, e[part]])
        lo_i = np.concatenate([lo_i, part.astype(np.int64) + start])
        if lo_e.size > top_k:
            keep = np.lexsort((lo_i, lo_e))[:top_k]
            lo_e, lo_i = lo_e[keep], lo_i[keep]
    order = np.lexsort((lo_i, lo_e))
    lo_e, lo_i = lo_e[order], lo_i[order]
    ground = lo_i[lo_e <= lo_e[0] + _level_tol(lo_e[0])]
    return Spectrum(lo_e, [bits_to_str(index_to_bits(int(i), d)) for i in ground],
                    _distinct_gap(lo_e), float(lo_e[0]), emax, False)


def scaling_ground_state_gap(qubo: QuboProblem, mixer_gap: float = 2.0) -> float:
    """Factor that maps the lowest spectral gap onto the single-flip mixer gap."""
    gap = enumerate_spectrum(qubo).gap
    if gap <= 0:
        raise ValueError("spectrum is fully degenerate; the ground-state gap is undefined")
    return mixer_gap / gap


def scaling_spectral_width(qubo: QuboProblem) -> float:
    """Factor that matches the spectral width to that of ``sum_j X_j`` (``2q``)."""
    spec = enumerate_spectrum(qubo)
    if spec.width <= 0:
        raise ValueError("spectrum is fully degenerate; the width is zero")
    return 2.0 * qubo.dim / spec.width


# -- penalty threshold ---------------------------------------------------------


def _partial_assignments(m: int):
    """All partial permutation grids as position -> city arrays (0 = empty)."""
    for k in range(m):  # k < m filled positions: always infeasible
        for positions in itertools.combinations(range(m), k):
            pos = np.array(positions, dtype=np.intp)
            perms = list(itertools.permutations(range(1, m + 1), k))
            cities = np.array(perms, dtype=np.intp).reshape(len(perms), k)
            a = np.zeros((cities.shape[0], m), dtype=np.intp)
            a[:, pos] = cities
            yield k, a


def p_min(inst: TspInstance, max_n: int = MAX_PMIN_NODES) -> float:
    """Smallest penalty for which the global minimum is a feasible tour.

    ``P_min = max_x 2 (L_opt - d(x)) / v(x)`` over infeasible ``x`` (the
    model charges ``P / 2`` per unit of violation). Removing a
    bit from a row or column holding two or more never raises ``d`` nor
    ``v``, so the maximum is attained on partial permutation grids (at most
    one bit per row and column), which are enumerated here. The result is
    independent of the scaling ``s``.
    """
    n = inst.n
    if n > max_n:
        raise BoundError(f"p_min enumeration limited to n <= {max_n}, got {n}")
    m = n - 1
    L = optimal_tsp(inst)[1]
    D = inst.distances
    best = 0.0
    for k, a in _partial_assignments(m):
        full = np.concatenate([np.zeros((a.shape[0], 1), dtype=np.intp), a], axis=1)
        nxt = np.roll(full, -1, axis=1)
        both = (full > 0) | (np.arange(n) == 0)
        both = both & np.roll(both, -1, axis=1)
        d = np.where(both, D[full, nxt], 0.0).sum(axis=1)
        best = max(best, float(((L - d) / (m - k)).max()))  # v = 2 (m - k)
    return best


def p_min_enumerate(inst: TspInstance) -> float:
    """Same quantity by full enumeration of all ``2**((n-1)**2)`` bitstrings."""
    if (inst.n - 1) ** 2 > MAX_SPECTRUM_DIM:
        raise BoundError("full enumeration limited to n <= 6")
    dist, viol = tsp_model_parts(inst)
    L = optimal_tsp(inst)[1]
    best = 0.0
    for (_, d), (_, v) in zip(iter_energy_chunks(dist), iter_energy_chunks(viol)):
        mask = v > 0.5
        if mask.any():
            best = max(best, float((2 * (L - d[mask]) / v[mask]).max()))
    return best


def ground_state_is_feasible(inst: TspInstance, P: float, rel_tol: float = 1e-9) -> bool:
    """Whether some feasible tour is among the minimum-energy states at penalty ``P``."""
    qubo = build_tsp_qubo(inst, 1.0, P)
    e = qubo.energies()
    idx, _ = tsp_feasible_states(inst.n)
    return bool(e[idx].min() <= e.min() + rel_tol * max(1.0, abs(e.min())))


def p_min_bisection(inst: TspInstance, hi: float = 1e3, rel_tol: float = 1e-10) -> float:
    """Bisection on ground-state feasibility; independent check of :func:`p_min`."""
    lo = 0.0
    if not ground_state_is_feasible(inst, hi):
        raise ValueError("upper bracket is below the penalty threshold")
    while hi - lo > rel_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        # near-ties must not count as feasible here, or the bracket stops short
        if mid > 0 and ground_state_is_feasible(inst, mid, rel_tol=1e-13):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class PminReport:
    values: dict  # node count -> list of per-instance P_min
    mean: float
    std: float
    outliers: int

    def as_dict(self) -> dict:
        return {
            "values": {str(k): v for k, v in self.values.items()},
            "mean": self.mean,
            "std": self.std,
            "outliers": self.outliers,
        }


def instance_seed(seed: int, *keys: int) -> int:
    """Stable integer seed derived from a master seed and integer keys."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def pmin_statistics(sizes, count: int, seed: int = 0, low: float = 10,
                    high: float = 50) -> PminReport:
    """``P_min`` over ``count`` random instances per size, pooled."""
    values = {}
    for n in sizes:
        values[int(n)] = [
            p_min(generate_random_tsp(int(n), instance_seed(seed, n, i), low, high))
            for i in range(count)
        ]
    pooled = np.array([v for vs in values.values() for v in vs])
    mean, std = float(pooled.mean()), float(pooled.std())
    outliers = int(np.sum(pooled > mean + 3 * std)) if std > 0 else 0
    return PminReport(values, mean, std, outliers)


# -- CVRP ----------------------------------------------------------------------


def _set_partitions(items: list, max_blocks: int):
    if not items:
        yield []
        return
    head, tail = items[0], items[1:]
    for part in _set_partitions(tail, max_blocks):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]
        if len(part) < max_blocks:
            yield [[head]] + part


def solve_cvrp_exact(inst: CvrpInstance, vehicles: int | None = None,
                     max_customers: int = MAX_CVRP_CUSTOMERS) -> tuple[list, float]:
    """Optimal routes using at most ``vehicles`` (default ``K``) capacity-feasible tours."""
    n = inst.n
    if n > max_customers:
        raise BoundError(f"exact CVRP limited to {max_customers} customers, got {n}")
    K = vehicles or fleet_plan(inst).vehicles
    D = inst.distances

    @lru_cache(maxsize=None)
    def best_route(group: tuple) -> tuple[float, tuple]:
        best = (math.inf, ())
        for perm in itertools.permutations(group):
            path = (0,) + perm + (0,)
            length = float(sum(D[a, b] for a, b in zip(path, path[1:])))
            if length < best[0] - 1e-12:
                best = (length, perm)
        return best

    best_total, best_routes = math.inf, None
    for part in _set_partitions(list(range(1, n + 1)), K):
        if any(sum(inst.demands[v] for v in blk) > inst.capacity for blk in part):
            continue
        routes, total = [], 0.0
        for blk in sorted(tuple(sorted(b)) for b in part):
            length, perm = best_route(blk)
            routes.append(list(perm))
            total += length
        if total < best_total - 1e-12:
            best_total, best_routes = total, routes
    if best_routes is None:
        raise ValueError("no capacity-feasible assignment with the given fleet")
    return best_routes, best_total
