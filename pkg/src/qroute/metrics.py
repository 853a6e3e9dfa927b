"""Solution-quality measures for TSP runs.

A run is judged by the pair ``(m_len, m_feas)``: the probability mass on
valid tours, and the optimal length divided by the average length of the
valid part of the distribution. ``m_len`` is undefined (``None``, printed
``---``) when no mass is feasible.

Energy ratios use the Ising energy without its constant term, the
convention in which optimal energies are negative.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .encoding import QuboProblem, decode_tsp, qubo_to_ising, tsp_feasible_states
from .instance import TspInstance
from .oracle import all_tour_lengths
from .optimize import Budget, Objective, nelder_mead
from .statevector import StateVector

UNDEFINED = "---"


@dataclass(frozen=True)
class MetricPair:
    m_len: float | None
    m_feas: float

    @property
    def defined(self) -> bool:
        return self.m_len is not None

    def format(self, digits: int = 4) -> tuple[str, str]:
        ml = UNDEFINED if self.m_len is None else f"{self.m_len:.{digits}f}"
        return ml, f"{self.m_feas:.{digits}f}"


def _pair(p_feasible: np.ndarray, lengths: np.ndarray, L_opt: float) -> MetricPair:
    if L_opt <= 0:
        raise ValueError("optimal length must be positive")
    m_feas = float(p_feasible.sum())
    if m_feas <= 0:
        return MetricPair(None, 0.0)
    mean_len = float(p_feasible @ lengths) / m_feas
    return MetricPair(L_opt / mean_len, min(1.0, m_feas))


def metrics_from_probabilities(p: np.ndarray, inst: TspInstance, L_opt: float) -> MetricPair:
    idx, _ = tsp_feasible_states(inst.n)
    return _pair(np.asarray(p)[idx], all_tour_lengths(inst), L_opt)


def metrics_exact(state: StateVector, inst: TspInstance, L_opt: float) -> MetricPair:
    """Metric pair from exact amplitudes."""
    return metrics_from_probabilities(state.probabilities(), inst, L_opt)


def metrics_shots(counts: dict, inst: TspInstance, L_opt: float) -> MetricPair:
    """Metric pair from measured counts.

    Shot estimates of ``m_len`` can have high variance when few shots are
    feasible.
    """
    total = sum(counts.values())
    if total < 1:
        raise ValueError("need at least one shot")
    freq, lengths = [], []
    for bits, c in counts.items():
        dec = decode_tsp(bits, inst.n)
        if dec.feasible:
            freq.append(c / total)
            lengths.append(inst.tour_length(dec.tour))
    return _pair(np.array(freq), np.array(lengths), L_opt)


# -- energies ------------------------------------------------------------------


def ising_constant(qubo: QuboProblem) -> float:
    return qubo_to_ising(qubo).constant


def energy_without_constant(energy: float, qubo: QuboProblem) -> float:
    """Model energy re-expressed as an Ising energy with the constant dropped."""
    return energy - ising_constant(qubo)


def approximation_ratio(E: float, E_opt: float) -> float:
    """``E / E_opt`` for (negative) optimal Ising energies."""
    if E_opt == 0:
        raise ZeroDivisionError("approximation ratio undefined for zero optimal energy")
    return E / E_opt


def format_ratio(r: float, digits: int = 2) -> str:
    return f"{100 * r:.{digits}f}%"


# -- feasibility transition ------------------------------------------------------


class TransitionFitError(ValueError):
    pass


@dataclass
class TransitionFit:
    A: float
    B: float
    E0: float
    C: float
    sse: float
    degenerate: bool = False
    relative_threshold: float | None = None

    def predict(self, E) -> np.ndarray:
        return self.A * np.arctan(self.B * (self.E0 - np.asarray(E, dtype=float))) + self.C


def transition_fit(energies, feasibility, E_opt: float | None = None,
                   max_evals: int = 20000) -> TransitionFit:
    """Least-squares fit of ``m_feas = A arctan(B (E0 - E)) + C``.

    Minimised with Nelder-Mead from several starting thresholds (energy
    quantiles) in normalised units. ``E0 / E_opt`` is reported as the
    relative threshold when ``E_opt`` is given. Constant feasibility is
    returned as a flat fit flagged ``degenerate``.
    """
    E = np.asarray(energies, dtype=float)
    F = np.asarray(feasibility, dtype=float)
    if E.shape != F.shape or E.size < 8:
        raise TransitionFitError("need at least 8 (energy, feasibility) pairs")
    if np.ptp(E) == 0:
        raise TransitionFitError("all energies are equal; no transition to fit")
    if np.ptp(F) == 0:
        fit = TransitionFit(0.0, 0.0, float(np.median(E)), float(F[0]), 0.0, degenerate=True)
        return fit
    mu, sd = E.mean(), E.std()
    u = (E - mu) / sd

    def sse(v):
        a, logb, u0, c = v
        r = a * np.arctan(math.exp(min(logb, 40.0)) * (u0 - u)) + c - F
        return float(r @ r)

    best = None
    span = np.ptp(F)
    for u0 in np.quantile(u, [0.1, 0.25, 0.5, 0.75, 0.9]):
        for logb in (0.0, 2.0, 4.0):
            x0 = [span / math.pi, logb, u0, F.mean()]
            res = nelder_mead(Objective(sse, max_evals // 15), x0, Budget(max_evals // 15, 1e-12))
            if best is None or res.cost < best.cost:
                best = res
    a, logb, u0, c = best.x
    b = math.exp(min(logb, 40.0))
    below, above = u[u <= u0], u[u > u0]
    if below.size and above.size and b * (above.min() - below.max()) > 50:
        # a clean step: any threshold inside the gap fits, report its midpoint
        u0 = 0.5 * (below.max() + above.min())
    fit = TransitionFit(float(a), float(b / sd), float(mu + u0 * sd), float(c), best.cost)
    if fit.A < 0:  # arctan is odd: keep A, B positive
        fit.A, fit.B = -fit.A, -fit.B
    if E_opt is not None:
        fit.relative_threshold = approximation_ratio(fit.E0, E_opt)
    return fit


# -- run records --------------------------------------------------------------------


@dataclass
class RunRecord:
    run_id: str
    algorithm: str
    ansatz: str
    optimizer: str
    seed: int
    n: int
    penalty: float
    scaling: float
    depth: int
    energy: float
    energy_opt: float
    approx_ratio: float
    m_feas: float
    m_len: float | None
    circuit_evals: int
    wall_time_ms: float
    termination: str

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for k, v in asdict(self).items():
            if v is None:
                out.append(UNDEFINED)
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_row(cls, row: dict) -> "RunRecord":
        conv = {"seed": int, "n": int, "depth": int, "circuit_evals": int,
                "run_id": str, "algorithm": str, "ansatz": str, "optimizer": str,
                "termination": str}
        kw = {}
        for name in cls.columns():
            raw = row[name]
            if name == "m_len" and raw == UNDEFINED:
                kw[name] = None
            else:
                kw[name] = conv.get(name, float)(raw)
        return cls(**kw)
