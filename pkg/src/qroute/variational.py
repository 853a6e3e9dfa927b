"""Parameterized ansätze and the recursive elimination loop.

Parameter layout for the alternating ansätze (QAOA, warm-start QAOA and the
swap-mixer ansatz) is ``[phase_1 .. phase_p, mixer_1 .. mixer_p]``. The
hardware-efficient ansatz stores, per layer, ``q`` Rx angles, ``q`` Rz
angles and ``q - 1`` controlled-Rx angles along the chain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .encoding import (
    EncodingError,
    IsingHamiltonian,
    QuboProblem,
    bits_to_str,
    encode_tsp_path,
    index_to_bits,
    tsp_feasible_states,
)
from .statevector import (
    MAX_QUBITS,
    DiagonalEnergy,
    MemoryGuardError,
    SimulationError,
    SparseHamiltonian,
    StateVector,
    apply_controlled_rx,
    apply_exp_sparse,
    apply_mixer_x,
    apply_phase,
    apply_rz_layer,
    apply_single,
    expectation,
    init_basis,
    init_plus,
    rx_matrix,
)

SUBSPACE_QUBITS = 16  # above this the swap-mixer ansatz evolves inside the feasible subspace


class AnsatzError(ValueError):
    pass


def _split_alternating(params, p: int | None = None):
    params = np.asarray(params, dtype=float).ravel()
    if params.size % 2:
        raise AnsatzError(f"alternating ansatz needs an even parameter count, got {params.size}")
    if p is not None and params.size != 2 * p:
        raise AnsatzError(f"expected {2 * p} parameters for depth {p}, got {params.size}")
    half = params.size // 2
    return params[:half], params[half:]


# -- QAOA ----------------------------------------------------------------------


def qaoa_prepare(params, energy: DiagonalEnergy, q: int | None = None) -> StateVector:
    """Standard QAOA state: phase then transverse-field mixer, per layer, on ``|+>``."""
    gammas, betas = _split_alternating(params)
    q = energy.q if q is None else q
    state = init_plus(q)
    for g, b in zip(gammas, betas):
        apply_phase(state, energy, g)
        apply_mixer_x(state, b)
    return state


def linear_schedule(p: int, scale: float = 1.0) -> np.ndarray:
    """Annealing-like start: phase angles rise, mixer angles fall linearly."""
    k = (np.arange(p) + 0.5) / p
    return np.concatenate([scale * k, scale * (1 - k)])


# -- hardware-efficient ansatz ---------------------------------------------------


def _guard(q: int):
    if q > MAX_QUBITS:
        raise MemoryGuardError(f"{q} qubits exceed the simulator limit of {MAX_QUBITS}")


def hevqe_n_params(q: int, layers: int = 1) -> int:
    if q < 1 or layers < 1:
        raise AnsatzError("need at least one qubit and one layer")
    return layers * (3 * q - 1)


def _product_state(factors: np.ndarray) -> np.ndarray:
    """Kronecker product of per-qubit 2-vectors (rows of ``factors``), qubit 0 first."""
    if len(factors) == 1:
        return factors[0]
    mid = len(factors) // 2
    return np.multiply.outer(_product_state(factors[:mid]), _product_state(factors[mid:])).ravel()


def hevqe_prepare(params, q: int, layers: int = 1) -> StateVector:
    """Rx row, Rz row and a CRx chain ``0->1, 1->2, ...`` per layer, from ``|0...0>``."""
    params = np.asarray(params, dtype=float).ravel()
    if params.size != hevqe_n_params(q, layers):
        raise AnsatzError(
            f"expected {hevqe_n_params(q, layers)} parameters for q={q}, "
            f"layers={layers}; got {params.size}"
        )
    _guard(q)
    per = 3 * q - 1
    state = None
    for layer in range(layers):
        block = params[layer * per:(layer + 1) * per]
        if state is None:
            # Rx then Rz on |0...0> is still a product state
            rx, rz = block[:q] / 2, block[q:2 * q] / 2
            factors = np.stack([np.cos(rx) * np.exp(-1j * rz),
                                -1j * np.sin(rx) * np.exp(1j * rz)], axis=1)
            state = StateVector(_product_state(factors))
        else:
            for k in range(q):
                apply_single(state, k, rx_matrix(block[k]))
            apply_rz_layer(state, block[q:2 * q])
        for k in range(q - 1):
            apply_controlled_rx(state, k, k + 1, block[2 * q + k])
    return state


# -- constraint-preserving swap mixer --------------------------------------------


def _position_pairs(m: int) -> list[tuple[int, int]]:
    """Cyclically adjacent positions ``1..m`` as unordered pairs."""
    pairs = set()
    for i in range(1, m + 1):
        j = i % m + 1
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    return sorted(pairs)


def _swap_terms(n: int):
    """``(position pair, city pair)`` for every swap term of the mixer."""
    m = n - 1
    return [(pp, cp) for pp in _position_pairs(m)
            for cp in itertools.combinations(range(1, m + 1), 2)]


def aoa_pauli_term_count(n: int) -> int:
    """Pauli strings after expanding every ``S+S+S-S- + h.c.`` term.

    Each four-qubit product expands into 16 Pauli strings; adding the
    Hermitian conjugate cancels the half with an odd number of ``Y``
    factors' imaginary parts, leaving 8 per swap term.
    """
    return 8 * len(_swap_terms(n))


def aoa_mixer(n: int) -> SparseHamiltonian:
    """Swap mixer on the reduced ``(n-1)**2`` register.

    For position pair ``(i, i')`` and city pair ``(u, v)`` the term maps
    ``|u at i', v at i>`` to ``|u at i, v at i'>`` and back, leaving every
    other bit untouched. Positions wrap cyclically over ``1..n-1``.
    """
    if n < 3:
        raise AnsatzError("the swap mixer needs n >= 3")
    m = n - 1
    q = m * m
    if q > SUBSPACE_QUBITS:
        raise SimulationError(
            f"full-register mixer for n={n} needs 2^{q} states; use the subspace path"
        )

    def bit(pos, city):
        return 1 << (q - 1 - ((pos - 1) * m + (city - 1)))

    idx = np.arange(2 ** q, dtype=np.int64)
    rows, cols = [], []
    for (i, j), (u, v) in _swap_terms(n):
        src = bit(j, u) | bit(i, v)  # u at j, v at i
        dst = bit(i, u) | bit(j, v)
        sel = idx[(idx & (src | dst)) == src]
        rows.append(sel ^ src ^ dst)
        cols.append(sel)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = np.ones(2 * r.size)
    M = sp.csr_matrix((data, (np.concatenate([r, c]), np.concatenate([c, r]))),
                      shape=(2 ** q, 2 ** q))
    return SparseHamiltonian(M)


def aoa_subspace_mixer(n: int) -> np.ndarray:
    """The mixer restricted to feasible tours (order of ``tsp_feasible_states``)."""
    _, tours = tsp_feasible_states(n)
    where = {t: k for k, t in enumerate(tours)}
    H = np.zeros((len(tours), len(tours)))
    for k, t in enumerate(tours):
        for i, j in _position_pairs(n - 1):
            s = list(t)
            s[i], s[j] = s[j], s[i]
            H[where[tuple(s)], k] += 1.0
    return H


def _check_tour(tour, n: int | None = None):
    try:
        bits = encode_tsp_path(tour)
    except EncodingError as exc:
        raise AnsatzError(f"initial state must be a feasible tour: {exc}") from None
    if n is not None and len(tour) != n:
        raise AnsatzError(f"initial tour has {len(tour)} cities, expected {n}")
    return bits


def aoa_subspace_amplitudes(params, energy: DiagonalEnergy, tour) -> np.ndarray:
    """Swap-mixer evolution carried out in the ``(n-1)!``-dimensional feasible subspace."""
    n = len(tour)
    _check_tour(tour)
    phases, mixers = _split_alternating(params)
    idx, tours = tsp_feasible_states(n)
    e = energy.at(idx)
    w, V = np.linalg.eigh(aoa_subspace_mixer(n))
    a = np.zeros(len(tours), dtype=complex)
    a[tours.index(tuple(int(c) for c in tour))] = 1.0
    for b, g in zip(phases, mixers):
        a *= np.exp(-1j * b * e)
        a = V @ (np.exp(1j * g * w) * (V.T @ a))
    return a


def aoa_prepare(params, energy: DiagonalEnergy, tour, mixer: SparseHamiltonian | None = None
                ) -> StateVector:
    """Alternate ``exp(-i b H_f)`` and ``exp(i g H_M)`` starting from a tour state.

    Registers above ``SUBSPACE_QUBITS`` are evolved in the feasible subspace
    and embedded into the full register afterwards.
    """
    bits = _check_tour(tour)
    n = len(tour)
    if energy.q != len(bits):
        raise AnsatzError(f"energy has {energy.q} qubits, tour needs {len(bits)}")
    if energy.q > SUBSPACE_QUBITS:
        a = aoa_subspace_amplitudes(params, energy, tour)
        state = init_basis(0, energy.q)
        state.amp[0] = 0
        state.amp[tsp_feasible_states(n)[0]] = a
        return state
    phases, mixers = _split_alternating(params)
    H = aoa_mixer(n) if mixer is None else mixer
    state = init_basis(bits)
    for b, g in zip(phases, mixers):
        apply_phase(state, energy, b)
        apply_exp_sparse(state, H, g)
    return state


# -- warm start ------------------------------------------------------------------


@dataclass
class RelaxedSolution:
    x: np.ndarray
    objective: float
    shift: float
    iterations: int

    @property
    def integral(self) -> bool:
        return bool(np.all((self.x == 0) | (self.x == 1)))


def ws_relax(qubo: QuboProblem, max_iter: int = 20000, tol: float = 1e-12,
             eps: float = 1e-6, snap: float = 1e-9) -> RelaxedSolution:
    """Box relaxation of a QUBO made convex by a diagonal shift.

    On binary points ``x @ x == sum(x)``, so
    ``f(x) = x @ (q + lam I) @ x - lam * sum(x) + offset`` agrees with the
    QUBO there. ``lam = max(0, eps - lambda_min(q))`` makes ``f`` convex;
    it is minimised over ``[0, 1]^dim`` with accelerated projected gradient
    steps. Entries within ``snap`` of a bound are rounded onto it.
    """
    q = qubo.q
    lam_min = float(np.linalg.eigvalsh(q)[0])
    lam = max(0.0, eps - lam_min)
    A = q + lam * np.eye(qubo.dim)
    lin = -lam * np.ones(qubo.dim)
    L = 2 * float(np.linalg.eigvalsh(A)[-1])
    if L <= 0:
        L = 1.0

    def f(x):
        return float(x @ A @ x + lin @ x + qubo.offset)

    x = np.full(qubo.dim, 0.5)
    y, t = x.copy(), 1.0
    it = 0
    for it in range(1, max_iter + 1):
        x_new = np.clip(y - (2 * A @ y + lin) / L, 0.0, 1.0)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        step = np.abs(x_new - x).max()
        x, t = x_new, t_new
        if step < tol:
            break
    x = np.where(x < snap, 0.0, np.where(x > 1 - snap, 1.0, x))
    return RelaxedSolution(x, f(x), lam, it)


def ws_angles(x_tilde) -> np.ndarray:
    x = np.asarray(x_tilde, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise AnsatzError("relaxed values must lie in [0, 1]")
    return 2 * np.arcsin(np.sqrt(x))


def ws_initial_state(x_tilde) -> StateVector:
    """Product state ``Ry(theta_i)|0>`` with ``theta_i = 2 arcsin(sqrt(x_i))``."""
    x = np.asarray(x_tilde, dtype=float)
    ws_angles(x)
    _guard(x.size)
    amp = np.ones(1)
    for xi in x:
        amp = np.kron(amp, [math.sqrt(1 - xi), math.sqrt(xi)])
    return StateVector(amp.astype(complex))


def ws_mixer_matrix(xi: float, beta: float) -> np.ndarray:
    """``exp(-i beta H)`` for the single-qubit warm-start mixer.

    ``H = [[2x - 1, -2 sqrt(x(1-x))], [-2 sqrt(x(1-x)), 1 - 2x]]`` has
    eigenvalues -1 and +1 with ground state ``Ry(theta)|0>``; as ``H^2 = I``
    the exponential is ``cos(beta) I - i sin(beta) H``.
    """
    off = -2 * math.sqrt(xi * (1 - xi))
    H = np.array([[2 * xi - 1, off], [off, 1 - 2 * xi]])
    return math.cos(beta) * np.eye(2) - 1j * math.sin(beta) * H


def ws_prepare(params, energy: DiagonalEnergy, x_tilde) -> StateVector:
    gammas, betas = _split_alternating(params)
    x = np.asarray(x_tilde, dtype=float)
    if x.size != energy.q:
        raise AnsatzError("relaxed solution size does not match the register")
    state = ws_initial_state(x)
    for g, b in zip(gammas, betas):
        apply_phase(state, energy, g)
        for k, xi in enumerate(x):
            apply_single(state, k, ws_mixer_matrix(xi, b))
    return state


# -- ansatz descriptor -------------------------------------------------------------


@dataclass
class AnsatzSpec:
    """What to prepare and how many angles it takes."""

    kind: str  # qaoa | ws_qaoa | aoa | hevqe
    q: int
    depth: int = 1
    x_tilde: np.ndarray | None = None
    tour: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("qaoa", "ws_qaoa", "aoa", "hevqe"):
            raise AnsatzError(f"unknown ansatz kind {self.kind!r}")
        _guard(self.q)
        if self.kind == "ws_qaoa" and self.x_tilde is None:
            raise AnsatzError("ws_qaoa needs a relaxed solution")
        if self.kind == "aoa":
            if self.tour is None:
                raise AnsatzError("aoa needs an initial tour")
            _check_tour(self.tour)

    @property
    def n_params(self) -> int:
        if self.kind == "hevqe":
            return hevqe_n_params(self.q, self.depth)
        return 2 * self.depth

    def prepare(self, params, energy: DiagonalEnergy | None = None) -> StateVector:
        params = np.asarray(params, dtype=float)
        if params.size != self.n_params:
            raise AnsatzError(f"{self.kind} expects {self.n_params} parameters, got {params.size}")
        if self.kind == "hevqe":
            return hevqe_prepare(params, self.q, self.depth)
        if energy is None:
            raise AnsatzError(f"{self.kind} needs the problem energy")
        if self.kind == "qaoa":
            return qaoa_prepare(params, energy, self.q)
        if self.kind == "ws_qaoa":
            return ws_prepare(params, energy, self.x_tilde)
        return aoa_prepare(params, energy, self.tour)


# -- recursive elimination ---------------------------------------------------------


def _spin_table(q: int) -> np.ndarray:
    """Spins ``2x - 1`` of every basis state, shape ``(2**q, q)``."""
    idx = np.arange(2 ** q)
    return (((idx[:, None] >> (q - 1 - np.arange(q))) & 1) * 2 - 1).astype(float)


def correlations_from_probabilities(p: np.ndarray) -> np.ndarray:
    q = int(round(math.log2(p.size)))
    Z = _spin_table(q)
    return Z.T @ (p[:, None] * Z)


def rqaoa_correlations(state: StateVector) -> np.ndarray:
    """Exact ``<Z_i Z_j>`` matrix from the amplitudes (diagonal is 1)."""
    return correlations_from_probabilities(state.probabilities())


@dataclass(frozen=True)
class ReductionStep:
    pair: tuple  # (kept, removed), original variable indices
    sign: int
    magnitude: float
    flagged: bool = False
    note: str = ""


def rqaoa_eliminate(ham: IsingHamiltonian, pair, sign: int) -> IsingHamiltonian:
    """Substitute ``z_j = sign * z_i`` and drop spin ``j``."""
    i, j = (int(v) for v in pair)
    if i == j:
        raise ValueError("cannot merge a spin with itself")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    d = ham.dim
    Js = ham.J + ham.J.T
    h = ham.h.copy()
    const = ham.constant + sign * Js[i, j]
    h[i] += sign * h[j]
    Js = Js.copy()
    Js[i, :] += sign * Js[j, :]
    Js[:, i] += sign * Js[:, j]
    Js[i, i] = 0.0
    keep = [k for k in range(d) if k != j]
    Js = Js[np.ix_(keep, keep)]
    return IsingHamiltonian(h[keep], np.triu(Js, 1), const)


def exact_ground_correlations(ham: IsingHamiltonian, tol: float = 1e-9) -> np.ndarray:
    """Correlations of the equal mixture of all ground states."""
    e = ham.energies()
    ground = e <= e.min() + tol * max(1.0, abs(e.min()))
    p = ground / ground.sum()
    return correlations_from_probabilities(p.astype(float))


def _strongest_pair(M: np.ndarray, tol: float = 1e-12):
    d = M.shape[0]
    best, best_pair = -1.0, None
    for i in range(d):
        for j in range(i + 1, d):
            if abs(M[i, j]) > best + tol:
                best, best_pair = abs(M[i, j]), (i, j)
    return best_pair, best


@dataclass
class RqaoaResult:
    bits: str
    energy: float
    steps: list = field(default_factory=list)


def rqaoa_run(ham: IsingHamiltonian,
              correlations: Callable[[IsingHamiltonian], np.ndarray],
              stop_dim: int = 4) -> RqaoaResult:
    """Eliminate the most correlated pair until ``stop_dim`` spins remain.

    ``correlations`` maps the current Hamiltonian to its ``<Z_i Z_j>``
    matrix (for instance an optimised QAOA state, or
    :func:`exact_ground_correlations`). Ties in ``|<Z_i Z_j>|`` go to the
    lexicographically smallest pair. An exception from the correlation
    source is logged as a flagged step and the remaining spins are solved
    by enumeration.
    """
    if stop_dim < 1:
        raise ValueError("stop_dim must be at least 1")
    original = ham
    alive = list(range(ham.dim))
    subs = []  # (removed, kept, sign) in elimination order
    steps = []
    while ham.dim > stop_dim:
        try:
            M = np.asarray(correlations(ham), dtype=float)
        except Exception as exc:  # noqa: BLE001 - logged, not fatal
            steps.append(ReductionStep((-1, -1), 1, 0.0, True, f"correlation source failed: {exc}"))
            break
        (i, j), mag = _strongest_pair(M)
        sign = 1 if M[i, j] >= 0 else -1
        steps.append(ReductionStep((alive[i], alive[j]), sign, float(min(1.0, mag))))
        subs.append((alive[j], alive[i], sign))
        ham = rqaoa_eliminate(ham, (i, j), sign)
        del alive[j]
    e = ham.energies()
    k = int(np.argmin(e))
    z = np.zeros(original.dim)
    z[alive] = index_to_bits(k, ham.dim) * 2 - 1
    for removed, kept, sign in reversed(subs):
        z[removed] = sign * z[kept]
    bits = bits_to_str(((z + 1) // 2).astype(int))
    return RqaoaResult(bits, original.energy(z), steps)


def qaoa_correlation_source(p: int, optimizer: str = "powell", max_evals: int = 2000,
                            seed: int = 0) -> Callable[[IsingHamiltonian], np.ndarray]:
    """Correlation source that optimises a depth-``p`` QAOA on each reduced problem."""
    from .optimize import Budget, run_optimizer

    def source(ham: IsingHamiltonian) -> np.ndarray:
        energy = DiagonalEnergy(values=ham.energies())
        rng = np.random.default_rng(seed + ham.dim)
        x0 = rng.uniform(0, 2 * math.pi, 2 * p)
        res = run_optimizer(optimizer,
                            lambda th: expectation(qaoa_prepare(th, energy), energy),
                            x0, Budget(max_evals=max_evals), seed=seed)
        return rqaoa_correlations(qaoa_prepare(res.x, energy))

    return source


def feasible_mass(state: StateVector, n: int) -> float:
    idx, _ = tsp_feasible_states(n)
    return float(state.probabilities()[idx].sum())
