"""Exact statevector simulation.

Basis index ``i`` corresponds to the bitstring of ``i`` written with qubit 0
as the most significant bit, matching the bitstring convention of
:mod:`qroute.encoding`. Every gate acts in place on ``StateVector.amp`` and
returns the same object for chaining.

Randomness (``sample``) uses ``numpy.random.default_rng(seed)`` (PCG64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .encoding import QuboProblem, bits_to_index, iter_energy_chunks

MAX_QUBITS = 26
CACHE_QUBITS = 20


class SimulationError(RuntimeError):
    pass


class MemoryGuardError(SimulationError):
    pass


class StateVector:
    __slots__ = ("q", "amp")

    def __init__(self, amp: np.ndarray):
        amp = np.asarray(amp, dtype=np.complex128)
        q = int(round(math.log2(amp.size)))
        if 2 ** q != amp.size:
            raise SimulationError("amplitude count must be a power of two")
        self.q = q
        self.amp = amp

    def copy(self) -> "StateVector":
        return StateVector(self.amp.copy())

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amp, self.amp).real))

    def probabilities(self) -> np.ndarray:
        return self.amp.real ** 2 + self.amp.imag ** 2

    def __repr__(self):
        return f"StateVector(q={self.q})"


def _guard(q: int):
    if q > MAX_QUBITS:
        raise MemoryGuardError(f"{q} qubits exceed the simulator limit of {MAX_QUBITS}")


def init_plus(q: int) -> StateVector:
    _guard(q)
    return StateVector(np.full(2 ** q, 2.0 ** (-q / 2), dtype=np.complex128))


def init_zero(q: int) -> StateVector:
    _guard(q)
    amp = np.zeros(2 ** q, dtype=np.complex128)
    amp[0] = 1.0
    return StateVector(amp)


def init_basis(x, q: int | None = None) -> StateVector:
    """Computational basis state for a bitstring (or integer index with ``q``)."""
    if isinstance(x, (int, np.integer)):
        if q is None:
            raise SimulationError("an integer basis index needs the qubit count")
        idx = int(x)
    else:
        q = len(x)
        idx = bits_to_index(x)
    _guard(q)
    amp = np.zeros(2 ** q, dtype=np.complex128)
    amp[idx] = 1.0
    return StateVector(amp)


# -- diagonal problem Hamiltonians --------------------------------------------


class DiagonalEnergy:
    """Model energy of every computational basis state.

    Small registers cache the full vector; above ``CACHE_QUBITS`` the
    energies are regenerated blockwise from the QUBO on each use.
    """

    def __init__(self, qubo: QuboProblem | None = None, values: np.ndarray | None = None,
                 cache: bool | None = None):
        if (qubo is None) == (values is None):
            raise ValueError("give exactly one of qubo or values")
        self.qubo = qubo
        if values is not None:
            values = np.asarray(values, dtype=float)
            self.q = int(round(math.log2(values.size)))
            self._values = values
        else:
            self.q = qubo.dim
            if cache is None:
                cache = self.q <= CACHE_QUBITS
            self._values = qubo.energies() if cache else None

    @classmethod
    def from_qubo(cls, qubo: QuboProblem, cache: bool | None = None) -> "DiagonalEnergy":
        return cls(qubo=qubo, cache=cache)

    @property
    def cached(self) -> bool:
        return self._values is not None

    def chunks(self):
        if self._values is not None:
            yield 0, self._values
        else:
            yield from iter_energy_chunks(self.qubo)

    def values(self) -> np.ndarray:
        if self._values is not None:
            return self._values
        return np.concatenate([e for _, e in self.chunks()])

    def at(self, indices) -> np.ndarray:
        """Energies of selected basis states without building the full vector."""
        indices = np.asarray(indices, dtype=np.int64)
        if self._values is not None:
            return self._values[indices]
        bits = ((indices[:, None] >> (self.q - 1 - np.arange(self.q))) & 1).astype(float)
        return np.einsum("ki,ij,kj->k", bits, self.qubo.q, bits) + self.qubo.offset

    def __getitem__(self, index):
        return self.values()[index]


def _check_dims(state: StateVector, energy: DiagonalEnergy):
    if state.q != energy.q:
        raise SimulationError(f"state has {state.q} qubits, energy has {energy.q}")


def apply_phase(state: StateVector, energy: DiagonalEnergy, gamma: float) -> StateVector:
    """``amp[x] *= exp(-i * gamma * E(x))``."""
    _check_dims(state, energy)
    for start, e in energy.chunks():
        state.amp[start:start + e.size] *= np.exp(-1j * gamma * e)
    return state


def expectation(state: StateVector, energy: DiagonalEnergy) -> float:
    _check_dims(state, energy)
    p = state.probabilities()
    return float(sum(p[s:s + e.size] @ e for s, e in energy.chunks()))


# -- gates ---------------------------------------------------------------------


def _halves(state: StateVector, qubit: int):
    if not 0 <= qubit < state.q:
        raise IndexError(f"qubit {qubit} out of range for {state.q} qubits")
    view = state.amp.reshape(2 ** qubit, 2, -1)
    return view[:, 0, :], view[:, 1, :]


def apply_single(state: StateVector, qubit: int, m: np.ndarray) -> StateVector:
    """Apply a 2x2 matrix to one qubit."""
    a0, a1 = _halves(state, qubit)
    t = a0.copy()
    a0 *= m[0, 0]
    a0 += m[0, 1] * a1
    a1 *= m[1, 1]
    a1 += m[1, 0] * t
    return state


def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


_ROTATIONS = {"X": rx_matrix, "Y": ry_matrix, "Z": rz_matrix}


def apply_rotation(state: StateVector, qubit: int, axis: str, theta: float) -> StateVector:
    """``exp(-i theta P / 2)`` for ``P`` in X, Y, Z."""
    try:
        m = _ROTATIONS[axis.upper()](theta)
    except KeyError:
        raise ValueError(f"unknown rotation axis {axis!r}") from None
    if axis.upper() == "Z":
        a0, a1 = _halves(state, qubit)
        a0 *= m[0, 0]
        a1 *= m[1, 1]
        return state
    return apply_single(state, qubit, m)


def apply_rz_layer(state: StateVector, thetas) -> StateVector:
    """Rz(theta_k) on every qubit at once as one diagonal phase."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size != state.q:
        raise SimulationError("need one angle per qubit")
    # phase(x) = -sum(theta)/2 + sum_k theta_k x_k
    phase = np.zeros(1)
    for t in thetas:
        phase = (phase[:, None] + np.array([0.0, t])).ravel()
    state.amp *= np.exp(1j * (phase - thetas.sum() / 2))
    return state


def apply_controlled_rx(state: StateVector, control: int, target: int, theta: float) -> StateVector:
    """Rx(theta) on ``target`` where ``control`` is 1."""
    q = state.q
    if control == target:
        raise ValueError("control and target must differ")
    for k in (control, target):
        if not 0 <= k < q:
            raise IndexError(f"qubit {k} out of range for {q} qubits")
    lo, hi = sorted((control, target))
    view = state.amp.reshape(2 ** lo, 2, 2 ** (hi - lo - 1), 2, 2 ** (q - hi - 1))
    if control < target:
        a0, a1 = view[:, 1, :, 0, :], view[:, 1, :, 1, :]
    else:
        a0, a1 = view[:, 0, :, 1, :], view[:, 1, :, 1, :]
    c, s = math.cos(theta / 2), -1j * math.sin(theta / 2)
    t = a0 * s
    a0 *= c
    a0 += s * a1
    a1 *= c
    a1 += t
    return state


def apply_mixer_x(state: StateVector, beta: float) -> StateVector:
    """``exp(-i beta sum_j X_j)``: Rx(2 beta) on every qubit."""
    m = rx_matrix(2 * beta)
    for k in range(state.q):
        apply_single(state, k, m)
    return state


# -- sparse Hamiltonians ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Hermitian operator stored as a CSR matrix in basis-index space."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise SimulationError("Hamiltonian must be square")
        if abs(m - m.getH()).max() > 1e-12 if m.nnz else False:
            raise SimulationError("Hamiltonian is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def q(self) -> int:
        return int(round(math.log2(self.matrix.shape[0])))

    def norm1(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=0).max())

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def apply_exp_sparse(state: StateVector, H: SparseHamiltonian, beta: float,
                     tol: float = 1e-10, max_terms: int = 60) -> StateVector:
    """``exp(i beta H) |state>`` by a scaled, truncated Taylor series.

    The interval is split into ``s`` steps with ``|beta| * ||H||_1 / s <= 1``;
    each step sums Taylor terms until two consecutive terms fall below
    ``tol`` relative to the vector norm.
    """
    if H.q != state.q:
        raise SimulationError(f"state has {state.q} qubits, Hamiltonian has {H.q}")
    if not math.isfinite(beta):
        raise SimulationError("beta must be finite")
    norm = abs(beta) * H.norm1()
    if norm == 0:
        return state
    steps = max(1, math.ceil(norm))
    a = 1j * beta / steps
    M = H.matrix
    v = state.amp
    for _ in range(steps):
        out = v.copy()
        term = v
        vnorm = np.linalg.norm(v)
        small = 0
        for k in range(1, max_terms + 1):
            term = (a / k) * (M @ term)
            out += term
            if np.linalg.norm(term) <= tol * vnorm:
                small += 1
                if small == 2:
                    break
            else:
                small = 0
        else:
            raise SimulationError(f"Taylor series did not converge in {max_terms} terms")
        v = out
    state.amp[:] = v
    return state


# -- measurement -----------------------------------------------------------------


def sample(state: StateVector, shots: int, seed=None) -> dict:
    """Multinomial shot counts keyed by bitstring, via inverse CDF."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(state.probabilities())
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(shots), side="right")
    idx = np.minimum(idx, cdf.size - 1)
    values, counts = np.unique(idx, return_counts=True)
    return {format(int(i), f"0{state.q}b"): int(c) for i, c in zip(values, counts)}
