import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from qroute.encoding import (
    IsingHamiltonian,
    build_tsp_qubo,
    encode_tsp_path,
    qubo_to_ising,
    tsp_feasible_states,
)
from qroute.instance import generate_random_tsp
from qroute.oracle import optimal_tsp
from qroute.statevector import (
    DiagonalEnergy,
    StateVector,
    apply_controlled_rx,
    apply_rotation,
    expectation,
    init_plus,
    init_zero,
)
from qroute.variational import (
    AnsatzError,
    AnsatzSpec,
    aoa_mixer,
    aoa_pauli_term_count,
    aoa_prepare,
    aoa_subspace_amplitudes,
    aoa_subspace_mixer,
    exact_ground_correlations,
    feasible_mass,
    hevqe_n_params,
    hevqe_prepare,
    linear_schedule,
    qaoa_prepare,
    rqaoa_eliminate,
    rqaoa_run,
    ws_initial_state,
    ws_mixer_matrix,
    ws_prepare,
    ws_relax,
)


@pytest.fixture(scope="module")
def energy4():
    return DiagonalEnergy.from_qubo(build_tsp_qubo(generate_random_tsp(4, 0), 0.01, 100))


# -- QAOA ----------------------------------------------------------------------------


def test_qaoa_zero_angles_is_plus(energy4):
    assert np.allclose(qaoa_prepare(np.zeros(4), energy4).amp, init_plus(9).amp)


def test_qaoa_matches_dense(energy4):
    q = 9
    X = np.array([[0, 1], [1, 0]])
    HX = sum(np.kron(np.kron(np.eye(2 ** k), X), np.eye(2 ** (q - k - 1))) for k in range(q))
    E = energy4.values()
    params = np.array([0.3, -1.1, 0.7, 0.2])
    psi = init_plus(q).amp
    for g, b in zip(params[:2], params[2:]):
        psi = np.exp(-1j * g * E) * psi
        psi = sla.expm(-1j * b * HX) @ psi
    assert np.allclose(qaoa_prepare(params, energy4).amp, psi, atol=1e-10)


def test_linear_schedule():
    x = linear_schedule(4, 2.0)
    assert np.all(np.diff(x[:4]) > 0) and np.all(np.diff(x[4:]) < 0)
    assert np.allclose(x[:4] + x[4:], 2.0)


# -- hardware-efficient ansatz -------------------------------------------------------


def hevqe_reference(params, q, layers):
    s = init_zero(q)
    per = 3 * q - 1
    for layer in range(layers):
        b = params[layer * per:(layer + 1) * per]
        for k in range(q):
            apply_rotation(s, k, "X", b[k])
        for k in range(q):
            apply_rotation(s, k, "Z", b[q + k])
        for k in range(q - 1):
            apply_controlled_rx(s, k, k + 1, b[2 * q + k])
    return s


@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 10_000))
def test_hevqe_matches_gate_reference(q, layers, seed):
    params = np.random.default_rng(seed).uniform(-math.pi, math.pi, hevqe_n_params(q, layers))
    assert np.allclose(hevqe_prepare(params, q, layers).amp,
                       hevqe_reference(params, q, layers).amp, atol=1e-12)


def test_hevqe_counts_and_reference_state():
    assert hevqe_n_params(9, 1) == 26
    assert hevqe_n_params(16, 2) == 94
    s = hevqe_prepare(np.zeros(26), 9)
    assert abs(s.amp[0]) == pytest.approx(1.0)
    with pytest.raises(AnsatzError):
        hevqe_prepare(np.zeros(25), 9)


# -- swap mixer ----------------------------------------------------------------------


def test_pauli_term_count():
    assert aoa_pauli_term_count(4) == 72


def test_mixer_acts_as_position_swaps():
    # H |tour> = sum over cyclically adjacent positions of |tour with them swapped>
    n, m = 5, 4
    H = aoa_mixer(n)
    idx, tours = tsp_feasible_states(n)
    pairs = {tuple(sorted((i, i % m + 1))) for i in range(1, m + 1)}
    for t in tours[:8]:
        v = np.zeros(2 ** 16)
        v[int(encode_tsp_path(t), 2)] = 1
        out = H.matrix @ v
        expect = np.zeros_like(v)
        for i, j in pairs:
            s = list(t)
            s[i], s[j] = s[j], s[i]
            expect[int(encode_tsp_path(s), 2)] += 1
        assert np.allclose(out, expect)


def test_subspace_mixer_matches_restriction():
    H = aoa_mixer(4).dense().real
    idx, _ = tsp_feasible_states(4)
    assert np.allclose(H[np.ix_(idx, idx)], aoa_subspace_mixer(4))


@given(st.integers(0, 10_000))
def test_aoa_stays_feasible(seed):
    inst = generate_random_tsp(4, seed % 50)
    energy = DiagonalEnergy.from_qubo(build_tsp_qubo(inst, 0.05, 100))
    params = np.random.default_rng(seed).uniform(0, 2 * math.pi, 6)
    s = aoa_prepare(params, energy, (0, 1, 2, 3))
    assert feasible_mass(s, 4) == pytest.approx(1.0, abs=1e-8)


def test_aoa_subspace_path_matches_full(energy4):
    params = np.array([0.4, -0.2, 1.3, 0.9])
    full = aoa_prepare(params, energy4, (0, 2, 1, 3))
    idx, _ = tsp_feasible_states(4)
    sub = aoa_subspace_amplitudes(params, energy4, (0, 2, 1, 3))
    assert np.allclose(full.amp[idx], sub, atol=1e-9)


def test_aoa_rejects_bad_tours(energy4):
    with pytest.raises(AnsatzError):
        aoa_prepare(np.zeros(2), energy4, (0, 1, 1, 3))
    with pytest.raises(AnsatzError):
        aoa_prepare(np.zeros(2), energy4, (0, 1, 2))


# -- warm start ----------------------------------------------------------------------


def test_ws_initial_state_is_product():
    x = np.array([0.2, 1.0, 0.0, 0.5])
    s = ws_initial_state(x)
    p = s.probabilities().reshape(2, 2, 2, 2)
    for k, xk in enumerate(x):
        marg = p.sum(axis=tuple(a for a in range(4) if a != k))
        assert marg[1] == pytest.approx(xk)
    with pytest.raises(AnsatzError):
        ws_initial_state([1.2])


@given(st.floats(0, 1), st.floats(-4, 4))
def test_ws_mixer_unitary_with_initial_ground_state(x, beta):
    U = ws_mixer_matrix(x, beta)
    assert np.allclose(U.conj().T @ U, np.eye(2), atol=1e-12)
    g = np.array([math.sqrt(1 - x), math.sqrt(x)])
    # the initial qubit state is the -1 eigenvector, so it only picks up a phase
    assert np.allclose(U @ g, np.exp(1j * beta) * g, atol=1e-12)


def test_ws_zero_angles_return_initial_state(energy4):
    x = np.linspace(0.1, 0.9, 9)
    assert np.allclose(ws_prepare(np.zeros(4), energy4, x).amp, ws_initial_state(x).amp)


def test_ws_relaxation_is_a_faithful_convex_surrogate():
    qubo = build_tsp_qubo(generate_random_tsp(4, 3), 1.0, 100)
    sol = ws_relax(qubo)
    lam = sol.shift
    A = qubo.q + lam * np.eye(9)
    assert np.linalg.eigvalsh(A).min() > 0
    rng = np.random.default_rng(0)
    for _ in range(20):  # surrogate equals the QUBO on binaries
        x = rng.integers(0, 2, 9).astype(float)
        assert x @ A @ x - lam * x.sum() + qubo.offset == pytest.approx(qubo.energy(x))
    assert np.all((sol.x >= 0) & (sol.x <= 1))


def test_ws_relaxation_is_reversal_symmetric():
    # reversing a tour (position i <-> m + 1 - i) leaves the model unchanged, so the
    # unique minimiser of the strictly convex surrogate is symmetric and never a tour
    for seed in range(3):
        sol = ws_relax(build_tsp_qubo(generate_random_tsp(4, seed), 1.0, 100))
        g = sol.x.reshape(3, 3)
        assert np.allclose(g[0], g[2], atol=1e-6)
        assert not sol.integral


# -- descriptor ----------------------------------------------------------------------


def test_ansatz_spec(energy4):
    spec = AnsatzSpec("qaoa", 9, 2)
    assert spec.n_params == 4
    with pytest.raises(AnsatzError):
        spec.prepare(np.zeros(3), energy4)
    with pytest.raises(AnsatzError):
        AnsatzSpec("ws_qaoa", 9)
    with pytest.raises(AnsatzError):
        AnsatzSpec("nope", 9)
    with pytest.raises(AnsatzError):
        AnsatzSpec("qaoa", 9).prepare(np.zeros(2))
    assert AnsatzSpec("hevqe", 9).n_params == 26


# -- recursive elimination -----------------------------------------------------------


def random_ising(d, seed):
    rng = np.random.default_rng(seed)
    return IsingHamiltonian(rng.normal(size=d), np.triu(rng.normal(size=(d, d)), 1), rng.normal())


@given(st.integers(3, 7), st.integers(0, 10_000), st.sampled_from([1, -1]), st.data())
def test_elimination_preserves_constrained_energies(d, seed, sign, data):
    ham = random_ising(d, seed)
    i = data.draw(st.integers(0, d - 1))
    j = data.draw(st.integers(0, d - 1).filter(lambda v: v != i))
    red = rqaoa_eliminate(ham, (i, j), sign)
    keep = [k for k in range(d) if k != j]
    rng = np.random.default_rng(seed)
    for _ in range(10):
        z = rng.choice([-1, 1], d)
        z[j] = sign * z[i]
        assert red.energy(z[keep]) == pytest.approx(ham.energy(z), abs=1e-9)


def test_elimination_argument_checks():
    ham = random_ising(3, 0)
    with pytest.raises(ValueError):
        rqaoa_eliminate(ham, (1, 1), 1)
    with pytest.raises(ValueError):
        rqaoa_eliminate(ham, (0, 1), 0)


def test_exact_correlations_recover_optimum():
    inst = generate_random_tsp(4, 7)
    ham = qubo_to_ising(build_tsp_qubo(inst, 1.0, 100))
    res = rqaoa_run(ham, exact_ground_correlations, stop_dim=2)
    assert res.bits in (encode_tsp_path((0, 1, 3, 2)), encode_tsp_path((0, 2, 3, 1)))
    assert res.energy == pytest.approx(optimal_tsp(inst)[1])
    assert len(res.steps) == 7 and not any(s.flagged for s in res.steps)


def test_failing_source_is_flagged_and_enumerated():
    ham = random_ising(6, 1)

    def broken(h):
        raise RuntimeError("no device")

    res = rqaoa_run(ham, broken, stop_dim=2)
    assert res.steps[0].flagged and "no device" in res.steps[0].note
    assert res.energy == pytest.approx(ham.energies().min())


def test_qaoa_expectation_is_real_average(energy4):
    s = qaoa_prepare(np.array([0.01, 0.3]), energy4)
    assert isinstance(s, StateVector)
    assert expectation(s, energy4) == pytest.approx(float(s.probabilities() @ energy4.values()))


def test_hevqe_refuses_oversized_registers():
    from qroute.statevector import MemoryGuardError
    with pytest.raises(MemoryGuardError):
        hevqe_prepare(np.zeros(hevqe_n_params(36)), 36)
    with pytest.raises(MemoryGuardError):
        AnsatzSpec("hevqe", 36)
