"""Build the TSP model for a random 4-node instance and look at it from a few angles.

Run with ``python3 demos/encode_and_inspect.py``.
"""
import numpy as np

from qroute.encoding import build_tsp_qubo, decode_tsp, qubo_to_ising, tsp_feasible_states
from qroute.instance import generate_random_tsp
from qroute.metrics import metrics_exact
from qroute.oracle import optimal_tsp, p_min, uniform_baseline
from qroute.statevector import init_plus

inst = generate_random_tsp(4, seed=7)
print("distances\n", inst.distances.astype(int))

tour, L = optimal_tsp(inst)
print(f"optimal tour {tour}, length {L:g}")

# below P_min the lowest-energy bitstring breaks a constraint
pm = p_min(inst)
for P in (0.7 * pm, 1.2 * pm):
    qubo = build_tsp_qubo(inst, 1.0, P)
    k = int(np.argmin(qubo.energies()))
    bits = format(k, f"0{qubo.dim}b")
    dec = decode_tsp(bits, inst.n)
    print(f"P = {P:6.1f}: ground state {bits} -> {'tour ' + str(dec.tour) if dec.feasible else 'infeasible'}")

ham = qubo_to_ising(build_tsp_qubo(inst, 1.0, 1.2 * pm))
print(f"Ising model: {np.count_nonzero(ham.h)} fields, {np.count_nonzero(ham.J)} couplings, "
      f"constant {ham.constant:.1f}")

# what a device would see before any optimisation
idx, _ = tsp_feasible_states(inst.n)
pair = metrics_exact(init_plus(9), inst, L)
print(f"uniform superposition: m_feas {pair.m_feas:.4f} ({len(idx)}/512), m_len {pair.m_len:.4f}")
print("closed form:", uniform_baseline(inst))
