"""Quantum-assisted vehicle routing: QUBO encodings, exact statevector
simulation of QAOA-family and hardware-efficient VQE ansaetze, classical
optimizers, brute-force oracles and routing-specific quality metrics."""

__version__ = "0.1.0"
