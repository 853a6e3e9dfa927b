"""Execution of experiment cells.

A cell is one (instance, penalty, scaling, depth, optimizer) combination of
a validated config; each cell runs ``repeats`` times. The seed of every run
is derived from the master seed, the repeat index and a hash of the cell's
own settings, so a run can be repeated from its cell alone, independent of
where the cell sits in a sweep or which worker executes it.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..encoding import build_tsp_qubo, qubo_to_ising
from ..instance import InstanceError, TspInstance, blue_route_tsp, generate_random_tsp, load_instance
from ..metrics import RunRecord, approximation_ratio, metrics_exact, metrics_shots
from ..optimize import Budget, Objective, OptResult, run_optimizer
from ..oracle import optimal_tsp, p_min, scaling_ground_state_gap, scaling_spectral_width
from ..statevector import DiagonalEnergy, expectation, init_basis, sample
from ..variational import AnsatzSpec, linear_schedule, qaoa_prepare, rqaoa_correlations, rqaoa_run, ws_relax

AUTO_PENALTY_FACTOR = 1.2

ALGORITHM_NAMES = {
    "hevqe": "VQE",
    "qaoa": "QAOA",
    "ws_qaoa": "WS-QAOA",
    "aoa": "AOA",
    "rqaoa": "rQAOA",
}


def build_instance(spec: dict) -> TspInstance:
    if "path" in spec:
        inst = load_instance(spec["path"])
        if not isinstance(inst, TspInstance):
            inst = inst.base
        return inst
    if spec["generator"] == "blue-route":
        return blue_route_tsp(spec["n"])
    return generate_random_tsp(spec["n"], spec.get("seed", 0), spec.get("low", 10),
                               spec.get("high", 50), spec.get("euclidean", False))


@lru_cache(maxsize=64)
def _instance_facts(key: str):
    inst = build_instance(json.loads(key))
    tour, L = optimal_tsp(inst)
    return inst, tour, L


@lru_cache(maxsize=64)
def _pmin(key: str) -> float:
    return p_min(_instance_facts(key)[0])


def cell_key(cell: dict, cfg: dict) -> str:
    """Canonical text of everything that determines a cell's runs."""
    doc = {
        "instance": cell["instance"],
        "penalty": cell["penalty"],
        "scaling": cell["scaling"],
        "depth": cell["depth"],
        "optimizer": cell["optimizer"],
        "algorithm": {k: v for k, v in cfg["algorithm"].items() if k != "depth"},
        "budget": {k: v for k, v in cfg["optimizer"].items() if k != "name"},
        "shots": cfg["shots"],
    }
    return json.dumps(doc, sort_keys=True)


def run_seed(master: int, repeat: int, key: str) -> int:
    return int(np.random.SeedSequence([master, repeat, zlib.crc32(key.encode())]).generate_state(1)[0])


def resolve_penalty(penalty, inst_key: str) -> float:
    if penalty == "auto":
        return AUTO_PENALTY_FACTOR * _pmin(inst_key)
    return float(penalty)


def resolve_scaling(scaling, inst: TspInstance, P: float) -> float:
    if scaling == "gap":
        return scaling_ground_state_gap(build_tsp_qubo(inst, 1.0, P))
    if scaling == "width":
        return scaling_spectral_width(build_tsp_qubo(inst, 1.0, P))
    return float(scaling)


def _energy_range(energy: DiagonalEnergy) -> float:
    lo, hi = math.inf, -math.inf
    for _, e in energy.chunks():
        lo, hi = min(lo, float(e.min())), max(hi, float(e.max()))
    return hi - lo


def initial_point(spec: AnsatzSpec, alg: dict, energy: DiagonalEnergy, rng) -> np.ndarray:
    k = spec.n_params
    if alg["init"] == "near-zero":
        return rng.normal(0.0, alg["init_scale"], k)
    if alg["init"] == "linear":
        x0 = linear_schedule(spec.depth, 1.0)
        x0[:spec.depth] *= math.pi / max(_energy_range(energy), 1e-12)
        x0[spec.depth:] *= math.pi / 2
        return x0
    return rng.uniform(0.0, 2 * math.pi, k)


@dataclass
class CellRun:
    record: RunRecord
    result: OptResult | None
    params: np.ndarray | None


def _rqaoa(cell, alg, cfg, qubo, energy, seed):
    """rQAOA run; returns (state, evals, reason)."""
    ham = qubo_to_ising(qubo)
    budget = Budget(cfg["optimizer"]["max_evals"], cfg["optimizer"]["target_tol"],
                    cfg["optimizer"]["max_stall"])
    spent = {"evals": 0, "reason": "converged"}
    rng = np.random.default_rng(seed)

    def source(h):
        e = DiagonalEnergy(values=h.energies())
        p = cell["depth"]
        res = run_optimizer(cell["optimizer"], lambda th: expectation(qaoa_prepare(th, e), e),
                            rng.uniform(0, 2 * math.pi, 2 * p), budget, seed=seed)
        spent["evals"] += res.evals
        if res.reason == "budget":
            spent["reason"] = "budget"
        return rqaoa_correlations(qaoa_prepare(res.x, e))

    out = rqaoa_run(ham, source, alg["stop_dim"])
    if any(s.flagged for s in out.steps):
        spent["reason"] = "flagged"
    return init_basis(out.bits), spent["evals"], spent["reason"]


def run_cell(cell: dict, cfg: dict, repeat: int, zero_time: bool = False,
             trace_path=None) -> CellRun:
    """Execute one repeat of one cell."""
    t0 = time.perf_counter()
    alg = cfg["algorithm"]
    inst_key = json.dumps(cell["instance"], sort_keys=True)
    inst, opt_tour, L = _instance_facts(inst_key)
    key = cell_key(cell, cfg)
    seed = run_seed(cfg["seed"], repeat, key)
    P = resolve_penalty(cell["penalty"], inst_key)
    s = resolve_scaling(cell["scaling"], inst, P)
    qubo = build_tsp_qubo(inst, s, P)
    energy = DiagonalEnergy.from_qubo(qubo)
    kind = alg["ansatz"]
    result = params = None

    if kind == "rqaoa":
        state, evals, reason = _rqaoa(cell, alg, cfg, qubo, energy, seed)
    else:
        x_tilde = ws_relax(qubo).x if kind == "ws_qaoa" else None
        tour = tuple(alg.get("tour") or range(inst.n)) if kind == "aoa" else None
        if kind == "aoa" and len(tour) != inst.n:
            raise InstanceError(f"initial tour has {len(tour)} cities, instance has {inst.n}")
        spec = AnsatzSpec(kind, qubo.dim, cell["depth"], x_tilde, tour)
        rng = np.random.default_rng(seed)
        x0 = initial_point(spec, alg, energy, rng)
        budget = Budget(cfg["optimizer"]["max_evals"], cfg["optimizer"]["target_tol"],
                        cfg["optimizer"]["max_stall"])
        obj = Objective(lambda th: expectation(spec.prepare(th, energy), energy), budget.max_evals)
        result = run_optimizer(cell["optimizer"], obj, x0, budget, seed=seed)
        params = result.x
        state = spec.prepare(params, energy)
        evals, reason = result.evals, result.reason
        if trace_path is not None:
            from ..optimize import write_trace_csv
            write_trace_csv(trace_path, result, zero_time=zero_time)

    E = expectation(state, energy)
    c = qubo_to_ising(qubo).constant
    E_rel, E_opt = E - c, s * L - c
    if cfg["shots"]:
        pair = metrics_shots(sample(state, cfg["shots"], seed), inst, L)
    else:
        pair = metrics_exact(state, inst, L)
    ms = 0.0 if zero_time else (time.perf_counter() - t0) * 1e3
    rec = RunRecord(
        run_id=f"{zlib.crc32(key.encode()):08x}-{repeat}",
        algorithm=ALGORITHM_NAMES[kind],
        ansatz=kind,
        optimizer=cell["optimizer"],
        seed=seed,
        n=inst.n,
        penalty=float(P),
        scaling=float(s),
        depth=int(cell["depth"]),
        energy=float(E_rel),
        energy_opt=float(E_opt),
        approx_ratio=float(approximation_ratio(E_rel, E_opt)),
        m_feas=pair.m_feas,
        m_len=pair.m_len,
        circuit_evals=int(evals),
        wall_time_ms=round(ms, 3),
        termination=reason,
    )
    return CellRun(rec, result, params)


def _job(args):
    cell, cfg, repeat, zero_time, trace_path = args
    return run_cell(cell, cfg, repeat, zero_time, trace_path).record


def run_cells(cells: list, cfg: dict, threads: int = 1, zero_time: bool = False,
              trace_dir=None) -> list[RunRecord]:
    """All repeats of all cells, returned in cell-major order whatever ``threads`` is."""
    jobs = []
    for ci, cell in enumerate(cells):
        for r in range(cfg["repeats"]):
            trace = None
            if trace_dir is not None:
                trace = str(Path(trace_dir) / f"trace_c{ci:03d}_r{r:03d}.csv")
            jobs.append((cell, cfg, r, zero_time, trace))
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    if threads <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_job, jobs))
