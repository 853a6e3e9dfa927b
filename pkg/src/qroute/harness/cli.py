"""Command-line interface: ``qroute <command> ...`` or ``python3 -m qroute``.

Exit status is 0 on success, 2 for invalid input (arguments, configs,
instance files, CSV schemas) and 3 when a request exceeds a resource bound
(enumeration limits, simulator memory guard).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from ..encoding import (
    EncodingError,
    build_clustering_qubo,
    build_cvrp_qubo,
    build_tsp_qubo,
    qubo_to_ising,
)
from ..instance import (
    CvrpInstance,
    InstanceError,
    dumps_instance,
    blue_route_tsp,
    sample_cvrp,
    generate_random_tsp,
    load_instance,
)
from ..optimize import OptimizerError
from ..oracle import (
    MAX_PMIN_NODES,
    MAX_SPECTRUM_DIM,
    BoundError,
    optimal_tsp,
    p_min,
    pmin_statistics,
    scaling_ground_state_gap,
    scaling_spectral_width,
    uniform_baseline,
)
from ..statevector import MemoryGuardError, expectation
from ..variational import AnsatzError, AnsatzSpec, ws_relax
from . import landscape as ls
from .config import ConfigError, expand_cells, load_config
from .report import SchemaError, report, summarize, summary_table, render_text, write_records, write_summary_csv
from .runner import (
    AUTO_PENALTY_FACTOR,
    _instance_facts,
    cell_key,
    initial_point,
    resolve_penalty,
    resolve_scaling,
    run_cells,
    run_seed,
)

EXIT_OK, EXIT_INVALID, EXIT_BOUND = 0, 2, 3


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _number_or(choices):
    def parse(v):
        if v in choices:
            return v
        try:
            x = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number or one of {choices}") from None
        if not x > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return x
    return parse


# -- generate / encode / oracle -----------------------------------------------------


def cmd_generate(args) -> int:
    if args.sample_cvrp:
        inst = sample_cvrp()
    elif args.blue_route:
        inst = blue_route_tsp(args.n if args.n is not None else 6)
    else:
        if args.n is None:
            raise InstanceError("--tsp needs -n")
        inst = generate_random_tsp(args.n, args.seed, args.low, args.high, args.euclidean)
    _emit(dumps_instance(inst), args.out)
    return EXIT_OK


def _penalty_value(penalty, inst) -> float:
    if penalty == "auto":
        return AUTO_PENALTY_FACTOR * p_min(inst)
    return float(penalty)


def qubo_text(qubo) -> str:
    lines = [f"# qubo dim={qubo.dim} offset={qubo.offset!r}", "# i j value (upper triangle, x^T q x)"]
    q = qubo.q
    for i in range(qubo.dim):
        for j in range(i, qubo.dim):
            v = q[i, j] if i == j else 2 * q[i, j]
            if v != 0:
                lines.append(f"{i} {j} {float(v)!r}")
    return "\n".join(lines) + "\n"


def ising_text(ham) -> str:
    lines = [f"# ising dim={ham.dim} constant={ham.constant!r}"]
    for i, h in enumerate(ham.h):
        if h != 0:
            lines.append(f"h {i} {float(h)!r}")
    for i in range(ham.dim):
        for j in range(i + 1, ham.dim):
            if ham.J[i, j] != 0:
                lines.append(f"J {i} {j} {float(ham.J[i, j])!r}")
    return "\n".join(lines) + "\n"


def cmd_encode(args) -> int:
    inst = load_instance(args.instance)
    if args.model == "tsp":
        base = inst.base if isinstance(inst, CvrpInstance) else inst
        P = _penalty_value(args.penalty, base)
        s = resolve_scaling(args.scaling, base, P)
        qubo = build_tsp_qubo(base, s, P)
    else:
        if not isinstance(inst, CvrpInstance):
            raise InstanceError(f"{args.model} encoding needs demands and a capacity")
        if args.penalty == "auto" or args.scaling != 1.0:
            raise ConfigError("auto penalty and scaling strategies apply to the TSP model only")
        if args.model == "cvrp":
            qubo = build_cvrp_qubo(inst, P1=args.penalty, P2=args.penalty, P3=args.penalty)
        else:
            qubo = build_clustering_qubo(inst, args.penalty, args.penalty)
    text = ising_text(qubo_to_ising(qubo)) if args.ising else qubo_text(qubo)
    _emit(text, args.out)
    return EXIT_OK


def oracle_report(inst, P: float = 100.0) -> dict:
    if inst.n > MAX_PMIN_NODES:
        raise BoundError(f"oracle reports are limited to n <= {MAX_PMIN_NODES}, got {inst.n}")
    tour, L = optimal_tsp(inst)
    c, f = uniform_baseline(inst)
    gap = width = None
    if (inst.n - 1) ** 2 <= MAX_SPECTRUM_DIM:
        qubo = build_tsp_qubo(inst, 1.0, P)
        gap, width = scaling_ground_state_gap(qubo), scaling_spectral_width(qubo)
    return {"L_opt": L, "tour": list(tour), "p_min": p_min(inst), "gap": gap,
            "width": width, "c": c, "f": f, "penalty": P}


def cmd_oracle(args) -> int:
    if args.pmin_study:
        sizes = [int(v) for v in args.sizes.split(",")]
        bad = [n for n in sizes if n > MAX_PMIN_NODES]
        if bad:
            raise BoundError(f"P_min study limited to n <= {MAX_PMIN_NODES}, got {bad[0]}")
        if any(n < 3 for n in sizes):
            raise InstanceError("sizes must be at least 3")
        rep = pmin_statistics(sizes, args.count, args.seed, args.low, args.high).as_dict()
    else:
        if args.instance is None:
            if args.n is None:
                raise InstanceError("give an instance file or -n for a random instance")
            if args.n > MAX_PMIN_NODES:
                raise BoundError(f"oracle reports are limited to n <= {MAX_PMIN_NODES}, got {args.n}")
            inst = generate_random_tsp(args.n, args.seed)
        else:
            inst = load_instance(args.instance)
            if isinstance(inst, CvrpInstance):
                inst = inst.base
        rep = oracle_report(inst, args.penalty)
    _emit(json.dumps(rep, indent=2) + "\n", args.out)
    return EXIT_OK


# -- experiments --------------------------------------------------------------------


def _load(args) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "penalty", None) is not None:
        cfg["penalty"] = args.penalty
        cfg.get("sweep", {}).pop("penalty", None)
    if getattr(args, "init", None) is not None:
        if args.init == "linear" and cfg["algorithm"]["ansatz"] in ("hevqe", "rqaoa"):
            raise ConfigError("linear initialisation applies to alternating ansätze only")
        cfg["algorithm"]["init"] = args.init
    if getattr(args, "shots", None) is not None:
        cfg["shots"] = args.shots
    return cfg


def cmd_solve(args) -> int:
    cfg = _load(args)
    cells = expand_cells(cfg)
    if len(cells) != 1:
        raise ConfigError(f"solve runs a single cell but the config expands to {len(cells)}; use sweep")
    records = run_cells(cells, cfg, args.threads, args.zero_time, args.trace_dir)
    write_records(args.out or cfg["output"], records)
    for r in records:
        ml = "---" if r.m_len is None else f"{r.m_len:.4f}"
        print(f"{r.run_id} seed={r.seed} E={r.energy:.4f} m_feas={r.m_feas:.4f} "
              f"m_len={ml} evals={r.circuit_evals} ({r.termination})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    cells = expand_cells(cfg)
    records = run_cells(cells, cfg, args.threads, args.zero_time, args.trace_dir)
    out = Path(args.out or cfg["output"])
    write_records(out, records)
    table = summary_table(summarize(records))
    write_summary_csv(out.with_name(out.stem + "_summary.csv"), table)
    sys.stdout.write(render_text(table))
    return EXIT_OK


def cmd_landscape(args) -> int:
    cfg = _load(args)
    cell = expand_cells(cfg)[0]
    alg = cfg["algorithm"]
    if alg["ansatz"] == "rqaoa":
        raise ConfigError("landscapes are defined for single-circuit ansätze")
    inst, _, _ = _instance_facts(json.dumps(cell["instance"], sort_keys=True))
    P = resolve_penalty(cell["penalty"], json.dumps(cell["instance"], sort_keys=True))
    s = resolve_scaling(cell["scaling"], inst, P)
    from ..statevector import DiagonalEnergy
    qubo = build_tsp_qubo(inst, s, P)
    energy = DiagonalEnergy.from_qubo(qubo)
    x_tilde = ws_relax(qubo).x if alg["ansatz"] == "ws_qaoa" else None
    tour = tuple(alg.get("tour") or range(inst.n)) if alg["ansatz"] == "aoa" else None
    spec = AnsatzSpec(alg["ansatz"], qubo.dim, cell["depth"], x_tilde, tour)
    seed = run_seed(cfg["seed"], 0, cell_key(cell, cfg))
    import numpy as np
    x0 = initial_point(spec, alg, energy, np.random.default_rng(seed))
    sc = ls.scan(lambda th: expectation(spec.prepare(th, energy), energy), x0, seed,
                 args.extent, args.resolution)
    out = args.out or "landscape.csv"
    ls.write_csv(out, sc)
    if args.svg:
        Path(args.svg).write_text(ls.to_svg(sc, title=f"{alg['ansatz']} depth {cell['depth']}"))
    print(f"{sc.cost.size} points written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    table, text = report(args.csv)
    if args.out:
        write_summary_csv(args.out, table)
    sys.stdout.write(text)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _experiment_flags(p, runs: bool = True):
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--penalty", type=_number_or(("auto",)), default=None,
                   help="penalty P, or 'auto' for 1.2 P_min")
    p.add_argument("--init", choices=("random", "linear", "near-zero"), default=None)
    if runs:
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--shots", type=int, default=None, help="0 for exact metrics")
        p.add_argument("--zero-time", action="store_true",
                       help="write wall times as 0 so repeated runs give identical files")
        p.add_argument("--trace-dir", default=None, help="directory for per-run optimizer traces")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qroute", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an instance file")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--tsp", action="store_true", help="random symmetric TSP")
    kind.add_argument("--blue-route", action="store_true", help="TSP on the depot and the blue-route customers")
    kind.add_argument("--sample-cvrp", action="store_true", help="full 11-node sample CVRP")
    g.add_argument("-n", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--low", type=float, default=10)
    g.add_argument("--high", type=float, default=50)
    g.add_argument("--euclidean", action="store_true")
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("encode", help="export a QUBO or Ising model as text")
    e.add_argument("instance")
    e.add_argument("--model", choices=("tsp", "cvrp", "clustering"), default="tsp")
    e.add_argument("--penalty", type=_number_or(("auto",)), default=100.0)
    e.add_argument("--scaling", type=_number_or(("gap", "width")), default=1.0)
    e.add_argument("--ising", action="store_true", help="write h, J and the constant instead")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_encode)

    o = sub.add_parser("oracle", help="brute-force facts about an instance")
    o.add_argument("instance", nargs="?", default=None)
    o.add_argument("-n", type=int, default=None, help="random instance size when no file is given")
    o.add_argument("--penalty", type=float, default=100.0, help="penalty for the scaling factors")
    o.add_argument("--pmin-study", action="store_true")
    o.add_argument("--sizes", default="4,5,6")
    o.add_argument("--count", type=int, default=100)
    o.add_argument("--low", type=float, default=10)
    o.add_argument("--high", type=float, default=50)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("solve", help="run a single cell")
    _experiment_flags(s)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run the cartesian product of sweep values")
    _experiment_flags(w)
    w.set_defaults(func=cmd_sweep)

    la = sub.add_parser("landscape", help="cost on a random 2-D plane through the start point")
    _experiment_flags(la, runs=False)
    la.add_argument("--resolution", type=int, default=101)
    la.add_argument("--extent", type=float, default=math.pi)
    la.add_argument("--svg", default=None, help="also write an SVG heatmap")
    la.set_defaults(func=cmd_landscape)

    r = sub.add_parser("report", help="summarise RunRecord CSV files")
    r.add_argument("csv", nargs="+")
    r.add_argument("--out", default=None, help="summary CSV path")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BoundError, MemoryGuardError) as exc:
        print(f"qroute: resource bound: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (ConfigError, InstanceError, EncodingError, AnsatzError, OptimizerError,
            SchemaError, ValueError) as exc:
        print(f"qroute: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qroute: {exc}", file=sys.stderr)
        return EXIT_INVALID
