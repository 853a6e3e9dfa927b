"""Hardware-efficient VQE against plain QAOA on the same 4-node instances.

VQE usually ends on a single tour; QAOA at depth 5 barely leaves the
infeasible part of the spectrum. Takes a minute or two on one core.
"""
import numpy as np

from qroute.harness.config import expand_cells, validate
from qroute.harness.report import render_text, summarize, summary_table
from qroute.harness.runner import run_cells

instances = [{"generator": "random", "n": 4, "seed": s} for s in (1, 2, 3)]
records = []
for algorithm, scaling in (({"ansatz": "hevqe"}, 1.0), ({"ansatz": "qaoa", "depth": 5}, "gap")):
    cfg = validate({"instance": instances, "algorithm": algorithm, "scaling": scaling,
                    "optimizer": {"name": "nft", "max_evals": 3000}, "repeats": 3})
    records += run_cells(expand_cells(cfg), cfg)

print(render_text(summary_table(summarize(records))))
for name in ("VQE", "QAOA"):
    mf = [r.m_feas for r in records if r.algorithm == name]
    print(f"{name}: median feasibility {np.median(mf):.3f}")
