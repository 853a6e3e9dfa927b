import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qroute.encoding import build_tsp_qubo, index_to_bits, qubo_to_ising
from qroute.harness.cli import main
from qroute.harness.config import ConfigError, expand_cells, validate
from qroute.harness.landscape import random_directions, scan
from qroute.harness.runner import run_cell
from qroute.instance import load_instance
from qroute.oracle import p_min


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def vqe_config(**kw):
    doc = {
        "instance": {"generator": "random", "n": 4, "seed": 3},
        "algorithm": {"ansatz": "hevqe"},
        "optimizer": {"name": "nft", "max_evals": 2000},
        "penalty": 100,
        "repeats": 2,
    }
    doc.update(kw)
    return doc


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ----------------------------------------------------------------------------


def test_defaults():
    cfg = validate({"instance": {"generator": "random", "n": 4},
                    "algorithm": {"ansatz": "qaoa"}, "optimizer": {"name": "powell"}})
    assert cfg["algorithm"]["depth"] == 5
    assert cfg["algorithm"]["init"] == "random"
    assert cfg["optimizer"]["max_evals"] == 10000
    assert cfg["shots"] == 0 and cfg["penalty"] == 100.0
    vqe = validate(vqe_config())
    assert vqe["algorithm"]["init"] == "near-zero" and vqe["algorithm"]["depth"] == 1


@pytest.mark.parametrize("doc, where", [
    ({"instance": {"generator": "random", "n": 2}}, "instance"),
    ({"optimizer": {"name": "adam"}}, "optimizer"),
    ({"penalty": -1}, "penalty"),
    ({"extra": 1}, "root"),
    ({"sweep": {"depth": []}}, "sweep"),
])
def test_schema_errors(doc, where):
    with pytest.raises(ConfigError, match=where):
        validate(vqe_config(**doc))


def test_linear_init_needs_alternating_ansatz():
    with pytest.raises(ConfigError):
        validate(vqe_config(algorithm={"ansatz": "hevqe", "init": "linear"}))


def test_cell_expansion_order():
    cfg = validate(vqe_config(sweep={"penalty": [50, 100], "depth": [1, 2]}))
    cells = expand_cells(cfg)
    assert [(c["penalty"], c["depth"]) for c in cells] == [(50, 1), (50, 2), (100, 1), (100, 2)]


# -- generate / encode / oracle ----------------------------------------------------------


def test_generate(tmp_path):
    out = tmp_path / "t.json"
    assert main(["generate", "--tsp", "-n", "4", "--seed", "7", "--out", str(out)]) == 0
    inst = load_instance(out)
    assert inst.n == 4 and inst.distances[0, 1] == 35
    assert main(["generate", "--tsp", "-n", "2"]) == 2
    blue = tmp_path / "b.json"
    assert main(["generate", "--blue-route", "-n", "5", "--out", str(blue)]) == 0
    assert "shortest-path" in json.loads(blue.read_text())["note"]
    cvrp = tmp_path / "c.json"
    assert main(["generate", "--sample-cvrp", "--out", str(cvrp)]) == 0
    assert json.loads(cvrp.read_text())["capacity"] == 10


def parse_qubo_text(text, dim):
    lines = text.splitlines()
    offset = float(lines[0].split("offset=")[1])
    q = np.zeros((dim, dim))
    for line in lines[2:]:
        i, j, v = line.split()
        q[int(i), int(j)] = float(v)
    return q, offset


def test_encode_round_trips(tmp_path):
    inst_path = tmp_path / "t.json"
    main(["generate", "--tsp", "-n", "4", "--seed", "7", "--out", str(inst_path)])
    out = tmp_path / "q.txt"
    assert main(["encode", str(inst_path), "--penalty", "80", "--out", str(out)]) == 0
    q, off = parse_qubo_text(out.read_text(), 9)
    ref = build_tsp_qubo(load_instance(inst_path), 1.0, 80.0)
    for k in range(0, 512, 37):
        x = index_to_bits(k, 9)
        assert x @ q @ x + off == pytest.approx(ref.energy(x))
    out2 = tmp_path / "i.txt"
    assert main(["encode", str(inst_path), "--ising", "--penalty", "auto", "--out", str(out2)]) == 0
    P = 1.2 * p_min(load_instance(inst_path))
    const = float(out2.read_text().splitlines()[0].split("constant=")[1])
    assert const == pytest.approx(qubo_to_ising(build_tsp_qubo(load_instance(inst_path), 1.0, P)).constant)


def test_oracle_report(tmp_path, capsys):
    inst_path = tmp_path / "t.json"
    main(["generate", "--tsp", "-n", "4", "--seed", "7", "--out", str(inst_path)])
    capsys.readouterr()
    assert main(["oracle", str(inst_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert {"L_opt", "tour", "p_min", "gap", "width", "c", "f"} <= set(rep)
    assert rep["L_opt"] == 137 and rep["tour"] == [0, 1, 3, 2] and rep["p_min"] > 0
    assert main(["oracle", "-n", "12"]) == 3
    assert main(["oracle", "--pmin-study", "--sizes", "4,12"]) == 3


def test_oracle_pmin_study_small(capsys):
    assert main(["oracle", "--pmin-study", "--sizes", "4", "--count", "4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["values"]["4"]) == 4


# -- solve / sweep -----------------------------------------------------------------------


def test_solve_writes_records_and_traces(tmp_path):
    cfg = write_json(tmp_path / "c.json", vqe_config())
    out = tmp_path / "runs.csv"
    assert main(["solve", cfg, "--out", str(out), "--trace-dir", str(tmp_path / "tr")]) == 0
    rows = read_rows(out)
    assert len(rows) == 2
    assert list(rows[0]) == [
        "run_id", "algorithm", "ansatz", "optimizer", "seed", "n", "penalty", "scaling",
        "depth", "energy", "energy_opt", "approx_ratio", "m_feas", "m_len",
        "circuit_evals", "wall_time_ms", "termination",
    ]
    traces = sorted((tmp_path / "tr").iterdir())
    assert len(traces) == 2
    assert len(traces[0].read_text().splitlines()) == int(rows[0]["circuit_evals"]) + 1


def test_solve_rejects_multi_cell_and_bad_optimizer(tmp_path):
    cfg = write_json(tmp_path / "c.json", vqe_config(sweep={"penalty": [50, 100]}))
    assert main(["solve", cfg]) == 2
    bad = write_json(tmp_path / "b.json", vqe_config(optimizer={"name": "slsqp"}))
    assert main(["solve", bad]) == 2


def test_memory_guard_exit_code(tmp_path):
    cfg = write_json(tmp_path / "c.json", vqe_config(
        instance={"generator": "random", "n": 7}, repeats=1))
    assert main(["solve", cfg, "--out", str(tmp_path / "x.csv")]) == 3


def test_sweep_deterministic_and_thread_independent(tmp_path):
    doc = vqe_config(algorithm={"ansatz": "qaoa", "depth": 2},
                     optimizer={"name": "powell", "max_evals": 120},
                     sweep={"penalty": [60, "auto"], "optimizer": ["powell", "spsa"]})
    cfg = write_json(tmp_path / "s.json", doc)
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    assert main(["sweep", cfg, "--out", str(a), "--zero-time"]) == 0
    assert main(["sweep", cfg, "--out", str(b), "--zero-time"]) == 0
    assert main(["sweep", cfg, "--out", str(c), "--zero-time", "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert (tmp_path / "a_summary.csv").exists()
    rows = read_rows(a)
    assert len(rows) == 8
    auto = [r for r in rows if r["penalty"] != "60.0"]
    P = 1.2 * p_min(load_instance_spec(doc["instance"]))
    assert all(float(r["penalty"]) == pytest.approx(P) for r in auto)


def load_instance_spec(spec):
    from qroute.harness.runner import build_instance
    return build_instance(spec)


def test_single_cell_sweep_equals_solve(tmp_path):
    cfg = write_json(tmp_path / "c.json", vqe_config())
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["solve", cfg, "--out", str(a), "--zero-time"])
    main(["sweep", cfg, "--out", str(b), "--zero-time"])
    assert a.read_bytes() == b.read_bytes()


def test_runs_rederivable_in_isolation(tmp_path):
    doc = vqe_config(sweep={"penalty": [60, 100]})
    cfg = validate(doc)
    cells = expand_cells(cfg)
    from qroute.harness.runner import run_cells
    all_rows = run_cells(cells, cfg, zero_time=True)
    alone = validate(vqe_config(penalty=100))
    again = run_cells(expand_cells(alone), alone, zero_time=True)
    assert all_rows[2:] == again


def test_shots_agree_with_exact(tmp_path):
    cfg = validate(vqe_config(repeats=1))
    cell = expand_cells(cfg)[0]
    exact = run_cell(cell, cfg, 0, zero_time=True).record
    cfg_shots = dict(cfg, shots=10 ** 6)
    shot = run_cell(cell, cfg_shots, 0, zero_time=True).record
    p = exact.m_feas
    sigma = max(np.sqrt(p * (1 - p) / 10 ** 6), 1e-9)
    assert abs(shot.m_feas - p) <= 3 * sigma + 1e-9


@pytest.mark.parametrize("ansatz", ["ws_qaoa", "aoa", "rqaoa"])
def test_other_ansatz_kinds_run(ansatz):
    cfg = validate({
        "instance": {"generator": "random", "n": 4, "seed": 1},
        "algorithm": {"ansatz": ansatz, "depth": 1},
        "optimizer": {"name": "powell", "max_evals": 60},
    })
    rec = run_cell(expand_cells(cfg)[0], cfg, 0).record
    assert rec.ansatz == ansatz and rec.circuit_evals > 0
    if ansatz == "aoa":
        assert rec.m_feas == pytest.approx(1.0)


def test_linear_init_qaoa():
    cfg = validate({
        "instance": {"generator": "random", "n": 4, "seed": 1},
        "algorithm": {"ansatz": "qaoa", "depth": 3, "init": "linear"},
        "optimizer": {"name": "nelder-mead", "max_evals": 30},
    })
    assert run_cell(expand_cells(cfg)[0], cfg, 0).record.circuit_evals == 30


# -- landscape -----------------------------------------------------------------------------


def test_directions_orthonormal_and_deterministic():
    d1, d2 = random_directions(27, 5)
    assert abs(d1 @ d1 - 1) < 1e-12 and abs(d2 @ d2 - 1) < 1e-12 and abs(d1 @ d2) < 1e-12
    e1, e2 = random_directions(27, 5)
    assert np.array_equal(d1, e1) and np.array_equal(d2, e2)
    with pytest.raises(ValueError):
        random_directions(1, 0)


def test_scan_shapes():
    sc = scan(lambda x: float(np.sum(np.cos(x))), np.zeros(4), 0, 1.0, 5)
    assert sc.cost.shape == (5, 5) and sc.t1[0] == -1.0
    assert scan(lambda x: 1.0, np.zeros(4), 0, 0.0, 101).cost.shape == (1, 1)


def test_landscape_cli(tmp_path):
    doc = {"instance": {"generator": "random", "n": 4, "seed": 0},
           "algorithm": {"ansatz": "qaoa"}, "optimizer": {"name": "nft"}}
    cfg = write_json(tmp_path / "l.json", doc)
    out, svg = tmp_path / "l.csv", tmp_path / "l.svg"
    assert main(["landscape", cfg, "--out", str(out), "--svg", str(svg)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "theta1,theta2,cost" and len(lines) == 101 * 101 + 1
    assert svg.read_text().startswith("<svg") and svg.read_text().count("<rect") == 101 * 101
    z = tmp_path / "z.csv"
    assert main(["landscape", cfg, "--extent", "0", "--out", str(z)]) == 0
    assert len(z.read_text().splitlines()) == 2


def test_vqe_landscape_cli(tmp_path):
    cfg = write_json(tmp_path / "v.json", vqe_config())
    out = tmp_path / "v.csv"
    assert main(["landscape", cfg, "--out", str(out), "--resolution", "11"]) == 0
    assert len(out.read_text().splitlines()) == 122


# -- report ----------------------------------------------------------------------------------


def test_report(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", vqe_config())
    runs = tmp_path / "r.csv"
    main(["solve", cfg, "--out", str(runs), "--zero-time"])
    rows = read_rows(runs)
    # a second group: zero feasibility, budget exhausted
    extra = dict(rows[0], optimizer="spsa", m_feas="0.0", m_len="---", termination="budget")
    with open(runs, "a", newline="") as fh:
        csv.writer(fh).writerow(extra.values())
    capsys.readouterr()
    summary = tmp_path / "s.csv"
    assert main(["report", str(runs), "--out", str(summary)]) == 0
    text = capsys.readouterr().out
    table = list(csv.reader(open(summary)))
    assert len(table) == 3
    nft_row, spsa_row = table[1], table[2]
    assert "±" in nft_row[table[0].index("m_feas")]
    assert spsa_row[table[0].index("m_len")] == "---"
    assert spsa_row[table[0].index("circuit_evals")].endswith("*")
    assert "---" in text


def test_report_schema_mismatch(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("run_id,algorithm,foo\n1,VQE,3\n")
    assert main(["report", str(bad)]) == 2
    assert "'ansatz'" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "qroute", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "encode", "oracle", "solve", "sweep", "landscape", "report"):
        assert cmd in out.stdout
