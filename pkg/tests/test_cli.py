import json
import subprocess
import sys

import numpy as np
import pytest

from umvd import cli
from umvd.harness.generators import generate
from umvd.instance import parse_instance, serialize_instance
from umvd.newick import newick_distances
from umvd.simplex import SimplexError

TRIANGLE = "a,b,1\na,c,1\nb,c,2\n"  # two small distances, one large
ULTRA = "a,b,1\na,c,2\nb,c,2\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def sections(out):
    """Split solve output into {header: lines} by its ``# ...`` headers."""
    blocks, cur = {}, None
    for line in out.splitlines():
        if line.startswith("# "):
            cur = line[2:]
            blocks[cur] = []
        elif line.startswith("cost="):
            blocks["summary"] = line
        elif cur is not None:
            blocks[cur].append(line)
    return blocks


def summary(line):
    return {k: float(v) for k, v in (f.split("=") for f in line.split())}


def test_solve_ultrametric_input(tmp_path, capsys):
    assert cli.main(["solve", write(tmp_path, "u.txt", ULTRA), "--seed", "1"]) == 0
    b = sections(capsys.readouterr().out)
    assert b["modifications"] == ["u,v,old,new"]
    assert summary(b["summary"])["cost"] == 0


def test_solve_triangle_seeds(tmp_path, capsys):
    path = write(tmp_path, "t.txt", TRIANGLE)
    costs = []
    for seed in range(500):
        assert cli.main(["solve", path, "--seed", str(seed)]) == 0
        b = sections(capsys.readouterr().out)
        s = summary(b["summary"])
        assert len(b["modifications"]) - 1 == s["cost"]
        costs.append(s["cost"])
    assert set(costs) <= {1, 2, 3}
    assert np.mean(costs) <= 5


def test_solve_kpartite_fills_unspecified(tmp_path, capsys):
    inst = generate("kpartite_perturbed", 6, 3, k=1, seed=2)
    path = write(tmp_path, "k.txt", serialize_instance(inst))
    assert cli.main(["solve", path, "--mode", "kpartite", "--seed", "0"]) == 0
    b = sections(capsys.readouterr().out)
    rows = [r.split(",") for r in b["pairs"][1:]]
    assert len(rows) == 15
    assert sum(r[3] == "0" for r in rows) == len(inst.unspecified)
    assert all(float(r[2]) > 0 for r in rows)


def test_solve_then_check(tmp_path, capsys):
    for seed in range(10):
        inst = generate("random_levels", 7, 3, seed=seed, weighted=True)
        path = write(tmp_path, "w.txt", serialize_instance(inst))
        out = str(tmp_path / "fit.txt")
        assert cli.main(["solve", path, "--mode", "weighted", "--seed", str(seed), "--output", out]) == 0
        b = sections(capsys.readouterr().out)
        lab = {l: k for k, l in enumerate(inst.labels)}
        changed = sum(inst.weights[lab[r.split(",")[0]], lab[r.split(",")[1]]] for r in b["modifications"][1:])
        assert changed == pytest.approx(summary(b["summary"])["cost"])
        assert cli.main(["check", out]) == 0
        capsys.readouterr()


def test_check_exit_codes(tmp_path, capsys):
    assert cli.main(["check", write(tmp_path, "u.txt", "3\n0,1,2\n1,0,2\n2,2,0\n")]) == 0
    assert cli.main(["check", write(tmp_path, "t.txt", "3\n0,1,1\n1,0,2\n1,2,0\n")]) == 1
    assert "(1,2,3)" in capsys.readouterr().out
    assert cli.main(["check", write(tmp_path, "i.txt", "3\n0,1,*\n1,0,2\n*,2,0\n")]) == 2


def test_trace_and_dump(tmp_path, capsys):
    path = write(tmp_path, "t.txt", TRIANGLE)
    trace, lp = tmp_path / "t.jsonl", tmp_path / "t.lp"
    assert cli.main(["solve", path, "--seed", "2", "--trace", str(trace), "--dump-lp", str(lp)]) == 0
    recs = [json.loads(line) for line in trace.read_text().splitlines()]
    assert recs[0]["frame"] == 0 and recs[0]["labels"] == ["a", "b", "c"]
    assert "Subject To" in lp.read_text()


def test_seed_drawn_and_printed(tmp_path, capsys):
    assert cli.main(["solve", write(tmp_path, "t.txt", TRIANGLE)]) == 0
    err = capsys.readouterr().err
    assert "seed=" in err
    seed = err.split("seed=")[1].split()[0]
    assert cli.main(["solve", write(tmp_path, "t.txt", TRIANGLE), "--seed", seed]) == 0


def test_parameter_overrides_report(tmp_path, capsys):
    path = write(tmp_path, "t.txt", TRIANGLE)
    cli.main(["solve", path, "--seed", "0", "--alpha", "1/2"])
    assert "guarantee" in capsys.readouterr().err
    cli.main(["solve", path, "--seed", "0", "--alpha", "0.2"])
    assert "warning" in capsys.readouterr().err


def test_input_errors_exit_2(tmp_path, capsys):
    assert cli.main(["solve", str(tmp_path / "missing.txt")]) == 2
    assert cli.main(["solve", write(tmp_path, "bad.txt", "a,b,0\n"), "--seed", "0"]) == 2
    assert cli.main(["solve", write(tmp_path, "t.txt", TRIANGLE), "--seed", "0", "--alpha", "0.9"]) == 2
    assert "alpha" in capsys.readouterr().err


def test_solver_failure_exit_3(tmp_path, capsys, monkeypatch):
    def fail(lp):
        raise SimplexError("synthetic")

    monkeypatch.setattr(cli, "solve_lp", fail)
    assert cli.main(["solve", write(tmp_path, "t.txt", TRIANGLE), "--seed", "0"]) == 3


def test_lower_bound_and_exact(tmp_path, capsys):
    path = write(tmp_path, "t.txt", TRIANGLE)
    assert cli.main(["lower-bound", path]) == 0
    assert "lp_bound=1 " in capsys.readouterr().out
    assert cli.main(["exact", path]) == 0
    assert "opt_cost=1" in capsys.readouterr().out
    big = write(tmp_path, "big.txt", serialize_instance(generate("random_levels", 8, 3, seed=0)))
    assert cli.main(["exact", big, "--oracle-budget", "100"]) == 3


def test_newick(tmp_path, capsys):
    assert cli.main(["newick", write(tmp_path, "u.txt", "a,b,2\na,c,4\nb,c,4\n")]) == 0
    assert capsys.readouterr().out.strip() == "((a:1,b:1):1,c:2);"
    assert cli.main(["newick", write(tmp_path, "t.txt", TRIANGLE)]) == 1
    assert cli.main(["newick", write(tmp_path, "t.txt", TRIANGLE), "--fit", "--seed", "3"]) == 0
    labels, D = newick_distances(capsys.readouterr().out.strip())
    assert sorted(labels) == ["a", "b", "c"]


def test_bench_report(tmp_path, capsys):
    rd = tmp_path / "rep"
    argv = ["bench", "--mode", "complete", "--n", "6,8", "--trials", "4", "--k", "2", "--seed", "5",
            "--report-dir", str(rd), "--oracle-budget", "20000000", "--audit"]
    assert cli.main(argv) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("n,trials") and len(lines) == 3
    assert {p.name for p in rd.iterdir()} == {"trials.csv", "summary.json", "ratio_hist.png", "ratio_trend.png"}


def test_console_entry_point(tmp_path):
    path = write(tmp_path, "u.txt", ULTRA)
    r = subprocess.run([sys.executable, "-m", "umvd.cli", "solve", path, "--seed", "0"], capture_output=True, text=True)
    assert r.returncode == 0 and "cost=0" in r.stdout
