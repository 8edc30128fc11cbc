"""End-to-end tests for the command line interface.

Every test drives ``rfplan.cli.main`` in process and checks exit codes,
stdout/stderr, and the files the commands leave behind.
"""
from __future__ import annotations

import contextlib
import io
import json
import os
import re
import stat
import sys

import pytest

from conftest import DATA
from rfplan.cli import main
from rfplan.forest import FeatureMeta, Leaf, RandomForest, Split, fingerprint, persist, restore
from rfplan.maxsat import wcnf_read
from rfplan.offline import db_restore


def run(args):
    """Invoke the CLI in process; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rv = main([str(a) for a in args])
    return rv, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A trained demo model plus its preprocessed goal database."""
    d = tmp_path_factory.mktemp("cli-ws")
    model, db = d / "model.json", d / "db.jsonl"
    rv, _, _ = run(["train", "--data", DATA / "demo.csv", "--schema", DATA / "demo_schema.json",
                    "--out", model, "--trees", 5, "--max-depth", 3, "--seed", 0,
                    "--test-fraction", 0.25])
    assert rv == 0
    rv, _, _ = run(["preprocess", "--model", model, "--out", db, "--target", 1, "--quiet"])
    assert rv == 0
    return {"dir": d, "model": model, "db": db, "gdb": db_restore(db)}


@pytest.fixture(scope="module")
def hardws(tmp_path_factory):
    """A model that splits only on an immutable feature: no state can be changed."""
    d = tmp_path_factory.mktemp("cli-hard")
    forest = RandomForest(
        features=(FeatureMeta(name="gender", kind="categorical", mutability="hard",
                              categories=("male", "female")),),
        classes=(0, 1),
        trees=(Split(feature=0, categories=frozenset({"male"}), left=Leaf(0), right=Leaf(1)),),
        weights=(1.0,),
    )
    model, db = d / "hard.json", d / "hdb.jsonl"
    persist(forest, str(model))
    rv, _, _ = run(["preprocess", "--model", model, "--out", db, "--target", 1, "--quiet"])
    assert rv == 0
    return {"model": model, "db": db}


# top-level behaviour


def test_version_exits_zero():
    rv, out, _ = run(["--version"])
    assert rv == 0
    assert "rfplan" in out and "version" in out


def test_help_lists_commands():
    rv, out, _ = run(["--help"])
    assert rv == 0
    for cmd in ("train", "partitions", "preprocess", "plan", "greedy",
                "oracle", "export-wcnf", "bench"):
        assert cmd in out


def test_unknown_command_is_an_error():
    rv, out, err = run(["frobnicate"])
    assert rv == 3
    assert out == ""
    assert "error" in err.lower() and "frobnicate" in err


# train


def test_train_writes_model_and_reports(tmp_path):
    out_path = tmp_path / "m.json"
    rv, out, err = run(["train", "--data", DATA / "demo.csv",
                        "--schema", DATA / "demo_schema.json", "--out", out_path,
                        "--trees", 3, "--max-depth", 3, "--seed", 1,
                        "--test-fraction", 0.25])
    assert rv == 0 and err == ""
    assert "trained 3 trees on 18 rows" in out
    assert "holdout accuracy:" in out
    forest = restore(str(out_path))
    assert len(forest.trees) == 3
    m = re.search(r"fingerprint ([0-9a-f]+)", out)
    assert m and fingerprint(forest).startswith(m.group(1))


def test_train_without_holdout_prints_no_accuracy(tmp_path):
    rv, out, _ = run(["train", "--data", DATA / "demo.csv",
                      "--schema", DATA / "demo_schema.json",
                      "--out", tmp_path / "m.json", "--trees", 2, "--seed", 0])
    assert rv == 0
    assert "trained 2 trees on 24 rows" in out
    assert "holdout accuracy" not in out


def test_train_missing_data_file(tmp_path):
    rv, out, err = run(["train", "--data", tmp_path / "nope.csv",
                        "--schema", DATA / "demo_schema.json",
                        "--out", tmp_path / "m.json"])
    assert rv == 3
    assert out == ""
    assert err.startswith("error:")


# partitions


def test_partitions_human_output(ws):
    rv, out, err = run(["partitions", "--model", ws["model"]])
    assert rv == 0 and err == ""
    assert "3 features, 40 states" in out
    assert "gender [categorical, hard] 2 cells" in out
    assert "visits [numerical, soft]" in out and "thresholds:" in out


def test_partitions_json_payload(ws):
    rv, out, _ = run(["partitions", "--model", ws["model"], "--json"])
    assert rv == 0
    payload = json.loads(out)
    names = [f["name"] for f in payload["features"]]
    assert names == ["gender", "visits", "balance"]
    cells = [f["cells"] for f in payload["features"]]
    assert payload["state_count"] == cells[0] * cells[1] * cells[2] == 40
    gender = payload["features"][0]
    assert gender["kind"] == "categorical" and gender["mutability"] == "hard"


# preprocess


def test_preprocess_reports_and_is_restorable(ws, tmp_path):
    out_path = tmp_path / "db.jsonl"
    rv, out, _ = run(["preprocess", "--model", ws["model"], "--out", out_path,
                      "--target", 1, "--quiet"])
    assert rv == 0
    assert re.search(r"searched 40 states in [\d.]+s", out)
    assert "goal database written to" in out
    gdb = db_restore(out_path)
    assert len(gdb) == 40
    assert gdb.fingerprint == fingerprint(restore(str(ws["model"])))


def test_preprocess_states_data_restricts_to_observed_rows(ws, tmp_path):
    out_path = tmp_path / "db.jsonl"
    rv, _, _ = run(["preprocess", "--model", ws["model"], "--out", out_path,
                    "--target", 1, "--quiet", "--states", "data",
                    "--data", DATA / "demo.csv", "--schema", DATA / "demo_schema.json"])
    assert rv == 0
    # 24 rows discretize onto 16 distinct states, far fewer than the 40-state space
    assert len(db_restore(out_path)) == 16


def test_preprocess_states_data_requires_the_dataset(ws, tmp_path):
    rv, _, err = run(["preprocess", "--model", ws["model"], "--out", tmp_path / "db.jsonl",
                      "--target", 1, "--states", "data"])
    assert rv == 3
    assert "--states data needs --data and --schema" in err


# plan


def test_plan_human_output(ws):
    rv, out, err = run(["plan", "--model", ws["model"], "--db", ws["db"],
                        "--state", "0,0,0"])
    assert rv == 0 and err == ""
    assert "initial state (0, 0, 0)  p(target)=0.0000" in out
    assert re.search(r"plan: cost \d+, \d+ step\(s\), \d+ action\(s\)", out)
    assert "step 1:" in out
    assert "status: solved" in out


def test_plan_json_payload_is_consistent(ws):
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--json"])
    assert rv == 0
    p = json.loads(out)
    assert set(p) == {"status", "initial", "target", "goal_pool", "attempts",
                      "cost", "makespan", "n_actions", "steps", "final", "p_final"}
    assert p["status"] == "solved" and p["initial"] == [0, 0, 0] and p["target"] == 1
    assert p["makespan"] == len(p["steps"])
    assert p["n_actions"] == sum(len(s) for s in p["steps"])
    assert p["final"] in p["goal_pool"]
    sat_costs = [a["cost"] for a in p["attempts"] if a["status"] == "sat"]
    assert p["cost"] == min(sat_costs)


def test_plan_sweep_improves_on_makespan_one(ws):
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--l-max", 2, "--sweep", "--json"])
    assert rv == 0
    p = json.loads(out)
    assert [a["L"] for a in p["attempts"]] == [1, 2]
    # splitting the jump across two steps is cheaper under the quadratic cost
    assert p["attempts"][1]["cost"] < p["attempts"][0]["cost"]
    assert p["cost"] == p["attempts"][1]["cost"]


def test_plan_accepts_raw_feature_values(ws):
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "-x", "male,1,100", "--json"])
    assert rv == 0
    p = json.loads(out)
    assert p["initial"] == [0, 0, 0] and p["status"] == "solved"


def test_plan_raw_vector_already_at_goal(ws):
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "-x", "male,6,2000", "--json"])
    assert rv == 0
    assert json.loads(out)["status"] == "already_goal"


def test_plan_raw_vector_arity_mismatch(ws):
    rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"], "-x", "male,1"])
    assert rv == 3
    assert "input has 2 values but the model has 3 features" in err


def test_plan_needs_exactly_one_input_form(ws):
    for extra in ([], ["-x", "male,1,100", "--state", "0,0,0"]):
        rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"], *extra])
        assert rv == 3
        assert "pass exactly one of -x/--input" in err


def test_plan_rejects_out_of_range_state(ws):
    rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"], "--state", "9,9,9"])
    assert rv == 3
    assert "outside" in err


def test_plan_missing_db_suggests_preprocess(ws, tmp_path):
    rv, _, err = run(["plan", "--model", ws["model"], "--db", tmp_path / "missing.jsonl",
                      "--state", "0,0,0"])
    assert rv == 3
    assert "run `rfplan preprocess" in err


def test_plan_timeout_exits_four(ws):
    rv, out, err = run(["plan", "--model", ws["model"], "--db", ws["db"],
                        "--state", "0,0,0", "--timeout", "1e-9"])
    assert rv == 4
    assert "status: timeout" in out
    assert "no plan within the time budget" in err


def test_plan_unsolvable_exits_two(hardws):
    rv, out, err = run(["plan", "--model", hardws["model"], "--db", hardws["db"],
                        "--state", "0"])
    assert rv == 2
    assert "status: unsolvable" in out
    assert "no plan exists for this instance" in err


def test_plan_config_file_sets_defaults(ws, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"L_max": 1}))
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--sweep", "--config", cfg, "--json"])
    assert rv == 0
    assert [a["L"] for a in json.loads(out)["attempts"]] == [1]


def test_plan_flag_overrides_config(ws, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"L_max": 1}))
    rv, out, _ = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--sweep", "--config", cfg,
                      "--l-max", 2, "--json"])
    assert rv == 0
    assert [a["L"] for a in json.loads(out)["attempts"]] == [1, 2]


def test_plan_rejects_unknown_config_key(ws, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--config", cfg])
    assert rv == 3
    assert "unknown config keys ['bogus']" in err


def test_plan_rejects_malformed_config(ws, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--config", cfg])
    assert rv == 3
    assert err.startswith("error:")


# greedy


def test_greedy_solves_and_reports(ws):
    rv, out, _ = run(["greedy", "--model", ws["model"], "--state", "0,0,0",
                      "--target", 1, "--json"])
    assert rv == 0
    p = json.loads(out)
    assert p["status"] == "solved"
    assert p["n_actions"] == p["makespan"] == len(p["steps"])
    assert all(len(step) == 1 for step in p["steps"])
    assert p["visited"] == p["n_actions"] + 1


def test_greedy_rules_are_selectable(ws):
    costs = {}
    for rule in ("ratio", "max_gain", "min_cost"):
        rv, out, _ = run(["greedy", "--model", ws["model"], "--state", "0,0,0",
                          "--target", 1, "--rule", rule, "--json"])
        assert rv == 0
        costs[rule] = json.loads(out)["cost"]
    assert all(c > 0 for c in costs.values())


def test_greedy_failure_exits_two(hardws):
    rv, out, err = run(["greedy", "--model", hardws["model"], "--state", "0",
                        "--target", 1])
    assert rv == 2
    assert "status: failed" in out
    assert "no plan found" in err


# oracle


def test_oracle_cost_matches_exhaustive_database(ws):
    rv, out, _ = run(["oracle", "--model", ws["model"], "--state", "0,0,0",
                      "--target", 1, "--json"])
    assert rv == 0
    p = json.loads(out)
    assert p["status"] == "solved"
    assert p["cost"] == ws["gdb"].entries[(0, 0, 0)].cost
    assert p["expansions"] > 0
    assert all(len(step) == 1 for step in p["steps"])


def test_oracle_already_goal(hardws):
    rv, out, _ = run(["oracle", "--model", hardws["model"], "--state", "1",
                      "--target", 1])
    assert rv == 0
    assert "status: already_goal" in out
    assert "cost 0" in out


def test_oracle_unreachable_exits_two(hardws):
    rv, out, err = run(["oracle", "--model", hardws["model"], "--state", "0",
                        "--target", 1])
    assert rv == 2
    assert "status: unreachable" in out
    assert "no plan found" in err


def test_oracle_cap_exits_four(ws):
    rv, _, err = run(["oracle", "--model", ws["model"], "--state", "0,0,0",
                      "--target", 1, "--cap", 0])
    assert rv == 4
    assert "raise the cap" in err


# export-wcnf


def test_export_wcnf_writes_a_parseable_instance(ws, tmp_path):
    wcnf, vmap = tmp_path / "x.wcnf", tmp_path / "x.map"
    rv, out, err = run(["export-wcnf", "--model", ws["model"], "--db", ws["db"],
                        "--state", "0,0,0", "-L", 2, "--out", wcnf, "--map", vmap])
    assert rv == 0 and err == ""
    m = re.search(r"wrote .*: (\d+) variables, (\d+) hard \+ (\d+) soft clauses, "
                  r"(\d+) goal state\(s\)", out)
    assert m
    inst = wcnf_read(str(wcnf))
    assert inst.nvars == int(m.group(1))
    assert len(inst.hard) == int(m.group(2)) and len(inst.soft) == int(m.group(3))
    assert "variable map written to" in out
    first = vmap.read_text().splitlines()[0]
    assert first == "1 t=1 transition x0:0->0"


def test_export_wcnf_without_goals_exits_two(hardws, tmp_path):
    rv, _, err = run(["export-wcnf", "--model", hardws["model"], "--db", hardws["db"],
                      "--state", "0", "-L", 1, "--out", tmp_path / "x.wcnf"])
    assert rv == 2
    assert "no goal states for this instance; nothing to encode" in err


# external solver


SOLVER_STUB = """\
import sys
sys.path.insert(0, {src!r})
from rfplan.maxsat import OPTIMAL, solve, wcnf_read

inst = wcnf_read(sys.argv[1])
res = solve(inst)
if res.status == OPTIMAL:
    print("s OPTIMUM FOUND")
    print("o", res.cost)
    lits = [v if res.assignment[v] else -v for v in range(1, inst.nvars + 1)]
    print("v", " ".join(str(l) for l in lits))
else:
    print("s UNKNOWN")
"""


def test_external_solver_matches_internal_plan(ws, tmp_path):
    src = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
    stub = tmp_path / "solver.py"
    stub.write_text(SOLVER_STUB.format(src=src))
    stub.chmod(stub.stat().st_mode | stat.S_IXUSR)
    base = ["plan", "--model", ws["model"], "--db", ws["db"],
            "--state", "0,0,0", "--l-max", 1, "--json"]
    rv, out, _ = run(base)
    assert rv == 0
    internal = json.loads(out)
    rv, out, _ = run(base + ["--external-solver", f"{sys.executable} {stub}"])
    assert rv == 0
    external = json.loads(out)
    assert external["status"] == "solved"
    assert external["cost"] == internal["cost"]
    assert external["steps"] == internal["steps"]


def test_external_solver_not_found(ws):
    rv, _, err = run(["plan", "--model", ws["model"], "--db", ws["db"],
                      "--state", "0,0,0", "--external-solver", "/does/not/exist"])
    assert rv == 3
    assert "external solver not found" in err


# bench


def test_bench_writes_json_lines(ws, tmp_path):
    jl = tmp_path / "bench.jsonl"
    rv, out, err = run(["bench", "--model", ws["model"], "--target", 1,
                        "--instances", 2, "--l-max", 2, "--sweep", "100",
                        "--sample-seed", 7, "--json-out", jl])
    assert rv == 0, err
    for arm in ("planner", "greedy", "oracle"):
        assert arm in out
    records = [json.loads(line) for line in jl.read_text().splitlines()]
    assert [r["kind"] for r in records] == ["settings", "instance", "instance", "summary"]
    settings, first, _, summary = records
    assert settings["n_instances"] == 2
    assert settings["model_fingerprint"] == fingerprint(restore(str(ws["model"])))
    assert first["index"] == 0
    for arm in ("planner", "greedy", "oracle"):
        assert arm in first
        assert 0 <= summary[arm]["solved"] <= summary[arm]["total"] == 2
