from __future__ import annotations

import pytest

from helpers import random_soft_forest
from rfplan.discretize import StateError, enumerate_states
from rfplan.forest import fingerprint
from rfplan.offline import (
    AUTO,
    BUDGET_STOP,
    NO_GOAL,
    PATIENCE_STOP,
    PROVED_EXHAUSTED,
    GoalDatabase,
    PreferredGoalEntry,
    SearchError,
    SearchParams,
    check_pairing,
    db_merge,
    db_persist,
    db_restore,
    find_preferred_goal,
    heuristic,
    preprocess,
    resolve_alpha,
)
from rfplan.sas_core import ActionLibrary, CostModel, default_action_library


# ---------------------------------------------------------------------------
# parameters and heuristic


def test_params_defaults_and_roundtrip():
    p = SearchParams(target=1)
    assert p.z == 0.5 and p.alpha == AUTO
    assert SearchParams.from_dict(p.to_dict()) == p
    q = SearchParams(target="yes", z=0.7, alpha=2, patience=5, node_budget=9)
    assert q.alpha == 2.0 and isinstance(q.alpha, float)
    assert SearchParams.from_dict(q.to_dict()) == q


@pytest.mark.parametrize(
    "kwargs,needle",
    [
        (dict(z=0.0), "z must"),
        (dict(z=1.5), "z must"),
        (dict(alpha=-0.1), "alpha must"),
        (dict(alpha="fast"), "alpha must"),
        (dict(alpha=True), "alpha must"),
        (dict(patience=0), "patience"),
        (dict(node_budget=0), "node_budget"),
    ],
)
def test_params_rejects(kwargs, needle):
    with pytest.raises(SearchError, match=needle):
        SearchParams(target=1, **kwargs)


def test_params_from_dict_missing_key():
    with pytest.raises(SearchError, match="missing"):
        SearchParams.from_dict({"target": 1, "z": 0.5})


def test_resolve_alpha(unit_library):
    assert resolve_alpha(SearchParams(target=1), unit_library) == 1.75
    assert resolve_alpha(SearchParams(target=1, alpha=2.5), unit_library) == 2.5


def test_heuristic_shape():
    assert heuristic(0.2, 0.5, 2.0) == pytest.approx(0.6)
    assert heuristic(0.5, 0.5, 2.0) == 0.0
    assert heuristic(0.9, 0.5, 2.0) == 0.0
    assert heuristic(0.2, 0.5, 0.0) == 0.0


# ---------------------------------------------------------------------------
# entry invariants


def test_entry_validation():
    with pytest.raises(SearchError, match="unknown status"):
        PreferredGoalEntry(initial=(0,), goal=(1,), cost=1.0, expansions=0, status="weird")
    with pytest.raises(SearchError, match="goal must be absent"):
        PreferredGoalEntry(initial=(0,), goal=None, cost=1.0, expansions=0, status=PROVED_EXHAUSTED)
    with pytest.raises(SearchError, match="cost must be absent"):
        PreferredGoalEntry(initial=(0,), goal=(1,), cost=None, expansions=0, status=PROVED_EXHAUSTED)
    ok = PreferredGoalEntry(initial=(0,), goal=None, cost=None, expansions=3, status=NO_GOAL)
    assert not ok.found


# ---------------------------------------------------------------------------
# single-state search on the toy model


def test_preferred_goals_toy(toy_forest, toy_table, unit_library, toy_params):
    expect = {
        (0, 0, 0): ((0, 1, 2), 3.0),
        (0, 1, 0): ((0, 1, 2), 2.0),
        (0, 1, 1): ((0, 1, 2), 1.0),
        (0, 0, 1): ((0, 1, 2), 2.0),
        (1, 0, 0): ((1, 1, 2), 3.0),
    }
    for s, (goal, cost) in expect.items():
        e = find_preferred_goal(s, unit_library, toy_forest, toy_table, toy_params)
        assert e.status == PROVED_EXHAUSTED
        assert (e.goal, e.cost) == (goal, cost)
        # the recorded path witnesses the goal at the recorded cost
        state = s
        total = 0.0
        for action in e.path:
            state = action.apply(state)
            total += action.cost
        assert state == e.goal and total == e.cost


def test_already_goal_state(toy_forest, toy_table, unit_library, toy_params):
    e = find_preferred_goal((0, 1, 2), unit_library, toy_forest, toy_table, toy_params)
    assert e.status == PROVED_EXHAUSTED
    assert e.goal == (0, 1, 2) and e.cost == 0.0
    assert e.path == () and e.expansions == 0


def test_no_actions_means_no_goal(toy_forest, toy_table, toy_params):
    empty = ActionLibrary(actions=())
    e = find_preferred_goal((0, 0, 0), empty, toy_forest, toy_table, toy_params)
    assert e.status == NO_GOAL
    assert e.goal is None and e.cost is None and not e.found
    assert e.expansions == 1
    # a state that is already past the threshold still counts as found
    g = find_preferred_goal((0, 1, 2), empty, toy_forest, toy_table, toy_params)
    assert g.found and g.cost == 0.0


def test_budget_stop(toy_forest, toy_table, unit_library):
    params = SearchParams(target=1, z=0.5, alpha=0.0, node_budget=3)
    e = find_preferred_goal((0, 1, 1), unit_library, toy_forest, toy_table, params)
    assert e.status == BUDGET_STOP
    assert e.goal == (0, 1, 2) and e.cost == 1.0
    assert e.expansions == 4


def test_patience_gives_up_before_any_goal(toy_forest, toy_table, unit_library):
    params = SearchParams(target=1, z=0.5, alpha=0.0, patience=1)
    e = find_preferred_goal((0, 0, 0), unit_library, toy_forest, toy_table, params)
    assert e.status == NO_GOAL and e.expansions == 2


def test_patience_stop_after_goal():
    forest, table = random_soft_forest(0)
    lib = default_action_library(table, CostModel.unit(len(table.features)))
    eager = SearchParams(target=1, z=0.5, alpha=0.0, patience=1)
    e = find_preferred_goal((0, 0, 0, 2), lib, forest, table, eager)
    assert e.status == PATIENCE_STOP and e.found
    full = find_preferred_goal((0, 0, 0, 2), lib, forest, table, SearchParams(target=1, alpha=0.0))
    assert full.status == PROVED_EXHAUSTED
    # alpha=0 pops goals in cost order, so the early stop is already exact
    assert e.cost == full.cost
    assert e.expansions < full.expansions


def test_exhausted_search_is_alpha_independent(toy_forest, toy_table, unit_library):
    auto = SearchParams(target=1, z=0.5)
    dijkstra = SearchParams(target=1, z=0.5, alpha=0.0)
    for s in enumerate_states(toy_table):
        a = find_preferred_goal(s, unit_library, toy_forest, toy_table, auto)
        d = find_preferred_goal(s, unit_library, toy_forest, toy_table, dijkstra)
        assert a.status == PROVED_EXHAUSTED and d.status == PROVED_EXHAUSTED
        assert (a.goal, a.cost) == (d.goal, d.cost)


def test_bad_state_rejected(toy_forest, toy_table, unit_library, toy_params):
    with pytest.raises(StateError):
        find_preferred_goal((0, 0, 9), unit_library, toy_forest, toy_table, toy_params)


# ---------------------------------------------------------------------------
# preprocessing


def test_preprocess_covers_all_states(toy_db, toy_forest, toy_table):
    assert len(toy_db) == 12
    assert toy_db.fingerprint == fingerprint(toy_forest)
    for s in enumerate_states(toy_table):
        e = toy_db.get(s)
        assert e is not None and e.initial == s and e.found


def test_preprocess_dedupes_and_reports_progress(toy_forest, toy_table, unit_library, toy_params):
    calls = []
    db = preprocess(
        [(0, 0, 0), (0, 0, 0), (0, 1, 2)],
        unit_library,
        toy_forest,
        toy_table,
        toy_params,
        on_progress=lambda done, total: calls.append((done, total)),
    )
    assert len(db) == 2
    assert calls == [(1, 2), (2, 2)]


def test_preprocess_workers_match_serial(toy_forest, toy_table, unit_library, toy_params, toy_db):
    states = list(enumerate_states(toy_table))
    parallel = preprocess(
        states, unit_library, toy_forest, toy_table, toy_params, workers=2
    )
    assert parallel == toy_db


# ---------------------------------------------------------------------------
# persistence and merging


def test_db_roundtrip(toy_db, tmp_path):
    path = tmp_path / "goals.jsonl"
    db_persist(toy_db, path)
    back = db_restore(path)
    assert back == toy_db
    # paths are in-process only; the restored entries drop them
    assert all(e.path is None for e in back.entries.values())


def test_db_get_accepts_lists(toy_db):
    assert toy_db.get([0, 1, 2]) is not None
    assert toy_db.get((9, 9, 9)) is None


def _entry(s, goal, cost, status=PROVED_EXHAUSTED):
    return PreferredGoalEntry(initial=s, goal=goal, cost=cost, expansions=1, status=status)


def test_db_merge_keeps_cheaper(toy_params):
    a = GoalDatabase(
        fingerprint="fp",
        params=toy_params,
        entries={
            (0,): _entry((0,), (1,), 5.0),
            (1,): _entry((1,), None, None, status=NO_GOAL),
        },
    )
    b = GoalDatabase(
        fingerprint="fp",
        params=toy_params,
        entries={
            (0,): _entry((0,), (2,), 3.0),
            (1,): _entry((1,), (2,), 7.0),
            (2,): _entry((2,), (3,), 1.0),
        },
    )
    merged = db_merge(a, b)
    assert merged.entries[(0,)].cost == 3.0
    assert merged.entries[(1,)].cost == 7.0, "a found goal beats a no_goal entry"
    assert merged.entries[(2,)].cost == 1.0
    assert db_merge(b, a).entries == merged.entries


def test_db_merge_rejects_mismatches(toy_params):
    a = GoalDatabase(fingerprint="fp1", params=toy_params, entries={})
    b = GoalDatabase(fingerprint="fp2", params=toy_params, entries={})
    with pytest.raises(SearchError, match="different models"):
        db_merge(a, b)
    c = GoalDatabase(
        fingerprint="fp1", params=SearchParams(target=1, z=0.6), entries={}
    )
    with pytest.raises(SearchError, match="different search params"):
        db_merge(a, c)


def test_check_pairing(toy_db, toy_forest):
    check_pairing(toy_db, toy_forest)
    other, _ = random_soft_forest(3)
    with pytest.raises(SearchError, match="does not match"):
        check_pairing(toy_db, other)


# ---------------------------------------------------------------------------
# restore diagnostics


def _write_db(tmp_path, *lines):
    path = tmp_path / "db.jsonl"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


HEADER = (
    '{"fingerprint": "fp", "format_version": 1, '
    '"params": {"target": 1, "z": 0.5, "alpha": "auto", "patience": 10, "node_budget": 10}}'
)
ROW = '{"cost": 1.0, "expansions": 2, "goal": [0, 1], "initial": [0, 0], "status": "proved_exhausted"}'


def test_db_restore_happy(tmp_path):
    db = db_restore(_write_db(tmp_path, HEADER, ROW))
    assert db.fingerprint == "fp"
    assert db.entries[(0, 0)].goal == (0, 1)


@pytest.mark.parametrize(
    "lines,needle",
    [
        ((), "empty"),
        (("not json",), r"db\.jsonl:1: not valid JSON"),
        (('["a", "list"]',), r"db\.jsonl:1: expected a JSON object"),
        (('{"format_version": 99}',), "unsupported format_version"),
        (('{"format_version": 1}',), "header missing 'fingerprint'"),
        ((HEADER, "{broken"), r"db\.jsonl:2: not valid JSON"),
        ((HEADER, '{"initial": [0], "status": "weird"}'), r"db\.jsonl:2: bad entry"),
        ((HEADER, ROW, ROW), r"db\.jsonl:3: duplicate entry"),
    ],
)
def test_db_restore_rejects(tmp_path, lines, needle):
    with pytest.raises(SearchError, match=needle):
        db_restore(_write_db(tmp_path, *lines))


def test_db_restore_skips_blank_lines(tmp_path):
    db = db_restore(_write_db(tmp_path, HEADER, "", ROW, ""))
    assert len(db) == 1
