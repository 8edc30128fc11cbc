"""Offline preprocessing: per-state search for the cheapest goal state.

For each start state an anytime best-first search over the action graph
looks for the cheapest state whose target-class vote share reaches the
threshold z.  The admissible-when-alpha-is-small heuristic is
alpha * (z - p); goal states are recorded but never expanded.  The search
stops once the closed list has grown by more than ``patience`` states
since the last goal improvement, when the expansion budget is exhausted,
or when the frontier empties (which proves the best goal exact).

Results are stored in a goal database keyed by start state and stamped
with the model fingerprint so stale pairings are rejected.
"""

from __future__ import annotations

import heapq
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import forest as forest_mod
from .discretize import PartitionTable, State, StateEvaluator, check_state, enumerate_states
from .forest import Label, ModelError, RandomForest
from .sas_core import Action, ActionLibrary, neighbors

AUTO = "auto"

PROVED_EXHAUSTED = "proved_exhausted"
PATIENCE_STOP = "patience_stop"
BUDGET_STOP = "budget_stop"
NO_GOAL = "no_goal"

DB_FORMAT_VERSION = 1


class SearchError(ValueError):
    """Bad search parameters or an inconsistent goal database."""


@dataclass(frozen=True)
class SearchParams:
    """Offline search knobs.

    ``alpha`` scales the heuristic and may be the string ``"auto"``,
    which resolves to the mean action cost of the library in use.
    ``patience`` is the number of expansions tolerated past the last goal
    improvement; ``node_budget`` caps total expansions.
    """

    target: Label
    z: float = 0.5
    alpha: float | str = AUTO
    patience: int = 10_000_000
    node_budget: int = 5_000_000

    def __post_init__(self):
        if not 0.0 < self.z <= 1.0:
            raise SearchError(f"z must be in (0, 1], got {self.z}")
        if self.alpha != AUTO:
            if isinstance(self.alpha, bool) or not isinstance(self.alpha, (int, float)):
                raise SearchError(f"alpha must be a number or 'auto', got {self.alpha!r}")
            if self.alpha < 0 or not math.isfinite(self.alpha):
                raise SearchError(f"alpha must be >= 0, got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        if self.patience < 1:
            raise SearchError(f"patience must be >= 1, got {self.patience}")
        if self.node_budget < 1:
            raise SearchError(f"node_budget must be >= 1, got {self.node_budget}")

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "z": self.z,
            "alpha": self.alpha,
            "patience": self.patience,
            "node_budget": self.node_budget,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchParams":
        try:
            return cls(
                target=doc["target"],
                z=doc["z"],
                alpha=doc["alpha"],
                patience=doc["patience"],
                node_budget=doc["node_budget"],
            )
        except KeyError as exc:
            raise SearchError(f"search params missing {exc}") from None


def resolve_alpha(params: SearchParams, library: ActionLibrary) -> float:
    """Numeric alpha: 'auto' becomes the library's mean action cost."""
    if params.alpha == AUTO:
        return library.mean_cost()
    return float(params.alpha)


def heuristic(p: float, z: float, alpha: float) -> float:
    """Optimistic remaining cost for a state with target share ``p``."""
    return alpha * (z - p) if p < z else 0.0


@dataclass(frozen=True)
class PreferredGoalEntry:
    """One database row: the cheapest goal found for a start state.

    ``path`` carries the witnessing action sequence when the entry was
    produced in-process; it is not persisted.
    """

    initial: State
    goal: State | None
    cost: float | None
    expansions: int
    status: str
    path: tuple[Action, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.status not in (PROVED_EXHAUSTED, PATIENCE_STOP, BUDGET_STOP, NO_GOAL):
            raise SearchError(f"unknown status {self.status!r}")
        if (self.goal is None) != (self.status == NO_GOAL):
            raise SearchError("goal must be absent exactly when status is no_goal")
        if (self.cost is None) != (self.status == NO_GOAL):
            raise SearchError("cost must be absent exactly when status is no_goal")

    @property
    def found(self) -> bool:
        return self.status != NO_GOAL


def find_preferred_goal(
    s_init: State,
    library: ActionLibrary,
    forest: RandomForest,
    table: PartitionTable,
    params: SearchParams,
    evaluator: StateEvaluator | None = None,
) -> PreferredGoalEntry:
    """Best-first anytime search from one start state."""
    s_init = check_state(table, s_init)
    if evaluator is None:
        evaluator = StateEvaluator(forest, table, params.target)
    alpha = resolve_alpha(params, library)
    z = params.z

    best_goal: State | None = None
    best_cost = math.inf
    best_path: tuple[Action, ...] = ()
    expansions_at_goal = 0

    closed: set[State] = set()
    best_g: dict[State, float] = {s_init: 0.0}
    parent: dict[State, tuple[State, Action]] = {}
    p0 = evaluator.proba(s_init)
    heap: list[tuple[float, float, State]] = [(heuristic(p0, z, alpha), 0.0, s_init)]
    status = PROVED_EXHAUSTED

    def path_to(s: State) -> tuple[Action, ...]:
        # valid at pop time: every ancestor on the chain is closed, so its
        # parent link can no longer change
        steps: list[Action] = []
        while s != s_init:
            prev, action = parent[s]
            steps.append(action)
            s = prev
        steps.reverse()
        return tuple(steps)

    while heap:
        f, g, s = heapq.heappop(heap)
        if s in closed or g > best_g.get(s, math.inf):
            continue
        p = evaluator.proba(s)
        if p >= z and g < best_cost:
            best_goal, best_cost = s, g
            best_path = path_to(s)
            expansions_at_goal = len(closed)
        if len(closed) - expansions_at_goal > params.patience:
            status = PATIENCE_STOP
            break
        if p >= z:
            continue  # goal states are recorded, never expanded
        closed.add(s)
        if len(closed) > params.node_budget:
            status = BUDGET_STOP
            break
        for action, s2, w in neighbors(s, library):
            g2 = g + w
            if s2 in closed or g2 >= best_g.get(s2, math.inf):
                continue
            best_g[s2] = g2
            parent[s2] = (s, action)
            p2 = evaluator.proba(s2)
            heapq.heappush(heap, (g2 + heuristic(p2, z, alpha), g2, s2))

    if best_goal is None:
        return PreferredGoalEntry(
            initial=s_init, goal=None, cost=None, expansions=len(closed), status=NO_GOAL
        )
    return PreferredGoalEntry(
        initial=s_init,
        goal=best_goal,
        cost=best_cost,
        expansions=len(closed),
        status=status,
        path=best_path,
    )


@dataclass(frozen=True)
class GoalDatabase:
    """Preferred-goal entries for one model and one parameter set."""

    fingerprint: str
    params: SearchParams
    entries: dict[State, PreferredGoalEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, s: State) -> PreferredGoalEntry | None:
        return self.entries.get(tuple(s))


_WORKER_CTX: dict = {}


def _worker_init(forest_doc: dict, thresholds, actions_doc, params_doc: dict):
    forest = forest_mod.forest_from_dict(forest_doc)
    table = PartitionTable(features=forest.features, thresholds=thresholds)
    from .sas_core import Transition

    actions = tuple(
        Action(
            id=a["id"],
            cost=a["cost"],
            transitions=tuple(Transition(t[0], t[1], t[2]) for t in a["transitions"]),
        )
        for a in actions_doc
    )
    _WORKER_CTX["forest"] = forest
    _WORKER_CTX["table"] = table
    _WORKER_CTX["library"] = ActionLibrary(actions=actions)
    _WORKER_CTX["params"] = SearchParams.from_dict(params_doc)
    _WORKER_CTX["evaluator"] = StateEvaluator(forest, table, _WORKER_CTX["params"].target)


def _worker_search(states: list[State]) -> list[PreferredGoalEntry]:
    ctx = _WORKER_CTX
    return [
        find_preferred_goal(
            s, ctx["library"], ctx["forest"], ctx["table"], ctx["params"], ctx["evaluator"]
        )
        for s in states
    ]


def preprocess(
    states: Iterable[State],
    library: ActionLibrary,
    forest: RandomForest,
    table: PartitionTable,
    params: SearchParams,
    workers: int = 1,
    on_progress: Callable[[int, int], None] | None = None,
) -> GoalDatabase:
    """Search every given start state and assemble the goal database.

    Duplicate states are searched once.  With ``workers > 1`` the states
    are split across processes; results are identical either way.
    """
    todo = sorted(set(check_state(table, s) for s in states))
    entries: dict[State, PreferredGoalEntry] = {}
    done = 0
    if workers <= 1:
        evaluator = StateEvaluator(forest, table, params.target)
        for s in todo:
            entry = find_preferred_goal(s, library, forest, table, params, evaluator)
            entries[s] = entry
            done += 1
            if on_progress:
                on_progress(done, len(todo))
    else:
        forest_doc = forest_mod.forest_to_dict(forest)
        actions_doc = [
            {
                "id": a.id,
                "cost": a.cost,
                "transitions": [(t.var, t.frm, t.to) for t in a.transitions],
            }
            for a in library.actions
        ]
        chunks = [todo[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(
            max_workers=len(chunks),
            initializer=_worker_init,
            initargs=(forest_doc, table.thresholds, actions_doc, params.to_dict()),
        ) as pool:
            for batch in pool.map(_worker_search, chunks):
                for entry in batch:
                    entries[entry.initial] = entry
                    done += 1
                if on_progress:
                    on_progress(done, len(todo))
    return GoalDatabase(
        fingerprint=forest_mod.fingerprint(forest), params=params, entries=entries
    )


def db_persist(db: GoalDatabase, path) -> None:
    """JSON-lines: one header object, then one entry object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format_version": DB_FORMAT_VERSION,
            "fingerprint": db.fingerprint,
            "params": db.params.to_dict(),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in sorted(db.entries):
            e = db.entries[s]
            rec = {
                "initial": list(e.initial),
                "goal": list(e.goal) if e.goal is not None else None,
                "cost": e.cost,
                "expansions": e.expansions,
                "status": e.status,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def db_restore(path) -> GoalDatabase:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise SearchError(f"{path}: empty database file")

    def parse(lineno: int, text: str) -> dict:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SearchError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise SearchError(f"{path}:{lineno}: expected a JSON object")
        return doc

    header = parse(1, lines[0])
    if header.get("format_version") != DB_FORMAT_VERSION:
        raise SearchError(
            f"{path}:1: unsupported format_version {header.get('format_version')!r}"
        )
    for key in ("fingerprint", "params"):
        if key not in header:
            raise SearchError(f"{path}:1: header missing {key!r}")
    params = SearchParams.from_dict(header["params"])
    entries: dict[State, PreferredGoalEntry] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = parse(lineno, line)
        try:
            entry = PreferredGoalEntry(
                initial=tuple(rec["initial"]),
                goal=tuple(rec["goal"]) if rec.get("goal") is not None else None,
                cost=rec.get("cost"),
                expansions=rec.get("expansions", 0),
                status=rec.get("status", ""),
            )
        except (KeyError, TypeError, SearchError) as exc:
            raise SearchError(f"{path}:{lineno}: bad entry ({exc})") from None
        if entry.initial in entries:
            raise SearchError(f"{path}:{lineno}: duplicate entry for state {entry.initial}")
        entries[entry.initial] = entry
    return GoalDatabase(fingerprint=header["fingerprint"], params=params, entries=entries)


def db_merge(a: GoalDatabase, b: GoalDatabase) -> GoalDatabase:
    """Union of two databases over the same model and parameters.

    A state present in both keeps the lower-cost entry; an absent goal
    counts as infinite cost.
    """
    if a.fingerprint != b.fingerprint:
        raise SearchError("cannot merge databases built from different models")
    if a.params != b.params:
        raise SearchError("cannot merge databases built with different search params")

    def rank(e: PreferredGoalEntry) -> float:
        return e.cost if e.cost is not None else math.inf

    entries = dict(a.entries)
    for s, e in b.entries.items():
        cur = entries.get(s)
        if cur is None or rank(e) < rank(cur):
            entries[s] = e
    return GoalDatabase(fingerprint=a.fingerprint, params=a.params, entries=entries)


def check_pairing(db: GoalDatabase, forest: RandomForest) -> None:
    """Reject a database that was built from a different model."""
    fp = forest_mod.fingerprint(forest)
    if db.fingerprint != fp:
        raise SearchError(
            f"goal database fingerprint {db.fingerprint[:12]}... does not match "
            f"model {fp[:12]}..."
        )


__all__ = [
    "AUTO",
    "PROVED_EXHAUSTED",
    "PATIENCE_STOP",
    "BUDGET_STOP",
    "NO_GOAL",
    "SearchError",
    "SearchParams",
    "PreferredGoalEntry",
    "GoalDatabase",
    "resolve_alpha",
    "heuristic",
    "find_preferred_goal",
    "preprocess",
    "db_persist",
    "db_restore",
    "db_merge",
    "check_pairing",
    "enumerate_states",
]
