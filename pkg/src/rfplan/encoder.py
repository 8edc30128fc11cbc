"""Bounded-makespan planning compiled to weighted partial Max-SAT.

The task: from the discretized start state, reach any of the goal states
collected from the k nearest stored neighbors.  At makespan L the encoding
has one variable per (transition, step), per (action, step), and per goal
state.  Soft clauses price each action occurrence; hard clauses pin the
start state, require a goal, chain transitions across steps, forbid
mutex pairs, tie actions to their transitions, and require a supporting
action for every value change.

Per step and state variable exactly one explicit-endpoint transition is
true, so a satisfying model decodes to one well-defined state trajectory.
Mechanical (wildcard-source) transitions ride along only where an action
introduces them; value changes available exclusively through mechanical
transitions are not reachable in this compilation (the offline search
handles those), which keeps decoded plans sound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from . import maxsat
from .discretize import PartitionTable, State, StateEvaluator, check_state, to_state
from .forest import RandomForest, Vector
from .knn import SimilarityWeights, k_nearest
from .maxsat import SolveResult, WcnfInstance
from .offline import GoalDatabase, check_pairing, find_preferred_goal
from .sas_core import (
    Action,
    ActionLibrary,
    Plan,
    Transition,
    action_mutex,
    simulate_plan,
    transition_mutex,
)

DEFAULT_SCALE = 1000

SOLVED = "solved"
ALREADY_GOAL = "already_goal"
UNSOLVABLE = "unsolvable"
TIMEOUT = "timeout"


class PlanningError(ValueError):
    """Unplannable request or ill-formed planning inputs."""


class EncodingBug(RuntimeError):
    """A decoded model failed validation; the encoding itself is at fault."""


@dataclass(frozen=True)
class SasProblem:
    """Planning task over partition-index state variables."""

    sizes: tuple[int, ...]
    library: ActionLibrary
    initial: State
    goals: tuple[State, ...]

    def __post_init__(self):
        if not self.goals:
            raise PlanningError("a planning task needs at least one goal state")
        goals = tuple(sorted(set(self.goals)))
        for g in (self.initial, *goals):
            if len(g) != len(self.sizes):
                raise PlanningError(f"state {g} does not match {len(self.sizes)} variables")
            for i, (v, n) in enumerate(zip(g, self.sizes)):
                if not 0 <= v < n:
                    raise PlanningError(f"state {g}: value {v} outside domain of variable {i}")
        for a in self.library.actions:
            for t in a.transitions:
                if t.var >= len(self.sizes):
                    raise PlanningError(f"action {a.id!r}: variable {t.var} out of range")
                if t.to >= self.sizes[t.var] or (t.frm is not None and t.frm >= self.sizes[t.var]):
                    raise PlanningError(f"action {a.id!r}: transition {t} outside variable domain")
        object.__setattr__(self, "goals", goals)


@dataclass
class VarMap:
    """Bidirectional map between encoding variables and their meanings."""

    L: int
    nvars: int
    trans: dict[tuple[int, int, int | None, int], int]  # (step, var, frm, to)
    acts: dict[tuple[int, str], int]  # (step, action id)
    goals: dict[State, int]
    descriptions: dict[int, str]

    def describe(self, v: int) -> str:
        return self.descriptions.get(v, f"unused variable {v}")

    def write_map(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for v in range(1, self.nvars + 1):
                fh.write(f"{v} {self.describe(v)}\n")


def _transition_universe(sas: SasProblem) -> list[list[tuple[int | None, int]]]:
    """Per variable: all explicit (from, to) pairs, then the mechanical
    targets some action actually uses."""
    mech_targets: list[set[int]] = [set() for _ in sas.sizes]
    for a in sas.library.actions:
        for t in a.transitions:
            if t.is_mechanical:
                mech_targets[t.var].add(t.to)
    universe = []
    for v, n in enumerate(sas.sizes):
        pairs: list[tuple[int | None, int]] = [(f, g) for f in range(n) for g in range(n)]
        pairs.extend((None, g) for g in sorted(mech_targets[v]))
        universe.append(pairs)
    return universe


def _scaled_cost(cost: float, scale: int, what: str) -> int:
    w = round(cost * scale)
    if w < 1:
        raise PlanningError(
            f"{what}: cost {cost} rounds to a zero weight at scale {scale}; raise the scale"
        )
    return w


def encode(sas: SasProblem, L: int, scale: int = DEFAULT_SCALE) -> tuple[WcnfInstance, VarMap]:
    """Compile the task at makespan ``L``."""
    if L < 1:
        raise PlanningError(f"makespan must be >= 1, got {L}")
    if scale < 1:
        raise PlanningError(f"scale must be >= 1, got {scale}")
    m = len(sas.sizes)
    universe = _transition_universe(sas)

    trans: dict[tuple[int, int, int | None, int], int] = {}
    acts: dict[tuple[int, str], int] = {}
    goal_vars: dict[State, int] = {}
    descriptions: dict[int, str] = {}
    nxt = 1
    for t in range(1, L + 1):
        for v in range(m):
            for frm, to in universe[v]:
                trans[(t, v, frm, to)] = nxt
                frm_s = "*" if frm is None else str(frm)
                descriptions[nxt] = f"t={t} transition x{v}:{frm_s}->{to}"
                nxt += 1
    for t in range(1, L + 1):
        for a in sas.library.actions:
            acts[(t, a.id)] = nxt
            descriptions[nxt] = f"t={t} action {a.id}"
            nxt += 1
    for g in sas.goals:
        goal_vars[g] = nxt
        descriptions[nxt] = f"goal state {g}"
        nxt += 1
    nvars = nxt - 1

    hard: list[list[int]] = []
    soft: list[tuple[int, list[int]]] = []

    # action costs
    for t in range(1, L + 1):
        for a in sas.library.actions:
            soft.append(
                (_scaled_cost(a.cost, scale, f"action {a.id!r}"), [-acts[(t, a.id)]])
            )

    # start state: step 1 leaves each variable through its current value
    for v in range(m):
        hard.append(
            [trans[(1, v, f, g)] for f, g in universe[v] if f == sas.initial[v]]
        )

    # at least one goal state
    hard.append([goal_vars[g] for g in sas.goals])

    # a chosen goal pins each variable's final transition target
    for g in sas.goals:
        for v in range(m):
            hard.append(
                [-goal_vars[g]]
                + [trans[(L, v, f, t_)] for f, t_ in universe[v] if f is not None and t_ == g[v]]
            )

    # chaining between consecutive steps, explicit-endpoint transitions only
    for t in range(1, L):
        for v in range(m):
            for f, g in universe[v]:
                if f is None:
                    continue
                hard.append(
                    [-trans[(t, v, f, g)]]
                    + [trans[(t + 1, v, f2, g2)] for f2, g2 in universe[v] if f2 == g]
                )
    for t in range(2, L + 1):
        for v in range(m):
            for f, g in universe[v]:
                if f is None:
                    continue
                hard.append(
                    [-trans[(t, v, f, g)]]
                    + [trans[(t - 1, v, f2, g2)] for f2, g2 in universe[v] if g2 == f]
                )

    # mutex transitions within a step (same variable only)
    for v in range(m):
        pairs = universe[v]
        objs = [Transition(v, f, g) for f, g in pairs]
        clashing = [
            (pairs[i], pairs[j])
            for i in range(len(pairs))
            for j in range(i + 1, len(pairs))
            if transition_mutex(objs[i], objs[j])
        ]
        for t in range(1, L + 1):
            for p1, p2 in clashing:
                hard.append([-trans[(t, v, *p1)], -trans[(t, v, *p2)]])

    # mutex actions within a step
    actions = sas.library.actions
    for i in range(len(actions)):
        for j in range(i + 1, len(actions)):
            if action_mutex(actions[i], actions[j]):
                for t in range(1, L + 1):
                    hard.append([-acts[(t, actions[i].id)], -acts[(t, actions[j].id)]])

    # an action brings all its transitions along
    for t in range(1, L + 1):
        for a in actions:
            for tr in a.transitions:
                hard.append([-acts[(t, a.id)], trans[(t, tr.var, tr.frm, tr.to)]])

    # every value change needs a supporting action
    support: dict[tuple[int, int | None, int], list[Action]] = {}
    for a in actions:
        for tr in a.transitions:
            support.setdefault((tr.var, tr.frm, tr.to), []).append(a)
    for t in range(1, L + 1):
        for v in range(m):
            for f, g in universe[v]:
                if f is not None and f == g:
                    continue  # prevailing transitions hold by the frame rule
                backers = support.get((v, f, g), [])
                hard.append(
                    [-trans[(t, v, f, g)]] + [acts[(t, a.id)] for a in backers]
                )

    instance = WcnfInstance.build(nvars=nvars, hard=hard, soft=soft)
    varmap = VarMap(
        L=L, nvars=nvars, trans=trans, acts=acts, goals=goal_vars, descriptions=descriptions
    )
    return instance, varmap


def decode(assignment: tuple[bool, ...], varmap: VarMap, sas: SasProblem) -> Plan:
    """Read the per-step action sets out of a model and simulate them."""
    steps: list[list[Action]] = [[] for _ in range(varmap.L)]
    for (t, action_id), v in varmap.acts.items():
        if assignment[v]:
            steps[t - 1].append(sas.library.by_id(action_id))
    while steps and not steps[-1]:
        steps.pop()
    final = simulate_plan(sas.initial, steps)
    cost = sum(a.cost for step in steps for a in step)
    return Plan(steps=tuple(tuple(step) for step in steps), cost=cost, goal=final)


def check_plan(plan: Plan, sas: SasProblem) -> None:
    """Raise EncodingBug unless the plan executes and reaches a goal."""
    known = {a.id: a for a in sas.library.actions}
    for step in plan.steps:
        for a in step:
            if known.get(a.id) != a:
                raise EncodingBug(f"plan uses action {a.id!r} not present in the library")
    try:
        final = simulate_plan(sas.initial, plan.steps)
    except Exception as exc:
        raise EncodingBug(f"plan does not execute: {exc}") from exc
    if final != plan.goal:
        raise EncodingBug(f"plan ends in {final}, not its recorded goal {plan.goal}")
    if final not in sas.goals:
        raise EncodingBug(f"plan ends in {final}, which is not a goal state")
    total = sum(a.cost for step in plan.steps for a in step)
    if not math.isclose(total, plan.cost, rel_tol=0.0, abs_tol=1e-9):
        raise EncodingBug(f"plan cost {plan.cost} != sum of action costs {total}")


def validate_plan(plan: Plan, sas: SasProblem) -> bool:
    try:
        check_plan(plan, sas)
    except EncodingBug:
        return False
    return True


def build_sas(
    s_init: State,
    db: GoalDatabase,
    k: int,
    sim_weights: SimilarityWeights,
    table: PartitionTable,
    library: ActionLibrary,
    forest: RandomForest | None = None,
    fallback_search: bool = True,
) -> SasProblem:
    """Goal states from the k nearest stored neighbors, as one SAS+ task.

    When no stored neighbor is usable and ``fallback_search`` is set, the
    offline search runs for this one state (slow path).  With a forest at
    hand every goal is re-checked against the vote threshold.
    """
    s_init = check_state(table, s_init)
    near = k_nearest(s_init, db, k, sim_weights, table)
    goals = sorted({entry.goal for _, entry, _ in near})
    if not goals and fallback_search:
        if forest is None:
            raise PlanningError("fallback search needs the forest")
        entry = find_preferred_goal(s_init, library, forest, table, db.params)
        if entry.found:
            goals = [entry.goal]
    if not goals:
        raise PlanningError(
            f"no goal states available for {s_init}: no usable stored neighbor"
            + ("" if fallback_search else " and fallback search disabled")
        )
    if forest is not None:
        evaluator = StateEvaluator(forest, table, db.params.target)
        for g in goals:
            if evaluator.proba(g) < db.params.z:
                raise PlanningError(
                    f"stored goal {g} does not reach the vote threshold; "
                    "the goal database does not match this model"
                )
    return SasProblem(
        sizes=table.sizes, library=library, initial=s_init, goals=tuple(goals)
    )


@dataclass(frozen=True)
class PlanAttempt:
    L: int
    status: str  # "sat" | "unsat" | "timeout"
    cost: float | None


@dataclass(frozen=True)
class PlanOutcome:
    status: str
    plan: Plan | None
    s_init: State
    goals: tuple[State, ...]
    attempts: tuple[PlanAttempt, ...]

    @property
    def solved(self) -> bool:
        return self.status in (SOLVED, ALREADY_GOAL)


def plan_actions(
    forest: RandomForest,
    table: PartitionTable,
    library: ActionLibrary,
    db: GoalDatabase,
    x: Vector | None = None,
    state: State | None = None,
    k: int = 3,
    l_max: int = 8,
    sweep: bool = False,
    sim_weights: SimilarityWeights | None = None,
    scale: int = DEFAULT_SCALE,
    timeout: float | None = None,
    backend: str | None = None,
    fallback_search: bool = True,
) -> PlanOutcome:
    """Full online pipeline for one instance.

    Makespans 1..l_max are tried in order; the first satisfiable one
    yields the cost-minimal plan at that makespan.  With ``sweep`` the
    remaining makespans are solved too and the cheapest plan overall is
    kept (optimal cost can only improve with more steps).
    """
    if (x is None) == (state is None):
        raise PlanningError("pass exactly one of x (raw vector) or state (partition indices)")
    check_pairing(db, forest)
    if k < 1:
        raise PlanningError(f"k must be >= 1, got {k}")
    if l_max < 1:
        raise PlanningError(f"l_max must be >= 1, got {l_max}")
    s_init = to_state(table, x) if x is not None else check_state(table, state)
    if sim_weights is None:
        sim_weights = SimilarityWeights.from_forest(forest)

    evaluator = StateEvaluator(forest, table, db.params.target)
    if evaluator.proba(s_init) >= db.params.z:
        return PlanOutcome(
            status=ALREADY_GOAL,
            plan=Plan(steps=(), cost=0.0, goal=s_init),
            s_init=s_init,
            goals=(s_init,),
            attempts=(),
        )

    try:
        sas = build_sas(
            s_init, db, k, sim_weights, table, library,
            forest=forest, fallback_search=fallback_search,
        )
    except PlanningError as exc:
        if "no goal states available" in str(exc):
            return PlanOutcome(
                status=UNSOLVABLE, plan=None, s_init=s_init, goals=(), attempts=()
            )
        raise

    deadline = time.perf_counter() + timeout if timeout else None
    attempts: list[PlanAttempt] = []
    best: Plan | None = None
    for L in range(1, l_max + 1):
        budget = None
        if deadline is not None:
            budget = deadline - time.perf_counter()
            if budget <= 0:
                attempts.append(PlanAttempt(L=L, status="timeout", cost=None))
                break
        instance, varmap = encode(sas, L, scale=scale)
        result = maxsat.solve(instance, timeout=budget, backend=backend)
        if result.status == maxsat.HARD_UNSAT:
            attempts.append(PlanAttempt(L=L, status="unsat", cost=None))
            continue
        if result.status == maxsat.TIMEOUT:
            attempts.append(PlanAttempt(L=L, status="timeout", cost=None))
            break
        plan = decode(result.assignment, varmap, sas)
        check_plan(plan, sas)
        scaled = sum(
            _scaled_cost(a.cost, scale, f"action {a.id!r}")
            for step in plan.steps
            for a in step
        )
        if scaled != result.cost:
            raise EncodingBug(
                f"decoded plan weighs {scaled}, solver reported {result.cost}"
            )
        attempts.append(PlanAttempt(L=L, status="sat", cost=plan.cost))
        if best is None or plan.cost < best.cost:
            best = plan
        if not sweep:
            break

    if best is not None:
        return PlanOutcome(
            status=SOLVED,
            plan=best,
            s_init=s_init,
            goals=sas.goals,
            attempts=tuple(attempts),
        )
    if attempts and attempts[-1].status == "timeout":
        return PlanOutcome(
            status=TIMEOUT, plan=None, s_init=s_init, goals=sas.goals, attempts=tuple(attempts)
        )
    return PlanOutcome(
        status=UNSOLVABLE, plan=None, s_init=s_init, goals=sas.goals, attempts=tuple(attempts)
    )
