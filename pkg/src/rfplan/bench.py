"""Benchmark harness: planner vs greedy vs exhaustive search on one forest.

For each preprocessing fraction r the harness samples r% of the state
space, builds a goal database, then runs every arm on the same test
instances and reports per-instance records plus per-fraction means.
Everything except wall-clock timings is determined by the seeds.
"""

from __future__ import annotations

import random
import resource
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import greedy_plan, oracle_plan, OracleCapExceeded
from .discretize import PartitionTable, State, StateEvaluator, enumerate_states
from .encoder import plan_actions, SOLVED as PLAN_SOLVED
from .forest import Label, RandomForest
from .offline import AUTO, SearchParams, preprocess
from .sas_core import ActionLibrary, CostModel, default_action_library


class BenchError(ValueError):
    """The benchmark cannot run as configured."""


@dataclass(frozen=True)
class BenchSettings:
    target: Label
    z: float = 0.5
    alpha: float | str = AUTO
    patience: int = 10_000_000
    node_budget: int = 5_000_000
    k: int = 3
    l_max: int = 4
    sweep_makespan: bool = False
    n_instances: int = 100
    cost_seed: int = 0
    beta_range: tuple[int, int] = (1, 100)
    sample_seed: int = 0
    state_cap: int = 250_000
    oracle_cap: int = 2_000_000
    workers: int = 1
    timeout: float | None = None
    backend: str | None = None

    def search_params(self) -> SearchParams:
        return SearchParams(
            target=self.target,
            z=self.z,
            alpha=self.alpha,
            patience=self.patience,
            node_budget=self.node_budget,
        )


@dataclass(frozen=True)
class ArmResult:
    status: str
    cost: float | None
    length: int | None
    makespan: int | None
    seconds: float

    @property
    def solved(self) -> bool:
        return self.cost is not None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "cost": self.cost,
            "length": self.length,
            "makespan": self.makespan,
            "seconds": round(self.seconds, 6),
        }


@dataclass(frozen=True)
class InstanceReport:
    index: int
    state: State
    planner: ArmResult
    greedy: ArmResult
    oracle: ArmResult

    def to_dict(self) -> dict:
        return {
            "kind": "instance",
            "index": self.index,
            "state": list(self.state),
            "planner": self.planner.to_dict(),
            "greedy": self.greedy.to_dict(),
            "oracle": self.oracle.to_dict(),
        }


@dataclass(frozen=True)
class FractionReport:
    fraction: int
    db_states: int
    goals_found: int
    prep_seconds: float
    peak_gb: float
    instances: tuple[InstanceReport, ...] = field(repr=False)

    def arm_summary(self, arm: str) -> dict:
        results = [getattr(r, arm) for r in self.instances]
        solved = [r for r in results if r.solved]
        out = {"solved": len(solved), "total": len(results)}
        if solved:
            out["mean_cost"] = sum(r.cost for r in solved) / len(solved)
            out["mean_length"] = sum(r.length for r in solved) / len(solved)
            out["mean_seconds"] = sum(r.seconds for r in solved) / len(solved)
        else:
            out["mean_cost"] = None
            out["mean_length"] = None
            out["mean_seconds"] = None
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "summary",
            "fraction": self.fraction,
            "db_states": self.db_states,
            "goals_found": self.goals_found,
            "prep_seconds": round(self.prep_seconds, 6),
            "peak_gb": self.peak_gb,
            "n_instances": len(self.instances),
            "planner": _round_summary(self.arm_summary("planner")),
            "greedy": _round_summary(self.arm_summary("greedy")),
            "oracle": _round_summary(self.arm_summary("oracle")),
        }


def _round_summary(doc: dict) -> dict:
    out = dict(doc)
    for key in ("mean_cost", "mean_length", "mean_seconds"):
        if out.get(key) is not None:
            out[key] = round(out[key], 6)
    return out


def peak_memory_gb() -> float:
    """Peak resident set size of this process so far, in GB."""
    kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return round(kb * 1024 / 1e9, 4)


def build_cost_model(m: int, cost_seed: int, beta_range: tuple[int, int]) -> CostModel:
    rng = np.random.default_rng(cost_seed)
    return CostModel.random(m, rng, beta_range[0], beta_range[1])


def default_library(table: PartitionTable, settings: BenchSettings) -> ActionLibrary:
    cost = build_cost_model(len(table.features), settings.cost_seed, settings.beta_range)
    return default_action_library(table, cost)


def state_universe(table: PartitionTable, cap: int) -> list[State]:
    n = table.state_count
    if n > cap:
        raise BenchError(
            f"state space has {n} states, above the cap of {cap}; "
            "use a smaller forest or raise --state-cap"
        )
    return list(enumerate_states(table))


def pick_instances(
    universe: Sequence[State],
    evaluator: StateEvaluator,
    settings: BenchSettings,
    candidates: Sequence[State] | None = None,
) -> list[State]:
    """Test instances: states the forest does not yet send to the target.

    Explicit candidates (dataset rows, in file order) are used as given;
    otherwise the universe is shuffled with the sample seed.
    """
    if candidates is None:
        pool = list(universe)
        random.Random(f"instances:{settings.sample_seed}").shuffle(pool)
    else:
        pool = list(candidates)
    picked = []
    for s in pool:
        if evaluator.proba(s) < settings.z:
            picked.append(s)
            if len(picked) == settings.n_instances:
                break
    if not picked:
        raise BenchError(
            f"no test instances: every candidate state already reaches z={settings.z}"
        )
    return picked


def _run_planner(forest, table, library, db, s, settings: BenchSettings) -> ArmResult:
    t0 = time.perf_counter()
    outcome = plan_actions(
        forest,
        table,
        library,
        db,
        state=s,
        k=settings.k,
        l_max=settings.l_max,
        sweep=settings.sweep_makespan,
        timeout=settings.timeout,
        backend=settings.backend,
    )
    dt = time.perf_counter() - t0
    if outcome.status == PLAN_SOLVED:
        plan = outcome.plan
        return ArmResult(outcome.status, plan.cost, plan.n_actions, plan.makespan, dt)
    return ArmResult(outcome.status, None, None, None, dt)


def _run_greedy(s, library, forest, table, params, evaluator) -> ArmResult:
    t0 = time.perf_counter()
    res = greedy_plan(s, library, forest, table, params, evaluator=evaluator)
    dt = time.perf_counter() - t0
    if res.solved:
        return ArmResult(res.status, res.plan.cost, res.plan.n_actions, res.plan.makespan, dt)
    return ArmResult(res.status, None, None, None, dt)


def _run_oracle(s, library, forest, table, params, cap, evaluator) -> ArmResult:
    t0 = time.perf_counter()
    try:
        res = oracle_plan(s, library, forest, table, params, cap=cap, evaluator=evaluator)
    except OracleCapExceeded:
        return ArmResult("cap_exceeded", None, None, None, time.perf_counter() - t0)
    dt = time.perf_counter() - t0
    if res.solved:
        return ArmResult(res.status, res.plan.cost, res.plan.n_actions, res.plan.makespan, dt)
    return ArmResult(res.status, None, None, None, dt)


def run_bench(
    forest: RandomForest,
    table: PartitionTable,
    settings: BenchSettings,
    fractions: Sequence[int] = (100,),
    candidates: Sequence[State] | None = None,
    on_event: Callable[[str], None] | None = None,
) -> list[FractionReport]:
    """Run every arm for each preprocessing fraction and collect reports."""
    for r in fractions:
        if not 1 <= r <= 100:
            raise BenchError(f"fractions must be in 1..100, got {r}")
    say = on_event or (lambda msg: None)
    library = default_library(table, settings)
    params = settings.search_params()
    evaluator = StateEvaluator(forest, table, settings.target)

    universe = state_universe(table, settings.state_cap)
    instances = pick_instances(universe, evaluator, settings, candidates)
    say(f"{len(universe)} states, {len(instances)} test instances")

    reports = []
    for r in fractions:
        n_states = max(1, len(universe) * r // 100)
        if r == 100:
            sample = list(universe)
        else:
            rng = random.Random(f"prep:{settings.sample_seed}:{r}")
            sample = rng.sample(universe, n_states)
        t0 = time.perf_counter()
        db = preprocess(
            sample, library, forest, table, params, workers=settings.workers
        )
        prep_dt = time.perf_counter() - t0
        goals = sum(1 for e in db.entries.values() if e.found)
        say(f"r={r}%: database over {len(db.entries)} states, {goals} with goals, "
            f"{prep_dt:.2f}s")

        rows = []
        for i, s in enumerate(instances):
            planner = _run_planner(forest, table, library, db, s, settings)
            grd = _run_greedy(s, library, forest, table, params, evaluator)
            orc = _run_oracle(
                s, library, forest, table, params, settings.oracle_cap, evaluator
            )
            rows.append(
                InstanceReport(index=i, state=s, planner=planner, greedy=grd, oracle=orc)
            )
        reports.append(
            FractionReport(
                fraction=r,
                db_states=len(db.entries),
                goals_found=goals,
                prep_seconds=prep_dt,
                peak_gb=peak_memory_gb(),
                instances=tuple(rows),
            )
        )
    return reports


def parse_fractions(text: str) -> tuple[int, ...]:
    """Parse sweep specs like '10,20,...,100' or 'r=25,50,100'."""
    body = text.strip()
    if body.startswith("r="):
        body = body[2:]
    parts = [p.strip() for p in body.replace("…", "...").split(",") if p.strip()]
    if not parts:
        raise BenchError(f"empty fraction list {text!r}")
    if "..." in parts:
        i = parts.index("...")
        if i < 2 or i != len(parts) - 2:
            raise BenchError(
                f"ellipsis needs two leading values and one trailing value: {text!r}"
            )
        try:
            head = [int(p) for p in parts[:i]]
            last = int(parts[-1])
        except ValueError:
            raise BenchError(f"fractions must be integers: {text!r}") from None
        step = head[1] - head[0]
        if step <= 0:
            raise BenchError(f"fraction step must be positive: {text!r}")
        values = list(head)
        while values[-1] + step <= last:
            values.append(values[-1] + step)
        if values[-1] != last:
            raise BenchError(f"{last} is not reached by step {step}: {text!r}")
    else:
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise BenchError(f"fractions must be integers: {text!r}") from None
    for v in values:
        if not 1 <= v <= 100:
            raise BenchError(f"fractions must be in 1..100, got {v}")
    if len(set(values)) != len(values):
        raise BenchError(f"duplicate fractions: {text!r}")
    return tuple(values)
