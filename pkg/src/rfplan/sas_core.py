"""SAS+ building blocks: transitions, actions, mutex rules, cost model.

State variables are the discretized features; their values are partition
indices.  A transition moves one variable between values.  Three shapes:

  regular     (f, g) with f != g   -- requires f, produces g
  prevailing  (f, f)               -- requires f, leaves it unchanged
  mechanical  (*, g)               -- produces g from any prior value

An action is a set of pairwise compatible transitions over distinct
variables, applied simultaneously, with a positive cost.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

from .discretize import PartitionTable, State
from .forest import FeatureMeta

WILDCARD = None  # the "from anywhere" marker of a mechanical transition


class ActionError(ValueError):
    """Ill-formed transition, action, or action spec file."""


@dataclass(frozen=True)
class Transition:
    """One variable move.  ``frm`` is WILDCARD for a mechanical transition."""

    var: int
    frm: int | None
    to: int

    def __post_init__(self):
        if self.var < 0:
            raise ActionError(f"variable index must be >= 0, got {self.var}")
        if self.to < 0:
            raise ActionError(f"target value must be >= 0, got {self.to}")
        if self.frm is not None and self.frm < 0:
            raise ActionError(f"source value must be >= 0 or WILDCARD, got {self.frm}")

    @property
    def is_mechanical(self) -> bool:
        return self.frm is None

    @property
    def is_prevailing(self) -> bool:
        return self.frm is not None and self.frm == self.to

    @property
    def is_regular(self) -> bool:
        return self.frm is not None and self.frm != self.to

    @property
    def sort_key(self) -> tuple[int, int, int]:
        # mechanical transitions sort after explicit sources of the same variable
        return (self.var, self.frm if self.frm is not None else 1 << 30, self.to)

    def __str__(self) -> str:
        frm = "*" if self.frm is None else str(self.frm)
        return f"x{self.var}:{frm}->{self.to}"


def transition_mutex(t1: Transition, t2: Transition) -> bool:
    """Whether two transitions cannot fire in the same step.

    Identical transitions and transitions on different variables never
    clash.  On a shared variable, agreement on the target with at least
    one mechanical member is tolerated; everything else clashes.
    """
    if t1 == t2:
        return False
    if t1.var != t2.var:
        return False
    if (t1.is_mechanical or t2.is_mechanical) and t1.to == t2.to:
        return False
    return True


@dataclass(frozen=True)
class Action:
    """Simultaneous compatible transitions on distinct variables, with a cost."""

    id: str
    transitions: tuple[Transition, ...]
    cost: float

    def __post_init__(self):
        if not self.id:
            raise ActionError("action id must be non-empty")
        if not (self.cost > 0):
            raise ActionError(f"action {self.id!r}: cost must be positive, got {self.cost}")
        ts = tuple(sorted(set(self.transitions), key=lambda t: t.sort_key))
        if not ts:
            raise ActionError(f"action {self.id!r}: needs at least one transition")
        for i, a in enumerate(ts):
            for b in ts[i + 1:]:
                if transition_mutex(a, b):
                    raise ActionError(
                        f"action {self.id!r}: transitions {a} and {b} are mutually exclusive"
                    )
        object.__setattr__(self, "transitions", ts)
        object.__setattr__(self, "cost", float(self.cost))

    def applicable(self, s: State) -> bool:
        return all(t.is_mechanical or s[t.var] == t.frm for t in self.transitions)

    def apply(self, s: State) -> State:
        if not self.applicable(s):
            raise ActionError(f"action {self.id!r} is not applicable in state {s}")
        out = list(s)
        for t in self.transitions:
            out[t.var] = t.to
        return tuple(out)


def action_mutex(a1: Action, a2: Action) -> bool:
    """Whether two actions cannot share a step.

    They clash when they contain a mutex transition pair, or when they
    share a transition that writes (anything non-prevailing).
    """
    for t1 in a1.transitions:
        for t2 in a2.transitions:
            if transition_mutex(t1, t2):
                return True
            if t1 == t2 and not t1.is_prevailing:
                return True
    return False


@dataclass(frozen=True)
class CostModel:
    """Per-feature effort weights; a move from f to g on feature j costs
    weight_j * (f - g)^2 in partition-index space."""

    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.weights:
            raise ActionError("cost model needs at least one weight")
        for j, w in enumerate(self.weights):
            if not (w > 0):
                raise ActionError(f"weight {j} must be positive, got {w}")

    @classmethod
    def unit(cls, m: int) -> "CostModel":
        return cls(weights=(1.0,) * m)

    @classmethod
    def random(cls, m: int, rng, low: int = 1, high: int = 100) -> "CostModel":
        """Integer weights drawn uniformly from [low, high]."""
        return cls(weights=tuple(float(rng.integers(low, high + 1)) for _ in range(m)))

    def step_cost(self, var: int, frm: int, to: int) -> float:
        return self.weights[var] * (frm - to) ** 2


@dataclass(frozen=True)
class ActionLibrary:
    """Actions sorted by id, with unique ids."""

    actions: tuple[Action, ...]

    def __post_init__(self):
        acts = tuple(sorted(self.actions, key=lambda a: a.id))
        ids = [a.id for a in acts]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ActionError(f"duplicate action ids: {dupes}")
        object.__setattr__(self, "actions", acts)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def by_id(self, action_id: str) -> Action:
        for a in self.actions:
            if a.id == action_id:
                return a
        raise KeyError(action_id)

    def mean_cost(self) -> float:
        if not self.actions:
            return 0.0
        return sum(a.cost for a in self.actions) / len(self.actions)


def default_action_library(table: PartitionTable, cost: CostModel) -> ActionLibrary:
    """One single-transition action per soft feature and ordered value pair.

    Hard features get no actions.  A soft feature with n partitions yields
    n*(n-1) actions; the move from f to g costs weight * (f - g)^2.
    """
    if len(cost.weights) != len(table.features):
        raise ActionError(
            f"cost model has {len(cost.weights)} weights, table declares {len(table.features)} features"
        )
    actions = []
    for var, (meta, n) in enumerate(zip(table.features, table.sizes)):
        if not meta.is_soft:
            continue
        for f in range(n):
            for g in range(n):
                if f == g:
                    continue
                actions.append(
                    Action(
                        id=f"{meta.name}:{f}->{g}",
                        transitions=(Transition(var, f, g),),
                        cost=cost.step_cost(var, f, g),
                    )
                )
    return ActionLibrary(actions=tuple(actions))


def neighbors(s: State, library: ActionLibrary) -> list[tuple[Action, State, float]]:
    """Applicable actions with their successor states and costs, in id order."""
    out = []
    for a in library.actions:
        if a.applicable(s):
            out.append((a, a.apply(s), a.cost))
    return out


@dataclass(frozen=True)
class Plan:
    """Action steps executed in order; actions within a step fire together."""

    steps: tuple[tuple[Action, ...], ...]
    cost: float
    goal: State

    def __post_init__(self):
        object.__setattr__(
            self, "steps", tuple(tuple(sorted(step, key=lambda a: a.id)) for step in self.steps)
        )

    @property
    def makespan(self) -> int:
        return len(self.steps)

    @property
    def n_actions(self) -> int:
        return sum(len(step) for step in self.steps)

    def action_ids(self) -> list[list[str]]:
        return [[a.id for a in step] for step in self.steps]


def simulate_step(s: State, step: Sequence[Action]) -> State:
    """Apply one step's actions simultaneously; raises on any violation."""
    acts = sorted(step, key=lambda a: a.id)
    for i, a in enumerate(acts):
        if not a.applicable(s):
            raise ActionError(f"action {a.id!r} is not applicable in state {s}")
        for b in acts[i + 1:]:
            if action_mutex(a, b):
                raise ActionError(f"actions {a.id!r} and {b.id!r} in one step are mutually exclusive")
    out = list(s)
    for a in acts:
        for t in a.transitions:
            out[t.var] = t.to
    return tuple(out)


def simulate_plan(s: State, steps: Sequence[Sequence[Action]]) -> State:
    """Run all steps in order and return the final state."""
    for step in steps:
        s = simulate_step(s, step)
    return s


def _element_lines(text: str) -> list[int]:
    """1-based line number of each top-level element of a JSON array."""
    lines: list[int] = []
    depth = 0
    line = 1
    in_string = False
    escaped = False
    expecting = False  # next non-space starts an element
    for ch in text:
        if ch == "\n":
            line += 1
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            if depth == 1 and expecting:
                lines.append(line)
                expecting = False
            continue
        if ch in "[{":
            if depth == 1 and expecting:
                lines.append(line)
                expecting = False
            depth += 1
            if ch == "[" and depth == 1:
                expecting = True
            continue
        if ch in "]}":
            depth -= 1
            continue
        if depth == 1:
            if ch == ",":
                expecting = True
            elif expecting and not ch.isspace():
                lines.append(line)
                expecting = False
    return lines


def _resolve_feature(ref, features: Sequence[FeatureMeta]) -> int:
    if isinstance(ref, bool):
        raise ActionError(f"feature reference {ref!r} is not a name or index")
    if isinstance(ref, int):
        if not 0 <= ref < len(features):
            raise ActionError(f"feature index {ref} out of range")
        return ref
    if isinstance(ref, str):
        for i, meta in enumerate(features):
            if meta.name == ref:
                return i
        raise ActionError(f"unknown feature {ref!r}")
    raise ActionError(f"feature reference {ref!r} is not a name or index")


def _resolve_value(value, var: int, table: PartitionTable, what: str) -> int:
    """An int is a partition index; a float is a raw value to discretize."""
    meta = table.features[var]
    n = table.sizes[var]
    if isinstance(value, bool):
        raise ActionError(f"{what} must be an integer partition index or a raw number")
    if isinstance(value, int):
        if not 0 <= value < n:
            raise ActionError(f"{what} index {value} outside [0, {n}) for feature {meta.name!r}")
        return value
    if isinstance(value, float):
        if meta.is_categorical:
            raise ActionError(f"{what}: raw numbers are not valid for categorical {meta.name!r}")
        return bisect_right(table.thresholds[var], value)
    if isinstance(value, str) and meta.is_categorical:
        if value not in meta.categories:
            raise ActionError(f"{what}: {value!r} not a category of {meta.name!r}")
        return meta.categories.index(value)
    raise ActionError(f"{what} must be an integer partition index or a raw number, got {value!r}")


def parse_action_spec(text: str, table: PartitionTable, source: str = "<action spec>") -> ActionLibrary:
    """Parse a JSON action spec.

    The document is an array of ``{"id", "cost", "transitions": [...]}``
    entries; each transition is ``{"feature", "from", "to"}`` where
    ``feature`` is a name or index, ``from`` is ``"*"`` for a mechanical
    transition, and values are integer partition indices, raw numbers, or
    category labels.  Errors name the offending entry's line.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ActionError(f"{source}:{exc.lineno}: not valid JSON ({exc.msg})") from None
    if not isinstance(doc, list):
        raise ActionError(f"{source}:1: action spec must be a JSON array")
    lines = _element_lines(text)
    actions = []
    for i, entry in enumerate(doc):
        line = lines[i] if i < len(lines) else 1
        where = f"{source}:{line}"
        try:
            actions.append(_parse_action_entry(entry, table))
        except ActionError as exc:
            raise ActionError(f"{where}: {exc}") from None
    try:
        return ActionLibrary(actions=tuple(actions))
    except ActionError as exc:
        raise ActionError(f"{source}: {exc}") from None


def _parse_action_entry(entry, table: PartitionTable) -> Action:
    if not isinstance(entry, dict):
        raise ActionError("each action must be an object")
    unknown = set(entry) - {"id", "cost", "transitions"}
    if unknown:
        raise ActionError(f"unknown keys {sorted(unknown)}")
    for key in ("id", "cost", "transitions"):
        if key not in entry:
            raise ActionError(f"action missing {key!r}")
    action_id = entry["id"]
    if not isinstance(action_id, str) or not action_id:
        raise ActionError("action id must be a non-empty string")
    cost = entry["cost"]
    if isinstance(cost, bool) or not isinstance(cost, (int, float)):
        raise ActionError(f"action {action_id!r}: cost must be a number")
    raw = entry["transitions"]
    if not isinstance(raw, list) or not raw:
        raise ActionError(f"action {action_id!r}: transitions must be a non-empty array")
    transitions = []
    for t in raw:
        if not isinstance(t, dict):
            raise ActionError(f"action {action_id!r}: each transition must be an object")
        for key in ("feature", "to"):
            if key not in t:
                raise ActionError(f"action {action_id!r}: transition missing {key!r}")
        var = _resolve_feature(t["feature"], table.features)
        meta = table.features[var]
        frm_raw = t.get("from", "*")
        if frm_raw == "*":
            frm: int | None = WILDCARD
        else:
            frm = _resolve_value(frm_raw, var, table, f"action {action_id!r}: 'from'")
        to = _resolve_value(t["to"], var, table, f"action {action_id!r}: 'to'")
        tr = Transition(var, frm, to)
        if not meta.is_soft and not tr.is_prevailing:
            raise ActionError(
                f"action {action_id!r}: transition {tr} mutates hard feature {meta.name!r}"
            )
        transitions.append(tr)
    return Action(id=action_id, transitions=tuple(transitions), cost=cost)


def load_action_spec(path, table: PartitionTable) -> ActionLibrary:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_action_spec(text, table, source=str(path))
