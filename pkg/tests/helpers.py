"""Shared generators and brute-force oracles for the test suite.

Random forests are built directly in threshold-index space so every tree
satisfies the narrowing invariant by construction; Max-SAT and planning
results are cross-checked against exhaustive enumeration.
"""

from __future__ import annotations

import math
import random
from itertools import combinations

import numpy as np

from rfplan.discretize import build_partitions
from rfplan.encoder import SasProblem
from rfplan.forest import (
    CATEGORICAL,
    HARD,
    NUMERICAL,
    SOFT,
    FeatureMeta,
    Leaf,
    RandomForest,
    Split,
)
from rfplan.maxsat.model import WcnfInstance
from rfplan.sas_core import Action, ActionLibrary, Transition, action_mutex, simulate_step


# ---------------------------------------------------------------------------
# random forests over small partition spaces


def _grow_random_tree(rng, features, windows, classes, depth):
    splittable = [
        i for i, w in enumerate(windows)
        if (features[i].is_numerical and w[0] < w[1]) or
           (features[i].is_categorical and len(w) >= 2)
    ]
    if depth == 0 or not splittable or rng.random() < 0.25:
        return Leaf(label=rng.choice(classes))
    i = rng.choice(splittable)
    meta = features[i]
    if meta.is_numerical:
        lo, hi = windows[i]
        t = rng.randrange(lo, hi)
        left_w = list(windows)
        left_w[i] = (lo, t)
        right_w = list(windows)
        right_w[i] = (t + 1, hi)
        return Split(
            feature=i,
            threshold=float(t + 1),
            left=_grow_random_tree(rng, features, left_w, classes, depth - 1),
            right=_grow_random_tree(rng, features, right_w, classes, depth - 1),
        )
    cats = windows[i]
    pick = rng.choice(cats)
    left_w = list(windows)
    left_w[i] = [pick]
    right_w = list(windows)
    right_w[i] = [c for c in cats if c != pick]
    return Split(
        feature=i,
        categories=(pick,),
        left=_grow_random_tree(rng, features, left_w, classes, depth - 1),
        right=_grow_random_tree(rng, features, right_w, classes, depth - 1),
    )


def random_soft_forest(seed, m_range=(3, 5), cells_max=5, state_cap=150,
                       trees_max=7, depth_max=3, hard_chance=0.3):
    """A small random forest plus its partition table.

    Numerical thresholds sit at 1.0, 2.0, ... so partition cells are the
    unit intervals; an optional hard categorical feature exercises the
    immutable-attribute paths.
    """
    rng = random.Random(seed)
    m = rng.randint(*m_range)
    features = []
    cell_plan = []
    budget = state_cap
    with_hard = rng.random() < hard_chance
    for i in range(m):
        if with_hard and i == 0:
            features.append(FeatureMeta(name="f0", kind=CATEGORICAL, mutability=HARD,
                                        categories=("a", "b")))
            cell_plan.append(2)
            budget //= 2
            continue
        room = [c for c in range(2, cells_max + 1) if c <= budget]
        cells = rng.choice(room) if room else 1
        budget = budget // max(cells, 1)
        features.append(FeatureMeta(name=f"f{i}", kind=NUMERICAL, mutability=SOFT))
        cell_plan.append(cells)
    classes = (0, 1)
    trees = []
    for _ in range(rng.randint(2, trees_max)):
        windows = [
            list(meta.categories) if meta.is_categorical else (0, cells - 1)
            for meta, cells in zip(features, cell_plan)
        ]
        trees.append(_grow_random_tree(rng, features, windows, classes, depth_max))
    forest = RandomForest(
        features=tuple(features), classes=classes, trees=tuple(trees),
        weights=(1.0,) * len(trees),
    )
    return forest, build_partitions(forest)


def random_state(rng, table):
    return tuple(rng.randrange(n) for n in table.sizes)


# ---------------------------------------------------------------------------
# Max-SAT instances and exhaustive reference


def random_wcnf(rng, nv_max=20, nv_min=3, hard_mult=1.5, soft_mult=1.5,
                weight_max=40):
    nv = rng.randint(nv_min, nv_max)
    hard = []
    for _ in range(rng.randint(1, int(nv * hard_mult))):
        width = rng.randint(1, min(3, nv))
        hard.append([rng.choice([-1, 1]) * v
                     for v in rng.sample(range(1, nv + 1), width)])
    soft = []
    for _ in range(rng.randint(1, int(nv * soft_mult))):
        width = rng.randint(1, min(2, nv))
        clause = [rng.choice([-1, 1]) * v
                  for v in rng.sample(range(1, nv + 1), width)]
        soft.append((rng.randint(1, weight_max), clause))
    return WcnfInstance.build(nv, hard, soft)


def brute_force_cost(instance):
    """(some hard assignment exists, minimal soft cost) by full enumeration."""
    n = instance.nvars
    if n > 22:
        raise ValueError(f"enumeration over {n} variables is too large")
    assignments = np.arange(1 << n, dtype=np.uint32)

    def falsified(clause):
        out = np.ones(1 << n, dtype=bool)
        for lit in clause:
            bit = (assignments >> (abs(lit) - 1)) & 1
            out &= bit != (1 if lit > 0 else 0)
        return out

    ok = np.ones(1 << n, dtype=bool)
    for clause in instance.hard:
        ok &= ~falsified(clause)
    if not ok.any():
        return False, None
    cost = np.zeros(1 << n, dtype=np.int64)
    for weight, clause in instance.soft:
        cost[falsified(clause)] += weight
    return True, int(cost[ok].min())


# ---------------------------------------------------------------------------
# SAS+ tasks and a step-bounded planning reference


def random_sas(rng, nvars_max=3, domain_max=3, actions_max=6, cost_max=9):
    """A tiny planning task with regular and prevailing transitions."""
    nvars = rng.randint(1, nvars_max)
    sizes = [rng.randint(1, domain_max) for _ in range(nvars)]
    if max(sizes) == 1:
        sizes[rng.randrange(nvars)] = rng.randint(2, domain_max)
    sizes = tuple(sizes)
    actions = []
    for j in range(rng.randint(1, actions_max)):
        n_eff = rng.randint(1, nvars)
        chosen = rng.sample(range(nvars), n_eff)
        transitions = tuple(
            Transition(var=v, frm=rng.randrange(sizes[v]), to=rng.randrange(sizes[v]))
            for v in chosen
        )
        actions.append(Action(id=f"a{j}", transitions=transitions,
                              cost=float(rng.randint(1, cost_max))))
    initial = tuple(rng.randrange(n) for n in sizes)
    n_goals = rng.randint(1, 2)
    goals = {tuple(rng.randrange(n) for n in sizes) for _ in range(n_goals)}
    return SasProblem(sizes=sizes, library=ActionLibrary(actions=tuple(actions)),
                      initial=initial, goals=tuple(sorted(goals)))


def min_plan_cost(sas, max_steps):
    """Cheapest cost reaching any goal within ``max_steps`` parallel steps.

    Dynamic program over states; each step applies a non-empty set of
    applicable, pairwise compatible actions with simulate_step semantics.
    Returns None when no goal is reachable.
    """
    best = {sas.initial: 0.0}
    for _ in range(max_steps):
        nxt = dict(best)
        for s, g in best.items():
            apps = [a for a in sas.library if a.applicable(s)]
            for size in range(1, len(apps) + 1):
                for subset in combinations(apps, size):
                    if any(action_mutex(a, b) for a, b in combinations(subset, 2)):
                        continue
                    t = simulate_step(s, subset)
                    cost = g + sum(a.cost for a in subset)
                    if cost < nxt.get(t, math.inf):
                        nxt[t] = cost
        best = nxt
    reached = [c for s, c in best.items() if s in sas.goals]
    return min(reached) if reached else None
