"""Exact weighted partial Max-SAT solving with two interchangeable kernels.

``solve`` dispatches to the compiled Cython kernel when it was built and
falls back to the pure-Python reference otherwise.  The environment
variable ``RFPLAN_MAXSAT`` forces a backend (``pure`` or ``compiled``).
Both kernels implement the identical algorithm and must return identical
results; the test suite checks them against each other.
"""

from __future__ import annotations

import os

from .io import wcnf_read, wcnf_write  # noqa: F401
from .model import (  # noqa: F401
    HARD_UNSAT,
    OPTIMAL,
    TIMEOUT,
    SolveResult,
    WcnfError,
    WcnfInstance,
    compile_instance,
)
from . import _pure

try:
    from . import _bb
except ImportError:  # extension not built; pure fallback
    _bb = None

_STATUS = {0: OPTIMAL, 1: HARD_UNSAT, 2: TIMEOUT}


class BackendError(RuntimeError):
    """Requested solver backend is not available."""


def available_backends() -> tuple[str, ...]:
    return ("pure", "compiled") if _bb is not None else ("pure",)


def default_backend() -> str:
    forced = os.environ.get("RFPLAN_MAXSAT", "").strip().lower()
    if forced in ("pure", "compiled"):
        return forced
    if forced and forced != "auto":
        raise BackendError(f"RFPLAN_MAXSAT must be 'pure', 'compiled', or 'auto', not {forced!r}")
    return "compiled" if _bb is not None else "pure"


def solve(instance: WcnfInstance, timeout: float | None = None, backend: str | None = None) -> SolveResult:
    """Minimize falsified soft weight subject to the hard clauses.

    Returns an optimal model, ``hard_unsat``, or on timeout the best
    incumbent found.  Optimal models are re-checked against the clause
    set before being returned.
    """
    name = backend or default_backend()
    if name not in available_backends():
        raise BackendError(f"solver backend {name!r} is not available")
    kernel = _pure if name == "pure" else _bb
    weights, lits, offsets, order, polarity = compile_instance(instance)
    status_code, cost, assign_bytes, nodes = kernel.solve_compiled(
        instance.nvars, weights, lits, offsets, order, polarity,
        float(timeout) if timeout else 0.0,
    )
    status = _STATUS[status_code]
    if status == HARD_UNSAT:
        return SolveResult(status=status, cost=None, assignment=None, nodes=nodes, backend=name)
    if cost < 0:  # timed out before any incumbent
        return SolveResult(status=status, cost=None, assignment=None, nodes=nodes, backend=name)
    assignment = tuple(bool(b) for b in assign_bytes)
    hard_ok, true_cost = instance.check(assignment)
    if status == OPTIMAL and (not hard_ok or true_cost != cost):
        raise RuntimeError(
            f"solver returned an inconsistent model (hard_ok={hard_ok}, "
            f"reported cost {cost}, recomputed {true_cost})"
        )
    return SolveResult(status=status, cost=cost, assignment=assignment, nodes=nodes, backend=name)
