"""Branch-and-bound search over a compiled model.

Search is an explicit-stack DFS that can be paused and resumed, which gives
anytime behavior, tiny time limits, and round-robin strategy portfolios on a
single thread.  Assets share one incumbent cell so each prunes against the
global best.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

from .store import Wipeout


class BoundCell:
    """Monotonically decreasing shared upper bound on the objective."""

    def __init__(self, value: int | None = None):
        self.value = value

    def tighten(self, value: int):
        if self.value is None or value < self.value:
            self.value = value


@dataclass
class SolverConfig:
    time_limit: float = 60.0
    seed: int = 0
    strategies: tuple[str, ...] = ("ops", "instructions", "copies")
    improvement_level: str = "basic"
    threads: int = 1
    slice_seconds: float = 0.05
    node_limit: int | None = None

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")


@dataclass
class SolveResult:
    status: str                       # optimal | feasible | infeasible | timeout
    assignment: dict[int, int] | None
    objective: Fraction | None
    lower_bound: Fraction | None
    gap_source: str
    stats: dict = field(default_factory=dict)

    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


# --- strategies ---------------------------------------------------------------

class Strategy:
    """Deterministic variable/value ordering over a search plan."""

    def __init__(self, name: str, plan):
        self.name = name
        self.plan = plan

    def decide(self, eng):
        plan = self.plan
        if self.name == "instructions":
            for rec in plan.ops:
                if rec.ins is not None and not eng.fixed(rec.ins):
                    return rec.ins, tuple(eng.values(rec.ins))
        if self.name == "copies":
            for rec in plan.ops:
                if rec.active is not None and not eng.fixed(rec.active):
                    return rec.active, (0, 1)
        choice = self._op_bundle(eng)
        if choice is not None:
            return choice
        for sv, entry_side in plan.slacks:
            if not eng.fixed(sv):
                vals = sorted(eng.values(sv), key=lambda v: (abs(v), v))
                return sv, tuple(vals)
        if plan.frame is not None and not eng.fixed(plan.frame):
            return plan.frame, (0, 1)
        reg = None
        best = None
        for tid, rv in plan.regs:
            if not eng.fixed(rv):
                key = (eng.size(rv), tid)
                if best is None or key < best:
                    best, reg = key, rv
        if reg is not None:
            return reg, tuple(eng.values(reg))
        for v in plan.all_vars:
            if not eng.fixed(v):
                return v, (eng.min(v),)
        return None

    def _op_bundle(self, eng):
        plan = self.plan
        best = None
        pick = None
        for rec in plan.ops:
            open_ = (
                (rec.active is not None and not eng.fixed(rec.active))
                or (rec.ins is not None and not eng.fixed(rec.ins))
                or any(not eng.fixed(tv) for tv in rec.temps)
                or not eng.fixed(rec.cycle))
            if not open_:
                continue
            key = (eng.size(rec.cycle), rec.oid)
            if best is None or key < best:
                best, pick = key, rec
        if pick is None:
            return None
        if pick.active is not None and not eng.fixed(pick.active):
            return pick.active, (0, 1)
        if pick.ins is not None and not eng.fixed(pick.ins):
            return pick.ins, tuple(eng.values(pick.ins))
        for tv in pick.temps:
            if not eng.fixed(tv):
                return tv, tuple(eng.values(tv))
        vals = tuple(eng.values(pick.cycle))
        if self.name == "copies":
            vals = tuple(reversed(vals))
        return pick.cycle, vals


@dataclass
class OpRecord:
    oid: int
    active: int | None
    ins: int | None
    temps: tuple[int, ...]
    cycle: int


@dataclass
class SearchPlan:
    ops: list[OpRecord]
    slacks: list[tuple[int, bool]]
    frame: int | None
    regs: list[tuple[int, int]]
    all_vars: list[int]


# --- resumable DFS ------------------------------------------------------------

class Search:
    """One branch-and-bound asset: strategy + engine + explicit stack."""

    def __init__(self, eng, objective_var, strategy: Strategy, cell: BoundCell):
        self.eng = eng
        self.obj = objective_var
        self.strategy = strategy
        self.cell = cell
        self.stack: list = []          # (mark, var, remaining values)
        self.started = False
        self.exhausted = False
        self.failed_root = False
        self.best: dict[int, int] | None = None
        self.best_obj: int | None = None
        self.root_lb: int | None = None
        self.nodes = 0
        self.failures = 0
        self._last_cell = None

    def _propagate(self) -> bool:
        if self._last_cell != self.cell.value:
            self._last_cell = self.cell.value
            self.eng.wake_all()
        return self.eng.propagate()

    def run(self, deadline: float, node_budget: int | None = None) -> bool:
        """Advance until deadline/budget; True when the subtree is exhausted."""
        eng = self.eng
        spent = 0
        if not self.started:
            self.started = True
            if not self._propagate():
                self.exhausted = True
                self.failed_root = True
                return True
            self.root_lb = eng.min(self.obj)
            self._open(eng.mark())
        while self.stack:
            if node_budget is not None and spent >= node_budget:
                return False
            if time.monotonic() >= deadline:
                return False
            mark, var, values = self.stack[-1]
            eng.undo(mark)
            if not values:
                self.stack.pop()
                continue
            value = values.pop(0)
            self.nodes += 1
            spent += 1
            try:
                eng.assign(var, value)
            except Wipeout:
                self.failures += 1
                continue
            if not self._propagate():
                self.failures += 1
                continue
            self._open(eng.mark())
        self.exhausted = True
        eng.undo(0)
        return True

    def _open(self, mark: int):
        choice = self.strategy.decide(self.eng)
        if choice is None:
            self._solution()
            return
        var, values = choice
        self.stack.append((mark, var, list(values)))

    def _solution(self):
        eng = self.eng
        obj = eng.val(self.obj)
        if self.best_obj is None or obj < self.best_obj:
            self.best_obj = obj
            self.best = eng.snapshot()
        self.cell.tighten(obj - 1)
