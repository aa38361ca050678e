"""Finite-domain constraint kernel: propagation, search, portfolio, probing."""

from __future__ import annotations

import threading
import time
from fractions import Fraction

from ..ir import COPY
from ..model import Model, objective_fraction, static_lower_bound
from .compile import build_engine
from .search import (
    BoundCell, OpRecord, Search, SearchPlan, SolveResult, SolverConfig, Strategy,
)
from .store import Engine, Wipeout

__all__ = [
    "BoundCell", "SolverConfig", "SolveResult", "solve", "portfolio_solve",
    "probe", "propagate", "make_plan", "build_engine", "enumerate_assignments",
]


def make_plan(model: Model) -> SearchPlan:
    fn = model.fn
    ops = []
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        temps = tuple(model.temp[p] for p in op.defs + op.uses
                      if len(fn.operands[p].temps) > 1)
        ops.append(OpRecord(
            oid,
            model.active[oid] if op.kind == COPY else None,
            model.ins[oid] if len(op.instructions) > 1 else None,
            temps,
            model.cycle[oid]))
    slacks = []
    for pid in sorted(fn.operands):
        d = model.decls[model.slack[pid]].dom
        if not (len(d) == 1 and d[0] == (0, 0)):
            slacks.append((model.slack[pid], fn.operands[pid].boundary == "entry"))
    frame = model.frame if model.opts.frame else None
    regs = [(tid, model.reg[tid]) for tid in sorted(fn.temps)]
    return SearchPlan(ops, slacks, frame, regs, list(range(len(model.decls))))


def propagate(model: Model, extra_unary=()) -> dict[int, tuple] | None:
    """Fixpoint domains of the model, or None when propagation fails."""
    eng = build_engine(model, extra_unary=extra_unary)
    if not eng.propagate():
        return None
    return {i: eng.dom(i) for i in range(len(model.decls))}


def _result_from_search(model: Model, search: Search, elapsed: float) -> SolveResult:
    stats = {"nodes": search.nodes, "failures": search.failures,
             "propagations": search.eng.propagations,
             "strategy": search.strategy.name, "time": elapsed}
    static_lb = static_lower_bound(model)
    if search.exhausted:
        if search.best is None:
            return SolveResult("infeasible", None, None, None, "exhausted", stats)
        obj = objective_fraction(model, search.best_obj)
        return SolveResult("optimal", search.best, obj, obj, "proved-optimal", stats)
    root = (objective_fraction(model, search.root_lb)
            if search.root_lb is not None else None)
    lb = max(static_lb, root) if root is not None else static_lb
    src = "search-root" if root is not None and root >= static_lb else "block-relaxation"
    if search.best is None:
        return SolveResult("timeout", None, None, lb, src, stats)
    return SolveResult("feasible", search.best,
                       objective_fraction(model, search.best_obj), lb, src, stats)


def solve(model: Model, cfg: SolverConfig | None = None,
          cell: BoundCell | None = None, extra_unary=()) -> SolveResult:
    """Single-strategy branch and bound over the complete model."""
    cfg = cfg or SolverConfig()
    if model.objective is None:
        raise ValueError("objective not emitted")
    cell = cell or BoundCell()
    eng = build_engine(model, cell, extra_unary)
    plan = make_plan(model)
    strat = Strategy(cfg.strategies[0], plan)
    search = Search(eng, model.objective, strat, cell)
    start = time.monotonic()
    search.run(start + cfg.time_limit, cfg.node_limit)
    return _result_from_search(model, search, time.monotonic() - start)


def portfolio_solve(model: Model, cfg: SolverConfig | None = None,
                    cell: BoundCell | None = None, extra_unary=()) -> SolveResult:
    """Strategy portfolio sharing one incumbent bound.

    threads=1 runs assets round-robin in deterministic time slices; threads>1
    runs them concurrently.
    """
    cfg = cfg or SolverConfig()
    if model.objective is None:
        raise ValueError("objective not emitted")
    cell = cell or BoundCell()
    names = list(cfg.strategies)
    rot = cfg.seed % len(names)
    names = names[rot:] + names[:rot]
    searches = []
    for name in names:
        eng = build_engine(model, cell, extra_unary)
        plan = make_plan(model)
        searches.append(Search(eng, model.objective, Strategy(name, plan), cell))
    start = time.monotonic()
    deadline = start + cfg.time_limit

    if cfg.threads > 1:
        threads = [threading.Thread(target=s.run, args=(deadline,)) for s in searches]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    else:
        live = list(searches)
        while live and time.monotonic() < deadline:
            for s in list(live):
                slice_end = min(deadline, time.monotonic() + cfg.slice_seconds)
                if s.run(slice_end, cfg.node_limit):
                    live.remove(s)
                    if s.exhausted:
                        live = []   # exhaustion is conclusive for the portfolio
                        break
    elapsed = time.monotonic() - start
    return _combine(model, searches, elapsed)


def _combine(model: Model, searches: list[Search], elapsed: float) -> SolveResult:
    best = None
    best_obj = None
    for s in searches:
        if s.best_obj is not None and (best_obj is None or s.best_obj < best_obj):
            best, best_obj = s.best, s.best_obj
    stats = {"nodes": sum(s.nodes for s in searches),
             "failures": sum(s.failures for s in searches),
             "propagations": sum(s.eng.propagations for s in searches),
             "strategy": "+".join(s.strategy.name for s in searches),
             "time": elapsed}
    exhausted = any(s.exhausted for s in searches)
    if exhausted:
        if best is None:
            return SolveResult("infeasible", None, None, None, "exhausted", stats)
        obj = objective_fraction(model, best_obj)
        return SolveResult("optimal", best, obj, obj, "proved-optimal", stats)
    roots = [s.root_lb for s in searches if s.root_lb is not None]
    static_lb = static_lower_bound(model)
    lb = static_lb
    src = "block-relaxation"
    if roots:
        root = objective_fraction(model, max(roots))
        if root > lb:
            lb, src = root, "search-root"
    if best is None:
        return SolveResult("timeout", None, None, lb, src, stats)
    return SolveResult("feasible", best, objective_fraction(model, best_obj),
                       lb, src, stats)


def probe(model: Model, time_limit: float = 10.0) -> Model:
    """Shave instruction alternatives and tighten cost bounds by propagation."""
    eng = build_engine(model)
    deadline = time.monotonic() + time_limit
    if not eng.propagate():
        return model
    base = eng.mark()

    def fails_with(var, value) -> bool:
        mark = eng.mark()
        try:
            eng.assign(var, value)
            ok = eng.propagate()
        except Exception:
            ok = False
        eng.undo(mark)
        for i in range(len(eng.queued)):
            eng.queued[i] = False
        eng.queue.clear()
        return not ok

    for oid in sorted(model.fn.operations):
        if time.monotonic() > deadline:
            return model
        var = model.ins[oid]
        if eng.size(var) <= 1:
            continue
        keep = [v for v in list(eng.values(var)) if not fails_with(var, v)]
        if keep and len(keep) < eng.size(var):
            model.add_item("probed", "P1", False, var=var, values=frozenset(keep))
            eng.keep(var, keep)
            if not eng.propagate():
                return model

    def raise_lb(var):
        lo, hi = eng.min(var), eng.max(var)
        while lo < hi:
            if time.monotonic() > deadline:
                break
            mid = (lo + hi) // 2
            mark = eng.mark()
            try:
                eng.set_max(var, mid)
                ok = eng.propagate()
            except Exception:
                ok = False
            eng.undo(mark)
            for i in range(len(eng.queued)):
                eng.queued[i] = False
            eng.queue.clear()
            if ok:
                break
            lo = mid + 1
        if lo > eng.min(var):
            model.add_item("linear", "P2", False, coeffs=(-1,), xs=(var,),
                           const=-lo, eq=False)
            eng.set_min(var, lo)
            eng.propagate()

    for bid in sorted(model.cost):
        raise_lb(model.cost[bid])
    if model.objective is not None:
        raise_lb(model.objective)
    return model


def enumerate_assignments(eng: Engine, variables: list[int], limit: int = 1 << 22):
    """All solutions over the given variables by DFS; for small instances."""
    out = []
    if not eng.propagate():
        return out

    def descend():
        pick = next((v for v in variables if not eng.fixed(v)), None)
        if pick is None:
            out.append({v: eng.val(v) for v in variables})
            if len(out) > limit:
                raise RuntimeError("too many solutions")
            return
        for value in list(eng.values(pick)):
            mark = eng.mark()
            try:
                eng.assign(pick, value)
                ok = eng.propagate()
            except Wipeout:
                ok = False
            if ok:
                descend()
            eng.undo(mark)
            for i in range(len(eng.queued)):
                eng.queued[i] = False
            eng.queue.clear()

    descend()
    return out
