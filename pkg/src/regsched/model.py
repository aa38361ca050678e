"""Builds the integrated allocation + scheduling model from a normalized function.

Variables cover register placement, instruction selection, operand temporary
selection, operation activeness, issue cycles, live ranges, the frame flag,
and boundary latency slack.  Constraints are recorded as declarative items
that the solver compiles into propagators and the ground checker interprets
directly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .ir import (
    COPY, DEF, ENTRY, EXIT, USE,
    Function, Operand, Operation, ProcessorDescription, class_atoms,
)

SPEED = "speed"
SIZE = "size"


class ModelError(Exception):
    pass


@dataclass
class ModelOptions:
    frame: bool = True
    slack: bool = True


@dataclass(frozen=True)
class ConstraintItem:
    tag: str
    label: str
    core: bool
    args: dict


@dataclass
class VarDecl:
    name: str
    dom: tuple[tuple[int, int], ...]


class RegisterGeometry:
    """Atom array of the processor extended by per-function memory/remat atoms."""

    def __init__(self, proc: ProcessorDescription, mem_count: int, remat_count: int):
        self.proc = proc
        self.n_proc = len(proc.regfile.atoms)
        self.mem_count = mem_count
        self.remat_count = remat_count
        self.total = self.n_proc + mem_count + remat_count
        self._cache: dict[tuple[str, int], tuple[int, ...]] = {}

    def allowed(self, cname: str | None, width: int) -> tuple[int, ...]:
        if cname is None:
            return tuple(a for a in range(self.total)
                         if self._extent_ok(a, width))
        key = (cname, width)
        if key not in self._cache:
            self._cache[key] = class_atoms(self.proc, cname, width,
                                           self.mem_count, self.remat_count)
        return self._cache[key]

    def _extent_ok(self, a: int, width: int) -> bool:
        for base, count in ((0, self.n_proc), (self.n_proc, self.mem_count),
                            (self.n_proc + self.mem_count, self.remat_count)):
            if base <= a < base + count:
                return a + width <= base + count
        return False

    def preassign_atom(self, regname: str) -> int:
        return self.proc.regfile.named[regname][0]


class Model:
    def __init__(self, fn: Function, proc: ProcessorDescription, goal: str,
                 opts: ModelOptions):
        self.fn = fn
        self.proc = proc
        self.goal = goal
        self.opts = opts
        self.decls: list[VarDecl] = []
        self.items: list[ConstraintItem] = []
        self.emitted: set[str] = set()
        self.reg: dict[int, int] = {}
        self.ins: dict[int, int] = {}
        self.temp: dict[int, int] = {}
        self.live: dict[int, int] = {}
        self.active: dict[int, int] = {}
        self.cycle: dict[int, int] = {}
        self.ls: dict[int, int] = {}
        self.le: dict[int, int] = {}
        self.slack: dict[int, int] = {}
        self.sizeterm: dict[int, int] = {}
        self.cost: dict[int, int] = {}
        self.frame: int | None = None
        self.objective: int | None = None
        self.horizon: dict[int, int] = {}
        self.weights: dict[int, Fraction] = {}
        self.scale: int = 1
        self.geometry: RegisterGeometry | None = None

    # -- declaration helpers --

    def _var(self, name: str, dom) -> int:
        self.decls.append(VarDecl(name, tuple(dom)))
        return len(self.decls) - 1

    def _mark(self, family: str):
        if family in self.emitted:
            raise ModelError(f"constraint family {family} emitted twice")
        self.emitted.add(family)

    def add_item(self, tag, label, core, **args):
        self.items.append(ConstraintItem(tag, label, core, args))

    # -- shared lookups --

    def instr_objs(self, op: Operation):
        return [self.proc.instructions[i] for i in op.instructions]

    def op_of_operand(self, pid: int) -> Operation:
        return self.fn.operations[self.fn.operands[pid].operation]

    def lat_array(self, op: Operation) -> tuple[int, ...]:
        return tuple(i.latency for i in self.instr_objs(op))

    def block_temps(self, bid: int) -> list[int]:
        out = []
        for tid in sorted(self.fn.temps):
            t = self.fn.temps[tid]
            if t.definer >= 0 and self.op_of_operand(t.definer).block == bid:
                out.append(tid)
        return out

    def copy_kind(self, op: Operation) -> str | None:
        """Classify compiler-introduced optional operations by their instructions."""
        if op.kind != COPY:
            return None
        first = op.instructions[0]
        cc = self.proc.callconv
        if first in cc.frame_setup or first in cc.frame_teardown:
            return "frame"
        if first in self.proc.copies.get("store", ()):
            return "store"
        if first in self.proc.copies.get("load", ()):
            return "load"
        if first in self.proc.pairs.values():
            return "pair"
        return "other"


def declare_variables(fn: Function, proc: ProcessorDescription, goal: str,
                      opts: ModelOptions | None = None) -> Model:
    """V1-V9 plus objective bookkeeping; memory and remat spaces sized here."""
    m = Model(fn, proc, goal, opts or ModelOptions())
    mem = remat = 0
    for op in fn.operations.values():
        if op.kind == COPY:
            first = op.instructions[0]
            if first in proc.copies.get("store", ()):
                for pid in op.defs:
                    mem += fn.temps[fn.operands[pid].temps[0]].width
    for t in fn.temps.values():
        if t.remat:
            remat += t.width
    m.geometry = RegisterGeometry(proc, mem, remat)

    maxlat = proc.max_latency()
    for bid in fn.blocks:
        m.horizon[bid] = sum(
            max(i.latency for i in m.instr_objs(op)) + 1 for op in fn.block_ops(bid))

    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        atoms: set[int] = set()
        seen_any = False
        for pid in (t.definer, *t.users):
            if pid < 0:
                continue
            p = fn.operands[pid]
            op = fn.operations[p.operation]
            pos = (op.defs if p.direction == DEF else op.uses).index(pid)
            for ins in m.instr_objs(op):
                cname = ins.class_for(p.direction, pos)
                allowed = m.geometry.allowed(cname, t.width)
                atoms.update(allowed)
                seen_any = True
        if not seen_any or not atoms:
            atoms = set(m.geometry.allowed(None, t.width))
        if not atoms:
            raise ModelError(f"temporary {t.name} has no feasible register")
        m.reg[tid] = m._var(f"reg({t.name})", _runs(sorted(atoms)))
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        m.ins[oid] = m._var(f"ins(o{oid})", ((0, len(op.instructions) - 1),))
    for pid in sorted(fn.operands):
        p = fn.operands[pid]
        m.temp[pid] = m._var(f"temp(p{pid})", _runs(sorted(p.temps)))
    for tid in sorted(fn.temps):
        m.live[tid] = m._var(f"live({fn.temp_name(tid)})", ((0, 1),))
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        dom = ((0, 1),) if op.kind == COPY else ((1, 1),)
        m.active[oid] = m._var(f"active(o{oid})", dom)
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        h = m.horizon[op.block]
        dom = ((0, 0),) if op.kind == ENTRY else ((0, h),)
        m.cycle[oid] = m._var(f"cycle(o{oid})", dom)
    for tid in sorted(fn.temps):
        bid = m.op_of_operand(fn.temps[tid].definer).block
        h = m.horizon[bid]
        m.ls[tid] = m._var(f"ls({fn.temp_name(tid)})", ((0, h),))
        m.le[tid] = m._var(f"le({fn.temp_name(tid)})", ((0, h),))
    m.frame = m._var("frame", ((0, 1),) if m.opts.frame else ((0, 0),))
    for pid in sorted(fn.operands):
        p = fn.operands[pid]
        if not m.opts.slack or p.boundary == "none":
            dom = ((0, 0),)
        elif p.boundary == "exit":
            dom = ((-maxlat, 0),)
        else:
            dom = ((0, maxlat),)
        m.slack[pid] = m._var(f"slack(p{pid})", dom)

    weights = {}
    for bid in fn.blocks:
        weights[bid] = fn.blocktab[bid].frequency if goal == SPEED else Fraction(1)
    m.weights = weights
    m.scale = math.lcm(*(w.denominator for w in weights.values())) if weights else 1
    return m


def _runs(vals: list[int]) -> tuple[tuple[int, int], ...]:
    runs = []
    lo = hi = vals[0]
    for v in vals[1:]:
        if v == hi + 1:
            hi = v
        else:
            runs.append((lo, hi))
            lo = hi = v
    runs.append((lo, hi))
    return tuple(runs)


# --- constraint emission -------------------------------------------------------

def emit_allocation(m: Model) -> Model:
    """Register side: packing, pre-assignments, classes, liveness, congruence."""
    m._mark("allocation")
    fn = m.fn
    for bid in fn.blocks:
        rects = [(m.reg[t], fn.temps[t].width, m.ls[t], m.le[t], m.live[t])
                 for t in m.block_temps(bid)]
        if rects:
            m.add_item("noOverlap2D", "C1.1", True, block=bid, rects=rects)
    for pid in sorted(fn.operands):
        p = fn.operands[pid]
        if p.preassign:
            atom = m.geometry.preassign_atom(p.preassign)
            m.add_item("preassign", "C2.1", True, operand=pid, tempvar=m.temp[pid],
                       atom=atom, regof={t: m.reg[t] for t in p.temps})
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        instrs = m.instr_objs(op)
        for direction, pids in ((DEF, op.defs), (USE, op.uses)):
            for pos, pid in enumerate(pids):
                p = fn.operands[pid]
                rows = {}
                any_constrained = False
                for idx, ins in enumerate(instrs):
                    cname = ins.class_for(direction, pos)
                    for t in p.temps:
                        if cname is None:
                            rows[(t, idx)] = None
                        else:
                            rows[(t, idx)] = frozenset(
                                m.geometry.allowed(cname, fn.temps[t].width))
                            any_constrained = True
                if any_constrained:
                    m.add_item("regClassElement", "C3.2", True, operand=pid,
                               active=m.active[oid],
                               ins=m.ins[oid] if len(op.instructions) > 1 else None,
                               tempvar=m.temp[pid], rows=rows,
                               regof={t: m.reg[t] for t in p.temps})
    for oid in sorted(fn.operations):
        if fn.operations[oid].kind != COPY:
            m.add_item("activeNonCopy", "C4", True, var=m.active[oid])
    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        def_op = m.op_of_operand(t.definer)
        m.add_item("liveDef", "C5", True, live=m.live[tid], active=m.active[def_op.id])
        users = [(m.active[m.op_of_operand(q).id], m.temp[q], tid) for q in t.users]
        m.add_item("liveUse", "C5", True, live=m.live[tid], users=users)
    for a, b in fn.congruences:
        pa, pb = fn.operands[a], fn.operands[b]
        regof = {t: m.reg[t] for t in pa.temps + pb.temps}
        m.add_item("congruence", "C6", True, tp=m.temp[a], tq=m.temp[b], regof=regof)
    _emit_two_address(m)
    return m


def _emit_two_address(m: Model):
    fn = m.fn
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        pairs: dict[tuple[int, int], list[int]] = {}
        for idx, ins in enumerate(m.instr_objs(op)):
            for d, u in ins.two_address:
                pairs.setdefault((d, u), []).append(idx)
        for (d, u), idxs in sorted(pairs.items()):
            if d >= len(op.defs) or u >= len(op.uses):
                raise ModelError(f"two-address positions out of range on o{oid}")
            pd, pu = op.defs[d], op.uses[u]
            regof = {t: m.reg[t] for t in fn.operands[pd].temps + fn.operands[pu].temps}
            m.add_item("twoAddress", "C15", True, active=m.active[oid],
                       ins=m.ins[oid] if len(op.instructions) > 1 else None,
                       insset=frozenset(idxs), tp=m.temp[pd], tq=m.temp[pu],
                       regof=regof)


def emit_scheduling(m: Model) -> Model:
    """Cycle side: dependencies with slack/forwarding, resources, delimiters."""
    m._mark("scheduling")
    fn = m.fn
    for bid in fn.blocks:
        ops = fn.block_ops(bid)
        entry, exit_ = ops[0], ops[-1]
        for op in ops[1:]:
            m.add_item("dependency", "C7.0", True, cq=m.cycle[op.id],
                       cp=m.cycle[entry.id], active=m.active[op.id],
                       tempvar=None, tid=None, ins=None, lats=(), const_lat=1,
                       sp=None, sq=None, fwd=None)
        for op in ops[1:-1]:
            m.add_item("dependency", "C7.0", True, cq=m.cycle[exit_.id],
                       cp=m.cycle[op.id], active=m.active[op.id],
                       tempvar=None, tid=None, ins=None, lats=(), const_lat=1,
                       sp=None, sq=None, fwd=None)

    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        d_op = m.op_of_operand(t.definer)
        sp = m.slack[t.definer] if _slack_open(m, t.definer) else None
        for q in t.users:
            q_op = m.op_of_operand(q)
            if q_op.id == d_op.id:
                continue
            fwd = _fwd_exempt(m, q_op, q)
            if fwd is not None and not fwd[1]:
                continue    # every alternative forwards this operand
            sq = m.slack[q] if _slack_open(m, q) else None
            m.add_item("dependency", "C7.3" if fwd else ("C7.2" if (sp or sq) else "C7.1"),
                       True, cq=m.cycle[q_op.id], cp=m.cycle[d_op.id],
                       active=m.active[q_op.id], tempvar=m.temp[q], tid=tid,
                       ins=m.ins[d_op.id] if len(d_op.instructions) > 1 else None,
                       lats=m.lat_array(d_op), const_lat=m.lat_array(d_op)[0],
                       sp=sp, sq=sq, fwd=fwd)
        # forwarding synchronizes the consumer with the definer of the value
        for q in t.users:
            q_op = m.op_of_operand(q)
            pos = q_op.uses.index(q)
            fset = frozenset(i for i, ins in enumerate(m.instr_objs(q_op))
                             if pos in ins.forwarded)
            if fset and q_op.id != d_op.id:
                m.add_item("forwardSync", "C14", True, co=m.cycle[q_op.id],
                           cdef=m.cycle[d_op.id], active=m.active[q_op.id],
                           ins=m.ins[q_op.id] if len(q_op.instructions) > 1 else None,
                           insset=fset, tempvar=m.temp[q], tid=tid)

    for bid in fn.blocks:
        for rname in sorted(m.proc.resources):
            res = m.proc.resources[rname]
            tasks = []
            for op in fn.block_ops(bid):
                instrs = m.instr_objs(op)
                durs, units, offs = [], [], []
                for ins in instrs:
                    u = next((u for u in ins.usages if u.resource == rname), None)
                    durs.append(u.duration if u else 0)
                    units.append(u.units if u else 0)
                    offs.append(u.offset if u else 0)
                if not any(units):
                    continue
                tasks.append((m.cycle[op.id],
                              m.ins[op.id] if len(op.instructions) > 1 else None,
                              tuple(durs), tuple(units), tuple(offs),
                              m.active[op.id] if op.kind == COPY else None))
            if tasks:
                m.add_item("cumulative", "C8.1", True, block=bid, resource=rname,
                           cap=res.capacity, tasks=tasks)

    if m.opts.slack:
        for a, b in fn.congruences:
            m.add_item("slackBalance", "C13", True, sp=m.slack[a], sq=m.slack[b])
    return m


def _slack_open(m: Model, pid: int) -> bool:
    d = m.decls[m.slack[pid]].dom
    return not (len(d) == 1 and d[0] == (0, 0))


def _fwd_exempt(m: Model, q_op: Operation, q: int):
    """(ins var, frozen non-forwarding idxs) when some alternative forwards q."""
    pos = q_op.uses.index(q)
    fwd_idxs = {i for i, ins in enumerate(m.instr_objs(q_op)) if pos in ins.forwarded}
    if not fwd_idxs:
        return None
    nonfwd = frozenset(i for i in range(len(q_op.instructions)) if i not in fwd_idxs)
    return (m.ins[q_op.id], nonfwd)


def emit_integration(m: Model) -> Model:
    """Live range endpoints follow issue cycles of definers and last users."""
    m._mark("integration")
    fn = m.fn
    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        d_op = m.op_of_operand(t.definer)
        m.add_item("liveStart", "C9", True, ls=m.ls[tid], live=m.live[tid],
                   cycle=m.cycle[d_op.id])
        cands = [(m.cycle[m.op_of_operand(q).id], m.active[m.op_of_operand(q).id],
                  m.temp[q], tid) for q in t.users]
        m.add_item("liveEndMax", "C10", True, le=m.le[tid], live=m.live[tid],
                   cands=cands)
    return m


def emit_extensions(m: Model) -> Model:
    """Frame elimination; slack/forwarding/two-address are emitted with their hosts."""
    m._mark("extensions")
    if not m.opts.frame:
        return m
    fn = m.fn
    triggers = []
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        req = frozenset(i for i, ins in enumerate(m.instr_objs(op)) if ins.requires_frame)
        if req:
            triggers.append((m.active[oid],
                             m.ins[oid] if len(op.instructions) > 1 else None, req))
    m.add_item("requiresFrame", "C11", True, frame=m.frame, triggers=triggers)
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        man = frozenset(i for i, ins in enumerate(m.instr_objs(op)) if ins.manages_frame)
        if man:
            m.add_item("managesFrame", "C12", True, frame=m.frame,
                       active=m.active[oid],
                       ins=m.ins[oid] if len(op.instructions) > 1 else None,
                       manageset=man, n_ins=len(op.instructions))
    return m


def emit_objective(m: Model) -> Model:
    """Weighted block costs: exit cycle for speed, active code size for size."""
    m._mark("objective")
    fn = m.fn
    cost_max = {}
    for bid in fn.blocks:
        if m.goal == SPEED:
            cost_max[bid] = m.horizon[bid]
            m.cost[bid] = m._var(f"cost({fn.blocktab[bid].name})", ((0, m.horizon[bid]),))
            exit_op = fn.exit_op(bid)
            m.add_item("linear", "Eq2", True, coeffs=(1, -1),
                       xs=(m.cost[bid], m.cycle[exit_op.id]), const=-1, eq=True)
        else:
            total = 0
            terms = []
            for op in fn.block_ops(bid):
                sizes = tuple(i.size for i in m.instr_objs(op))
                if not any(sizes):
                    continue
                dom = sorted({0, *sizes})
                sv = m._var(f"size(o{op.id})", _runs(dom))
                m.sizeterm[op.id] = sv
                m.add_item("sizeTerm", "Eq3", True, s=sv, active=m.active[op.id],
                           ins=m.ins[op.id] if len(op.instructions) > 1 else None,
                           sizes=sizes)
                terms.append(sv)
                total += max(sizes)
            cost_max[bid] = total
            m.cost[bid] = m._var(f"cost({fn.blocktab[bid].name})", ((0, max(total, 0)),))
            m.add_item("linear", "Eq3", True,
                       coeffs=(1,) + (-1,) * len(terms),
                       xs=(m.cost[bid], *terms), const=0, eq=True)
    ub = sum(int(m.weights[b] * m.scale) * cost_max[b] for b in fn.blocks)
    m.objective = m._var("objective", ((0, max(ub, 0)),))
    m.add_item("linear", "Eq1", True,
               coeffs=(1,) + tuple(-int(m.weights[b] * m.scale) for b in fn.blocks),
               xs=(m.objective, *(m.cost[b] for b in fn.blocks)), const=0, eq=True)
    return m


def emit_improvements(m: Model, level: str = "basic") -> Model:
    """Implied, symmetry-breaking, and dominance-breaking constraints."""
    m._mark("improvements")
    if level == "none":
        return m
    if level not in ("basic", "full"):
        raise ModelError(f"unknown improvement level {level}")
    fn = m.fn
    widths = {t: fn.temps[t].width for t in fn.temps}

    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        if len(op.uses) >= 2:
            m.add_item("impliedAllDiff", "I1", False, active=m.active[oid],
                       operands=tuple(m.temp[q] for q in op.uses),
                       widths=widths, regof={t: m.reg[t] for t in fn.temps})
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        for idx, ins in enumerate(m.instr_objs(op)):
            for d, u in ins.two_address:
                q = op.uses[u]
                for t in fn.operands[q].temps:
                    m.add_item("impliedTwoAddrEnd", "I2", False, le=m.le[t],
                               cycle=m.cycle[oid], active=m.active[oid],
                               ins=m.ins[oid] if len(op.instructions) > 1 else None,
                               insset=frozenset([idx]), tempvar=m.temp[q], tid=t)
    for bid in fn.blocks:
        tasks = [(m.ls[t], m.le[t], widths[t], m.live[t]) for t in m.block_temps(bid)]
        if tasks:
            m.add_item("impliedPressure", "I3", False, block=bid, tasks=tasks,
                       cap=m.geometry.total)

    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        kind = m.copy_kind(op)
        if kind in ("store", "load") and len(op.defs) == 1 and len(op.uses) == 1:
            dst = fn.operands[op.defs[0]].temps[0]
            m.add_item("dominanceCopyNeq", "D1", False, active=m.active[oid],
                       srcvar=m.temp[op.uses[0]], dst=dst,
                       regof={t: m.reg[t] for t in fn.operands[op.uses[0]].temps + (dst,)},
                       widths=widths)
        if op.kind == COPY:
            vars_ = [m.cycle[oid], m.ins[oid]]
            vars_ += [m.temp[q] for q in op.uses + op.defs]
            m.add_item("dominanceInactive", "D2", False, guard=m.active[oid],
                       value=0, xs=tuple(vars_))
    for tid in sorted(fn.temps):
        m.add_item("dominanceInactive", "D2", False, guard=m.live[tid], value=0,
                   xs=(m.reg[tid], m.ls[tid], m.le[tid]))

    geo = m.geometry
    reg_seq = tuple(m.reg[t] for t in sorted(fn.temps))
    for base, count in ((geo.n_proc, geo.mem_count),
                        (geo.n_proc + geo.mem_count, geo.remat_count)):
        for a in range(base, base + count - 1):
            m.add_item("symmetryPrecede", "S1", False, xs=reg_seq, u=a, v=a + 1)
    loads: dict[int, list[int]] = {}
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        if m.copy_kind(op) == "load" and len(op.uses) == 1:
            src = fn.operands[op.uses[0]].temps[0]
            loads.setdefault(src, []).append(oid)
    for src, oids in sorted(loads.items()):
        sets = {fn.operations[o].instructions for o in oids}
        if len(sets) > 1:
            continue
        for a, b in zip(oids, oids[1:]):
            m.add_item("symmetryCopies", "S2", False,
                       first=m.active[a], second=m.active[b])

    if level == "full":
        _emit_full_improvements(m)
    return m


def _mandatory_graph(m: Model, bid: int):
    """Longest-path distances over dependencies that hold in every solution."""
    fn = m.fn
    ops = fn.block_ops(bid)
    idx = {op.id: i for i, op in enumerate(ops)}
    edges: dict[int, list[tuple[int, int]]] = {op.id: [] for op in ops}
    entry, exit_ = ops[0], ops[-1]
    for op in ops:
        if op.id != entry.id:
            edges[entry.id].append((op.id, 1))
        if op.id not in (entry.id, exit_.id) and op.kind != COPY:
            edges[op.id].append((exit_.id, 1))
    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        d_op = m.op_of_operand(t.definer)
        if d_op.block != bid or d_op.kind == COPY:
            continue
        minlat = min(m.lat_array(d_op))
        for q in t.users:
            q_op = m.op_of_operand(q)
            if q_op.kind == COPY or q_op.id == d_op.id:
                continue
            if fn.operands[q].temps[0] != tid:
                continue
            w = minlat + _slack_min(m, t.definer) + _slack_min(m, q)
            edges[d_op.id].append((q_op.id, w))
    # longest path in textual topological order
    dist = {entry.id: 0}
    for op in sorted(ops, key=lambda o: idx[o.id]):
        if op.id not in dist:
            continue
        for succ, w in edges[op.id]:
            if idx[succ] <= idx[op.id]:
                continue
            cand = dist[op.id] + w
            if cand > dist.get(succ, -10**9):
                dist[succ] = cand
    return dist, exit_.id


def _slack_min(m: Model, pid: int) -> int:
    return m.decls[m.slack[pid]].dom[0][0]


def _emit_full_improvements(m: Model):
    fn = m.fn
    for bid in fn.blocks:
        dist, exit_id = _mandatory_graph(m, bid)
        entry_id = fn.entry_op(bid).id
        for oid, d in sorted(dist.items()):
            if oid == entry_id or d <= 1:
                continue
            m.add_item("linear", "I4", False, coeffs=(1, -1),
                       xs=(m.cycle[entry_id], m.cycle[oid]), const=-d, eq=False)
        if m.goal == SPEED and exit_id in dist and dist[exit_id] > 1:
            m.add_item("linear", "I5", False, coeffs=(-1,),
                       xs=(m.cost[bid],), const=-(dist[exit_id] - 1), eq=False)
        elif m.goal == SIZE:
            lb = sum(min(i.size for i in m.instr_objs(op))
                     for op in fn.block_ops(bid) if op.kind != COPY)
            if lb > 0:
                m.add_item("linear", "I5", False, coeffs=(-1,),
                           xs=(m.cost[bid],), const=-lb, eq=False)
    _emit_combo_tables(m)


def _emit_combo_tables(m: Model, cap: int = 64):
    """Allowed (active, temp) combinations per copy-related cluster."""
    fn = m.fn
    clusters: dict[int, list[int]] = {}
    for oid in sorted(fn.operations):
        op = fn.operations[oid]
        if m.copy_kind(op) in ("store", "load"):
            root = fn.operands[op.uses[0]].temps[0]
            clusters.setdefault(root, []).append(oid)
    for root, copies in sorted(clusters.items()):
        members = [root] + [fn.operands[fn.operations[o].defs[0]].temps[0]
                            for o in copies]
        user_pids = sorted({q for t in members for q in fn.temps[t].users
                            if m.op_of_operand(q).kind != COPY})
        if not user_pids:
            continue
        act_vars = [m.active[o] for o in copies]
        temp_vars = [m.temp[q] for q in user_pids]
        combos = []
        for act in itertools.product((0, 1), repeat=len(copies)):
            alive = {root}
            for o, a in zip(copies, act):
                if a:
                    alive.add(fn.operands[fn.operations[o].defs[0]].temps[0])
            choices = []
            for q in user_pids:
                opts = [t for t in fn.operands[q].temps if t not in members or t in alive]
                choices.append(opts)
            for pick in itertools.product(*choices):
                used = set(pick)
                ok = True
                for o, a in zip(copies, act):
                    dst = fn.operands[fn.operations[o].defs[0]].temps[0]
                    src_opts = [t for t in fn.operands[fn.operations[o].uses[0]].temps
                                if t in alive]
                    if a and (dst not in used or not src_opts):
                        ok = False
                        break
                if ok:
                    combos.append(tuple(act) + tuple(pick))
                if len(combos) > cap:
                    break
            if len(combos) > cap:
                break
        if combos and len(combos) <= cap:
            m.add_item("table", "I6", False, xs=tuple(act_vars + temp_vars),
                       tuples=tuple(combos))


def apply_upper_bound(m: Model, ref_cost: Fraction) -> Model:
    """Require strict improvement over a reference objective value."""
    if ref_cost <= 0:
        raise ModelError("reference cost must be positive")
    m._mark("upperBound")
    bound = int(ref_cost * m.scale) - 1
    m.add_item("linear", "UB", False, coeffs=(1,), xs=(m.objective,),
               const=bound, eq=False)
    return m


def build_model(fn: Function, proc: ProcessorDescription, goal: str,
                opts: ModelOptions | None = None, level: str = "basic") -> Model:
    m = declare_variables(fn, proc, goal, opts)
    emit_allocation(m)
    emit_scheduling(m)
    emit_integration(m)
    emit_extensions(m)
    emit_objective(m)
    emit_improvements(m, level)
    return m


def objective_fraction(m: Model, scaled: int) -> Fraction:
    return Fraction(scaled, m.scale)


def static_lower_bound(m: Model) -> Fraction:
    """Weighted sum of per-block relaxation optima (mandatory work only)."""
    total = Fraction(0)
    for bid in m.fn.blocks:
        if m.goal == SPEED:
            dist, exit_id = _mandatory_graph(m, bid)
            lb = max(dist.get(exit_id, 1) - 1, 0)
        else:
            lb = sum(min(i.size for i in m.instr_objs(op))
                     for op in m.fn.block_ops(bid) if op.kind != COPY)
        total += m.weights[bid] * lb
    return total


def describe(m: Model) -> str:
    """Human-readable constraint listing with model-family labels."""
    lines = [f"model {m.fn.name} goal={m.goal} scale={m.scale}"]
    lines.append(f"vars {len(m.decls)}")
    for it in m.items:
        args = []
        for k, v in it.args.items():
            if isinstance(v, (int, str, frozenset)) or v is None:
                args.append(f"{k}={_short(v)}")
        lines.append(f"  [{it.label}] {it.tag} " + " ".join(args))
    return "\n".join(lines)


def _short(v):
    if isinstance(v, frozenset):
        return "{" + ",".join(str(x) for x in sorted(v)) + "}"
    return str(v)
