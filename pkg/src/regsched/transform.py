"""Normalization passes that bring a function into copy-extended LSSA form.

The pipeline decomposes cross-block values into block-local temporaries joined
by congruences, surrounds every temporary with optional store/load copies,
widens the alternatives of rematerializable values and paired memory accesses,
and finally lifts the congruences onto boundary operands.
"""

from __future__ import annotations

from dataclasses import replace

from .ir import (
    B_ENTRY, B_EXIT, B_NONE, COPY, DEF, ENTRY, EXIT, NATURAL, USE,
    Function, FunctionBuilder, ProcessorDescription,
)


class TransformError(Exception):
    pass


class NormalizeOptions:
    """Pass toggles; the copy pattern itself is fixed to store/load + move."""

    def __init__(self, enable_remat: bool = True, enable_double_load: bool = True,
                 enable_copy_extend: bool = True):
        self.enable_remat = enable_remat
        self.enable_double_load = enable_double_load
        self.enable_copy_extend = enable_copy_extend

    copy_pattern = "storemove-loadmove"


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _value_classes(fn: Function) -> dict[int, int]:
    """Map each temporary to its value class (phi-congruence representative)."""
    uf = _UnionFind()
    for t in fn.temps:
        uf.find(t)
    for a, b in fn.temp_congruences:
        uf.union(a, b)
    return {t: uf.find(t) for t in fn.temps}


def build_lssa(fn: Function) -> Function:
    """Split cross-block values into block-local temporaries with congruences.

    The input must be SSA: each temporary defined once, merges expressed as
    temporary-level congruences.  Conventional form is assumed, so one member
    of a value class is live at any point.
    """
    if fn.is_normalized() or _already_local(fn):
        return fn
    cls = _value_classes(fn)

    # def/use sites per class, per block, at textual positions
    defs: dict[tuple[int, int], list[tuple[int, int]]] = {}
    uses: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for bid in fn.blocks:
        for pos, op in enumerate(fn.block_ops(bid)):
            for pid in op.defs:
                for t in fn.operands[pid].temps:
                    defs.setdefault((bid, cls[t]), []).append((pos, pid))
            for pid in op.uses:
                for t in fn.operands[pid].temps:
                    if len(fn.operands[pid].temps) != 1:
                        raise TransformError("alternative temporaries before LSSA")
                    uses.setdefault((bid, cls[t]), []).append((pos, pid))

    # block-level liveness over value classes
    all_classes = sorted(set(cls.values()))
    live_in: dict[int, set[int]] = {b: set() for b in fn.blocks}
    live_out: dict[int, set[int]] = {b: set() for b in fn.blocks}
    gen: dict[int, set[int]] = {}
    defd: dict[int, set[int]] = {}
    for bid in fn.blocks:
        g, d = set(), set()
        for v in all_classes:
            dpos = [p for p, _ in defs.get((bid, v), [])]
            upos = [p for p, _ in uses.get((bid, v), [])]
            if upos and (not dpos or min(upos) <= min(dpos)):
                g.add(v)
            if dpos:
                d.add(v)
        gen[bid], defd[bid] = g, d
    changed = True
    while changed:
        changed = False
        for bid in reversed(fn.blocks):
            out = set()
            for s in fn.blocktab[bid].succs:
                out |= live_in[s]
            inn = gen[bid] | (out - defd[bid])
            if out != live_out[bid] or inn != live_in[bid]:
                live_out[bid], live_in[bid] = out, inn
                changed = True

    fb = FunctionBuilder(fn.name)
    for bid in fn.blocks:
        b = fn.blocktab[bid]
        fb.add_block(b.name, b.frequency, b.depth)
    for bid in fn.blocks:
        fb.set_succs(bid, fn.blocktab[bid].succs)

    first_block = fn.blocks[0]
    # (block, class) -> local temp at entry / at exit
    entry_local: dict[tuple[int, int], int] = {}
    exit_local: dict[tuple[int, int], int] = {}
    old2new: dict[tuple[int, int], int] = {}   # (block, old temp) -> new temp

    for bid in fn.blocks:
        bname = fn.blocktab[bid].name
        current: dict[int, int] = {}
        entry_pids: list[int] = []
        exit_pids: list[int] = []
        entry_oid = fb.new_op_id()
        body: list[int] = []

        old_entry = fn.entry_op(bid)
        old_exit = fn.exit_op(bid)
        entry_pre = {cls[fn.operands[pid].temps[0]]: fn.operands[pid].preassign
                     for pid in old_entry.defs}
        exit_pre = {cls[fn.operands[pid].temps[0]]: fn.operands[pid].preassign
                    for pid in old_exit.uses}

        for v in all_classes:
            if v in live_in[bid]:
                rep = fn.temps[v]
                nt = fb.add_temp(f"{rep.name}.{bname}", rep.width, rep.remat)
                boundary = B_NONE if bid == first_block else B_ENTRY
                pid = fb.add_operand(entry_oid, DEF, (nt,), entry_pre.get(v), boundary)
                entry_pids.append(pid)
                current[v] = nt
                entry_local[(bid, v)] = nt

        for pos, op in enumerate(fn.block_ops(bid)):
            if op.kind == ENTRY:
                # live-in params of the first block keep their own names
                for pid in op.defs:
                    old = fn.operands[pid].temps[0]
                    v = cls[old]
                    if v in live_in[bid]:
                        continue  # defined fresh below as live-in
                    nt = fb.add_temp(fn.temps[old].name, fn.temps[old].width,
                                     fn.temps[old].remat)
                    np_ = fb.add_operand(entry_oid, DEF, (nt,),
                                         fn.operands[pid].preassign, B_NONE)
                    entry_pids.append(np_)
                    current[v] = nt
                    old2new[(bid, old)] = nt
                continue
            if op.kind == EXIT:
                continue
            oid = fb.new_op_id()
            nuses, ndefs = [], []
            for pid in op.uses:
                old = fn.operands[pid].temps[0]
                v = cls[old]
                if v not in current:
                    raise TransformError(
                        f"use of {fn.temps[old].name} before definition in block {bname}")
                nuses.append(fb.add_operand(oid, USE, (current[v],),
                                            fn.operands[pid].preassign))
            for pid in op.defs:
                old = fn.operands[pid].temps[0]
                v = cls[old]
                if (bid, v) in entry_local or v in {cls[fn.operands[q].temps[0]]
                                                    for q in op.defs if q != pid}:
                    pass
                nt = fb.add_temp(_local_name(fb, fn.temps[old].name, bname),
                                 fn.temps[old].width, fn.temps[old].remat)
                ndefs.append(fb.add_operand(oid, DEF, (nt,), fn.operands[pid].preassign))
                current[v] = nt
                old2new[(bid, old)] = nt
            fb.set_op(oid, bid, op.kind, op.instructions, nuses, ndefs, op.addr_offset)
            body.append(oid)

        fb.set_op(entry_oid, bid, ENTRY, old_entry.instructions, (), entry_pids)
        fb.append_op(bid, entry_oid)
        for oid in body:
            fb.append_op(bid, oid)
        exit_oid = fb.new_op_id()
        is_return = not fn.blocktab[bid].succs
        for v in all_classes:
            keep = v in live_out[bid] or (is_return and v in exit_pre)
            if not keep:
                continue
            if v not in current:
                raise TransformError(
                    f"value {fn.temps[v].name} live out of {bname} but never defined")
            boundary = B_NONE if is_return else B_EXIT
            pid = fb.add_operand(exit_oid, USE, (current[v],), exit_pre.get(v), boundary)
            exit_pids.append(pid)
            exit_local[(bid, v)] = current[v]
        fb.set_op(exit_oid, bid, EXIT, old_exit.instructions, exit_pids, ())
        fb.append_op(bid, exit_oid)

    for bid in fn.blocks:
        for s in fn.blocktab[bid].succs:
            for v in sorted(live_in[s]):
                if v in live_out[bid]:
                    fb.temp_congruences.append((exit_local[(bid, v)], entry_local[(s, v)]))
    return fb.finalize()


def _already_local(fn: Function) -> bool:
    if fn.temp_congruences:
        return False
    for t in fn.temps.values():
        if t.definer < 0:
            continue
        bid = fn.operations[fn.operands[t.definer].operation].block
        for pid in t.users:
            if fn.operations[fn.operands[pid].operation].block != bid:
                return False
    return True


def _local_name(fb: FunctionBuilder, base: str, bname: str) -> str:
    if fb.temp_id(base) is None:
        return base
    cand = f"{base}.{bname}"
    k = 1
    while fb.temp_id(cand) is not None:
        cand = f"{base}.{bname}{k}"
        k += 1
    return cand


def copy_extend(fn: Function, proc: ProcessorDescription) -> Function:
    """Surround each temporary with a store-move and per-use load-moves.

    The store copy can only read the original; each load copy may read the
    original or the stored value; every original user is offered the original
    plus all introduced temporaries as alternatives.
    """
    for purpose in ("store", "load", "move"):
        if not proc.copies.get(purpose):
            raise TransformError(f"processor {proc.name} lacks a {purpose} copy instruction")
    store_ins = tuple(dict.fromkeys(proc.copies["store"] + proc.copies["move"]))
    load_ins = tuple(dict.fromkeys(proc.copies["load"] + proc.copies["move"]))

    fb = FunctionBuilder.from_function(fn)
    original = sorted(fn.temps)
    for tid in original:
        t = fn.temps[tid]
        if t.definer < 0:
            continue
        def_op = fn.operands[t.definer].operation
        bid = fn.operations[def_op].block
        ops = fb.block_ops[bid]

        s_oid = fb.new_op_id()
        s_use = fb.add_operand(s_oid, USE, (tid,))
        s_temp = fb.add_temp(f"{t.name}.s", t.width, False)
        s_def = fb.add_operand(s_oid, DEF, (s_temp,))
        fb.set_op(s_oid, bid, COPY, store_ins, (s_use,), (s_def,))
        ops.insert(ops.index(def_op) + 1, s_oid)

        new_temps = [s_temp]
        for k, pid in enumerate(t.users, start=1):
            user_op = fn.operands[pid].operation
            l_oid = fb.new_op_id()
            l_use = fb.add_operand(l_oid, USE, (tid, s_temp))
            l_temp = fb.add_temp(f"{t.name}.l{k}", t.width, False)
            l_def = fb.add_operand(l_oid, DEF, (l_temp,))
            fb.set_op(l_oid, bid, COPY, load_ins, (l_use,), (l_def,))
            ops.insert(ops.index(user_op), l_oid)
            new_temps.append(l_temp)
        for pid in t.users:
            fb.rewire(pid, fb.operands[pid].temps + tuple(new_temps))
    return fb.finalize()


def adjust_rematerialization(fn: Function, proc: ProcessorDescription) -> Function:
    """Offer recomputation instead of reloading for rematerializable values.

    The definer gains the virtual demat instruction (materializing into a
    rematerialization register); each load copy gains the original definer
    instruction as an alternative.
    """
    demat = proc.copies.get("demat")
    if not demat:
        return fn
    fb = FunctionBuilder.from_function(fn)
    changed = False
    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        if not t.remat or t.definer < 0:
            continue
        def_op = fn.operations[fn.operands[t.definer].operation]
        real = [i for i in def_op.instructions if not proc.instructions[i].virtual]
        if len(real) != 1:
            raise TransformError(
                f"rematerializable {t.name}: definer must have exactly one real instruction")
        fb.set_op(def_op.id, def_op.block, def_op.kind,
                  def_op.instructions + tuple(demat), def_op.uses, def_op.defs,
                  def_op.addr_offset)
        for pid in t.users:
            op = fn.operations[fn.operands[pid].operation]
            if op.kind != COPY:
                continue
            is_load = any(i in proc.copies.get("load", ()) for i in op.instructions)
            if is_load and fn.operands[op.uses[0]].temps[0] == tid:
                fb.set_op(op.id, op.block, op.kind, op.instructions + (real[0],),
                          op.uses, op.defs, op.addr_offset)
        changed = True
    return fb.finalize() if changed else fn


def extend_double_loads(fn: Function, proc: ProcessorDescription) -> Function:
    """Add optional paired operations for accesses at consecutive addresses.

    Paired singles become optional; the pair's destinations are offered as
    alternatives to the users of each single destination.
    """
    if not proc.pairs:
        return fn
    fb = FunctionBuilder.from_function(fn)
    changed = False
    for bid in fn.blocks:
        cands = []
        for op in fn.block_ops(bid):
            if (op.kind == NATURAL and op.addr_offset is not None
                    and len(op.instructions) == 1 and op.instructions[0] in proc.pairs
                    and len(op.defs) == 1 and len(op.uses) == 1):
                cands.append(op)
        cands.sort(key=lambda o: (fn.operands[o.uses[0]].temps[0], o.addr_offset, o.id))
        for a, b in zip(cands, cands[1:]):
            base_a = fn.operands[a.uses[0]].temps[0]
            base_b = fn.operands[b.uses[0]].temps[0]
            if base_a != base_b or b.addr_offset - a.addr_offset != 4:
                continue
            if proc.pairs[a.instructions[0]] != proc.pairs[b.instructions[0]]:
                continue
            double = proc.pairs[a.instructions[0]]
            ta = fn.operands[a.defs[0]].temps[0]
            tb = fn.operands[b.defs[0]].temps[0]
            d_oid = fb.new_op_id()
            d_use = fb.add_operand(d_oid, USE, fn.operands[a.uses[0]].temps)
            na = fb.add_temp(f"{fn.temp_name(ta)}.d", fn.temps[ta].width, False)
            nb = fb.add_temp(f"{fn.temp_name(tb)}.d", fn.temps[tb].width, False)
            da = fb.add_operand(d_oid, DEF, (na,))
            db = fb.add_operand(d_oid, DEF, (nb,))
            fb.set_op(d_oid, bid, COPY, (double,), (d_use,), (da, db), a.addr_offset)
            ops = fb.block_ops[bid]
            ops.insert(ops.index(b.id) + 1, d_oid)
            for old, new in ((ta, na), (tb, nb)):
                for pid in fn.temps[old].users:
                    p = fn.operands[pid]
                    if fn.operations[p.operation].kind != COPY:
                        fb.rewire(pid, fb.operands[pid].temps + (new,))
            # the singles become optional now that the pair can cover them
            for single in (a, b):
                fb.set_op(single.id, single.block, COPY, single.instructions,
                          single.uses, single.defs, single.addr_offset)
            changed = True
    return fb.finalize() if changed else fn


def lift_congruences(fn: Function) -> Function:
    """Turn temporary-level congruences into boundary-operand pairs."""
    if not fn.temp_congruences:
        return fn
    fb = FunctionBuilder.from_function(fn)
    for t_pred, t_succ in fn.temp_congruences:
        p_pred = p_succ = None
        for pid, p in fn.operands.items():
            op = fn.operations[p.operation]
            if op.kind == EXIT and p.direction == USE and p.temps and p.temps[0] == t_pred:
                p_pred = pid
            if op.kind == ENTRY and p.direction == DEF and p.temps[0] == t_succ:
                p_succ = pid
        if p_pred is None or p_succ is None:
            raise TransformError(
                f"congruence {fn.temp_name(t_pred)} ~ {fn.temp_name(t_succ)} "
                "has no hosting boundary operand")
        fb.congruences.append((p_pred, p_succ))
    fb.temp_congruences = []
    return fb.finalize()


def insert_frame_operations(fn: Function, proc: ProcessorDescription) -> Function:
    """Optional stack setup/teardown copies, activated only when a frame exists."""
    cc = proc.callconv
    if not cc.frame_setup and not cc.frame_teardown:
        return fn
    fb = FunctionBuilder.from_function(fn)
    if cc.frame_setup:
        bid = fn.blocks[0]
        oid = fb.new_op_id()
        fb.set_op(oid, bid, COPY, cc.frame_setup, (), ())
        fb.insert_op(bid, 1, oid)
    if cc.frame_teardown:
        for bid in fn.blocks:
            if fn.blocktab[bid].succs:
                continue
            oid = fb.new_op_id()
            fb.set_op(oid, bid, COPY, cc.frame_teardown, (), ())
            fb.insert_op(bid, len(fb.block_ops[bid]) - 1, oid)
    return fb.finalize()


def normalize(fn: Function, proc: ProcessorDescription,
              opts: NormalizeOptions | None = None) -> Function:
    """Full pipeline; idempotent on already-normalized functions."""
    opts = opts or NormalizeOptions()
    if fn.is_normalized():
        return fn
    out = build_lssa(fn)
    if opts.enable_copy_extend:
        out = copy_extend(out, proc)
        out = insert_frame_operations(out, proc)
        if opts.enable_remat:
            out = adjust_rematerialization(out, proc)
        if opts.enable_double_load:
            out = extend_double_loads(out, proc)
    out = lift_congruences(out)
    return out
