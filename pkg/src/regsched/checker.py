"""Ground checker: evaluates constraint items on complete assignments.

Shares no code with the propagation engine; every item is re-evaluated from
its mathematical definition.  Used to certify solver output, baseline
solutions, and the brute-force oracle.
"""

from __future__ import annotations

from fractions import Fraction

from .model import Model, SIZE, SPEED


def check(model: Model, assignment: dict[int, int],
          include_noncore: bool = False) -> list[str]:
    """Violation descriptions; empty when the assignment is feasible."""
    v = assignment.__getitem__
    out = []
    for item in model.items:
        if not item.core and not include_noncore:
            continue
        msg = _eval_item(item, v)
        if msg:
            out.append(f"[{item.label}] {item.tag}: {msg}")
    return out


def _eval_item(item, v) -> str | None:
    a = item.args
    tag = item.tag
    if tag == "noOverlap2D":
        rects = [(v(r), w, v(s), v(e)) for r, w, s, e, l in a["rects"] if v(l) == 1]
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                x1, w1, s1, e1 = rects[i]
                x2, w2, s2, e2 = rects[j]
                if x1 < x2 + w2 and x2 < x1 + w1 and s1 < e2 and s2 < e1:
                    return f"rectangles overlap ({rects[i]} vs {rects[j]})"
        return None
    if tag == "preassign":
        t = v(a["tempvar"])
        if v(a["regof"][t]) != a["atom"]:
            return f"operand p{a['operand']} not at atom {a['atom']}"
        return None
    if tag == "regClassElement":
        if a["active"] is not None and v(a["active"]) != 1:
            return None
        t = v(a["tempvar"])
        i = v(a["ins"]) if a["ins"] is not None else 0
        allowed = a["rows"].get((t, i))
        if allowed is not None and v(a["regof"][t]) not in allowed:
            return f"register of temp {t} outside class for instruction {i}"
        return None
    if tag == "activeNonCopy":
        return None if v(a["var"]) == 1 else "mandatory operation inactive"
    if tag == "liveDef":
        return None if v(a["live"]) == v(a["active"]) else "live != definer active"
    if tag == "liveUse":
        used = any(v(av) == 1 and v(tv) == t for av, tv, t in a["users"])
        return None if (v(a["live"]) == 1) == used else "live != some active user"
    if tag == "congruence":
        tp, tq = v(a["tp"]), v(a["tq"])
        if v(a["regof"][tp]) != v(a["regof"][tq]):
            return "congruent operands in different registers"
        return None
    if tag == "twoAddress":
        if v(a["active"]) != 1:
            return None
        i = v(a["ins"]) if a["ins"] is not None else 0
        if i not in a["insset"]:
            return None
        tp, tq = v(a["tp"]), v(a["tq"])
        if v(a["regof"][tp]) != v(a["regof"][tq]):
            return "two-address overwrite in different registers"
        return None
    if tag == "dependency":
        if v(a["active"]) != 1:
            return None
        if a.get("tempvar") is not None and v(a["tempvar"]) != a["tid"]:
            return None
        fwd = a.get("fwd")
        if fwd is not None and v(fwd[0]) not in fwd[1]:
            return None
        lat = a["lats"][v(a["ins"])] if a["ins"] is not None else a["const_lat"]
        lat += v(a["sp"]) if a["sp"] is not None else 0
        lat += v(a["sq"]) if a["sq"] is not None else 0
        if v(a["cq"]) < v(a["cp"]) + lat:
            return f"dependency violated: {v(a['cq'])} < {v(a['cp'])} + {lat}"
        return None
    if tag == "forwardSync":
        if v(a["active"]) != 1 or v(a["tempvar"]) != a["tid"]:
            return None
        i = v(a["ins"]) if a["ins"] is not None else 0
        if i not in a["insset"]:
            return None
        return None if v(a["co"]) == v(a["cdef"]) else "forwarding not synchronized"
    if tag == "cumulative":
        profile: dict[int, int] = {}
        for c, ins, durs, units, offs, act in a["tasks"]:
            if act is not None and v(act) != 1:
                continue
            i = v(ins) if ins is not None else 0
            start = v(c) + offs[i]
            for k in range(start, start + durs[i]):
                profile[k] = profile.get(k, 0) + units[i]
        over = [k for k, u in profile.items() if u > a["cap"]]
        if over:
            return f"resource {a['resource']} over capacity at cycles {sorted(over)}"
        return None
    if tag == "slackBalance":
        return None if v(a["sp"]) + v(a["sq"]) == 0 else "slack not balanced"
    if tag == "liveStart":
        if v(a["live"]) != 1:
            return None
        return None if v(a["ls"]) == v(a["cycle"]) else "live start != definer cycle"
    if tag == "liveEndMax":
        if v(a["live"]) != 1:
            return None
        cys = [v(c) for c, av, tv, t in a["cands"] if v(av) == 1 and v(tv) == t]
        if not cys:
            return "live temporary without active user"
        return None if v(a["le"]) == max(cys) else "live end != last user cycle"
    if tag == "requiresFrame":
        need = False
        for av, ins, idxs in a["triggers"]:
            i = v(ins) if ins is not None else 0
            if v(av) == 1 and i in idxs:
                need = True
        if need and v(a["frame"]) != 1:
            return "frame-requiring operation active without frame"
        return None
    if tag == "managesFrame":
        if v(a["frame"]) != 1:
            return None
        i = v(a["ins"]) if a["ins"] is not None else 0
        if i in a["manageset"] and v(a["active"]) != 1:
            return "frame-managing operation inactive under frame"
        return None
    if tag == "linear":
        total = sum(c * v(x) for c, x in zip(a["coeffs"], a["xs"]))
        if a["eq"]:
            return None if total == a["const"] else f"linear sum {total} != {a['const']}"
        return None if total <= a["const"] else f"linear sum {total} > {a['const']}"
    if tag == "sizeTerm":
        i = v(a["ins"]) if a["ins"] is not None else 0
        want = a["sizes"][i] if v(a["active"]) == 1 else 0
        return None if v(a["s"]) == want else "size term mismatch"
    if tag == "impliedAllDiff":
        if v(a["active"]) != 1:
            return None
        chosen = [v(tv) for tv in a["operands"]]
        for i in range(len(chosen)):
            for j in range(i + 1, len(chosen)):
                t1, t2 = chosen[i], chosen[j]
                if t1 == t2:
                    continue
                r1, r2 = v(a["regof"][t1]), v(a["regof"][t2])
                w1, w2 = a["widths"][t1], a["widths"][t2]
                if r1 < r2 + w2 and r2 < r1 + w1:
                    return "temporaries of one operation share registers"
        return None
    if tag == "impliedTwoAddrEnd":
        if v(a["active"]) != 1 or v(a["tempvar"]) != a["tid"]:
            return None
        i = v(a["ins"]) if a["ins"] is not None else 0
        if i not in a["insset"]:
            return None
        return None if v(a["le"]) <= v(a["cycle"]) else "two-address live end exceeds issue"
    if tag == "impliedPressure":
        profile: dict[int, int] = {}
        for s, e, w, l in a["tasks"]:
            if v(l) != 1:
                continue
            for k in range(v(s), v(e)):
                profile[k] = profile.get(k, 0) + w
        if any(u > a["cap"] for u in profile.values()):
            return "register pressure exceeds atom count"
        return None
    if tag == "dominanceCopyNeq":
        if v(a["active"]) != 1:
            return None
        src = v(a["srcvar"])
        r1, r2 = v(a["regof"][src]), v(a["regof"][a["dst"]])
        w1, w2 = a["widths"][src], a["widths"][a["dst"]]
        if r1 < r2 + w2 and r2 < r1 + w1:
            return "active copy between identical registers"
        return None
    if tag == "dominanceInactive":
        return None   # pinning is canonical, any consistent value passes
    if tag == "symmetryPrecede":
        first_u = first_v = None
        for i, x in enumerate(a["xs"]):
            if first_u is None and v(x) == a["u"]:
                first_u = i
            if first_v is None and v(x) == a["v"]:
                first_v = i
        if first_v is not None and (first_u is None or first_u > first_v):
            return f"value {a['v']} used before {a['u']}"
        return None
    if tag == "symmetryCopies":
        if v(a["second"]) == 1 and v(a["first"]) != 1:
            return "later copy active before earlier"
        return None
    if tag == "table":
        vals = tuple(v(x) for x in a["xs"])
        return None if vals in a["tuples"] else "tuple outside table"
    if tag == "probed":
        return None if v(a["var"]) in a["values"] else "probed value used"
    if tag == "nogood":
        vals = tuple(v(x) for x in a["xs"])
        return None if vals != tuple(a["vs"]) else "forbidden master revisited"
    raise ValueError(f"unknown constraint tag {tag}")


def objective_value(model: Model, assignment: dict[int, int]) -> Fraction:
    """Recompute the weighted objective from first principles."""
    fn = model.fn
    total = Fraction(0)
    for bid in fn.blocks:
        if model.goal == SPEED:
            cost = assignment[model.cycle[fn.exit_op(bid).id]] - 1
        else:
            cost = 0
            for op in fn.block_ops(bid):
                if assignment[model.active[op.id]] != 1:
                    continue
                ins = model.proc.instructions[
                    op.instructions[assignment[model.ins[op.id]]]]
                cost += ins.size
        total += model.weights[bid] * cost
    return total


def full_assignment(model: Model, partial: dict[int, int]) -> dict[int, int]:
    """Derive live/ls/le/cost/objective entries from the decision variables."""
    fn = model.fn
    out = dict(partial)
    for tid in sorted(fn.temps):
        t = fn.temps[tid]
        d_op = model.op_of_operand(t.definer)
        live = out[model.active[d_op.id]] == 1
        users = [q for q in t.users
                 if out[model.active[model.op_of_operand(q).id]] == 1
                 and out[model.temp[q]] == tid]
        live = live and bool(users)
        out[model.live[tid]] = 1 if live else 0
        if live:
            out[model.ls[tid]] = out[model.cycle[d_op.id]]
            out[model.le[tid]] = max(out[model.cycle[model.op_of_operand(q).id]]
                                     for q in users)
        else:
            out.setdefault(model.ls[tid], 0)
            out.setdefault(model.le[tid], 0)
    for op in fn.operations.values():
        if op.id in model.sizeterm:
            i = out[model.ins[op.id]]
            size = model.proc.instructions[op.instructions[i]].size
            out[model.sizeterm[op.id]] = size if out[model.active[op.id]] == 1 else 0
    for bid in fn.blocks:
        if model.goal == SPEED:
            cost = out[model.cycle[fn.exit_op(bid).id]] - 1
        else:
            cost = sum(out[model.sizeterm[op.id]] for op in fn.block_ops(bid)
                       if op.id in model.sizeterm)
        if bid in model.cost:
            out[model.cost[bid]] = cost
    if model.objective is not None:
        out[model.objective] = sum(
            int(model.weights[b] * model.scale) * out[model.cost[b]]
            for b in fn.blocks)
    return out
