"""Compile declarative constraint items into engine propagators."""

from __future__ import annotations

from . import propagators as P
from .store import Engine


def build_engine(model, cell=None, extra_unary=()) -> Engine:
    """Engine with one variable per declaration and propagators per item."""
    eng = Engine()
    for decl in model.decls:
        eng.new_var(decl.dom)
    for item in model.items:
        for prop in compile_item(item):
            eng.add_propagator(prop)
    if cell is not None and model.objective is not None:
        eng.add_propagator(P.BoundLe(model.objective, cell))
    for var, values in extra_unary:
        eng.add_propagator(P.KeepValues(var, values))
    return eng


def _guard(active=None, tempvar=None, tid=None, ins=None, insset=None, extra_eqs=()):
    eqs = list(extra_eqs)
    ins_atoms = []
    if active is not None:
        eqs.append((active, 1))
    if tempvar is not None and tid is not None:
        eqs.append((tempvar, tid))
    if ins is not None and insset is not None:
        ins_atoms.append((ins, frozenset(insset)))
    return P.Guard(eqs, ins_atoms)


def compile_item(item) -> list:
    a = item.args
    tag = item.tag
    if tag == "noOverlap2D":
        return [P.NoOverlap2D(a["rects"])]
    if tag == "preassign":
        return [P.PreassignReg(a["tempvar"], a["atom"], a["regof"])]
    if tag == "regClassElement":
        return [P.RegClassOf(a["active"], a["ins"], a["tempvar"], a["rows"], a["regof"])]
    if tag == "activeNonCopy":
        return [P.FixValue(a["var"], 1)]
    if tag == "liveDef":
        return [P.BoolEq(a["live"], a["active"])]
    if tag == "liveUse":
        return [P.LiveUse(a["live"], a["users"])]
    if tag == "congruence":
        return [P.SameRegIf(a["tp"], a["tq"], a["regof"])]
    if tag == "twoAddress":
        guard = _guard(active=a["active"], ins=a["ins"], insset=a["insset"])
        return [P.SameRegIf(a["tp"], a["tq"], a["regof"], guard)]
    if tag == "dependency":
        fwd = a.get("fwd")
        guard = _guard(active=a["active"], tempvar=a.get("tempvar"), tid=a.get("tid"),
                       ins=fwd[0] if fwd else None,
                       insset=fwd[1] if fwd else None)
        return [P.CondDep(a["cq"], a["cp"], guard, ins=a["ins"], lats=a["lats"],
                          const_lat=a["const_lat"], sp=a["sp"], sq=a["sq"])]
    if tag == "forwardSync":
        guard = _guard(active=a["active"], tempvar=a["tempvar"], tid=a["tid"],
                       ins=a["ins"], insset=a["insset"])
        return [P.CondEq(a["co"], a["cdef"], guard)]
    if tag == "cumulative":
        return [P.Cumulative(a["tasks"], a["cap"])]
    if tag == "slackBalance":
        return [P.LinEq((1, 1), (a["sp"], a["sq"]), 0)]
    if tag == "liveStart":
        return [P.LiveStart(a["ls"], a["live"], a["cycle"])]
    if tag == "liveEndMax":
        return [P.CondMax(a["le"], a["live"], a["cands"])]
    if tag == "requiresFrame":
        return [P.FrameRequired(a["frame"], a["triggers"])]
    if tag == "managesFrame":
        props = []
        if a["ins"] is None:
            props.append(P.BoolClause(pos=(a["active"],), neg=(a["frame"],)))
        else:
            props.append(_ManagesFrame(a["frame"], a["active"], a["ins"],
                                       a["manageset"], a["n_ins"]))
        return props
    if tag == "linear":
        if a["eq"]:
            return [P.LinEq(a["coeffs"], a["xs"], a["const"])]
        return [P.LinLeq(a["coeffs"], a["xs"], a["const"])]
    if tag == "sizeTerm":
        return [P.SizeTerm(a["s"], a["active"], a["ins"], a["sizes"])]
    if tag == "impliedAllDiff":
        return [P.OpAllDiff(a["active"], a["operands"], a["widths"], a["regof"])]
    if tag == "impliedTwoAddrEnd":
        guard = _guard(active=a["active"], tempvar=a["tempvar"], tid=a["tid"],
                       ins=a["ins"], insset=a["insset"])
        return [P.CondLeq(a["le"], a["cycle"], guard)]
    if tag == "impliedPressure":
        return [P.CumulativeSE(a["tasks"], a["cap"])]
    if tag == "dominanceCopyNeq":
        guard = _guard(active=a["active"])
        return [P.NeqRegIf(a["srcvar"], a["dst"], a["regof"], a["widths"], guard)]
    if tag == "dominanceInactive":
        guard = P.Guard([(a["guard"], a["value"])])
        return [P.CondFix(guard, a["xs"])]
    if tag == "symmetryPrecede":
        return [P.Precede(a["xs"], a["u"], a["v"])]
    if tag == "symmetryCopies":
        return [P.BoolClause(pos=(a["first"],), neg=(a["second"],))]
    if tag == "table":
        return [P.Table(a["xs"], a["tuples"])]
    if tag == "probed":
        return [P.KeepValues(a["var"], a["values"])]
    if tag == "nogood":
        return [P.NotAllEqual(a["xs"], a["vs"])]
    raise ValueError(f"unknown constraint tag {tag}")


class _ManagesFrame(P.Propagator):
    """frame and manages(ins[o]) imply active[o]."""

    def __init__(self, frame, active, ins, manageset, n_ins):
        self.frame, self.active, self.ins = frame, active, ins
        self.manageset = frozenset(manageset)
        self.nonmanage = frozenset(range(n_ins)) - self.manageset

    def vars(self):
        return [self.frame, self.active, self.ins]

    def run(self, eng):
        if not (eng.fixed(self.frame) and eng.val(self.frame) == 1):
            return
        if all(i in self.manageset for i in eng.values(self.ins)):
            eng.assign(self.active, 1)
        if eng.fixed(self.active) and eng.val(self.active) == 0:
            eng.keep(self.ins, [i for i in eng.values(self.ins)
                                if i in self.nonmanage])
