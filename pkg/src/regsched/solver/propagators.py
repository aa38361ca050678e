"""Propagation algorithms for the constraint families used by the model.

Each propagator subscribes to its variables and narrows domains when run;
none is required to be domain-complete, only sound: search finishes whatever
propagation leaves open.
"""

from __future__ import annotations

from .store import Engine, Wipeout, dom_values

TRUE, FALSE, UNKNOWN = 1, 0, -1


class Guard:
    """Conjunction of atoms over variables: (var == val) and (var in set)."""

    def __init__(self, eqs=(), ins=()):
        self.eqs = tuple(eqs)          # (var, value)
        self.ins = tuple(ins)          # (var, frozenset of values)

    def vars(self):
        return [v for v, _ in self.eqs] + [v for v, _ in self.ins]

    def status(self, eng: Engine) -> int:
        entailed = True
        for x, v in self.eqs:
            if not eng.contains(x, v):
                return FALSE
            if not eng.fixed(x):
                entailed = False
        for x, s in self.ins:
            vals = [v for v in eng.values(x) if v in s]
            if not vals:
                return FALSE
            if len(vals) != eng.size(x):
                entailed = False
        return TRUE if entailed else UNKNOWN

    def force_false(self, eng: Engine):
        """Negate the single open atom; no-op if several are open."""
        open_eqs = [(x, v) for x, v in self.eqs if not eng.fixed(x)]
        open_ins = [(x, s) for x, s in self.ins if not eng.fixed(x)]
        if len(open_eqs) + len(open_ins) != 1:
            return
        if open_eqs:
            x, v = open_eqs[0]
            eng.remove(x, v)
        else:
            x, s = open_ins[0]
            eng.keep(x, [v for v in eng.values(x) if v not in s])

    def force_true(self, eng: Engine):
        for x, v in self.eqs:
            eng.assign(x, v)
        for x, s in self.ins:
            eng.keep(x, [v for v in eng.values(x) if v in s])


class Propagator:
    def vars(self) -> list[int]:
        raise NotImplementedError

    def run(self, eng: Engine):
        raise NotImplementedError


class FixValue(Propagator):
    def __init__(self, x, v):
        self.x, self.v = x, v

    def vars(self):
        return [self.x]

    def run(self, eng):
        eng.assign(self.x, self.v)


class KeepValues(Propagator):
    def __init__(self, x, allowed):
        self.x, self.allowed = x, frozenset(allowed)

    def vars(self):
        return [self.x]

    def run(self, eng):
        eng.keep(self.x, self.allowed)


class LinLeq(Propagator):
    """sum(coeff_i * x_i) <= const (integer coefficients)."""

    def __init__(self, coeffs, xs, const):
        self.coeffs = tuple(coeffs)
        self.xs = tuple(xs)
        self.const = const

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        lo = 0
        los = []
        for a, x in zip(self.coeffs, self.xs):
            t = a * eng.min(x) if a > 0 else a * eng.max(x)
            los.append(t)
            lo += t
        if lo > self.const:
            raise Wipeout()
        for a, x, t in zip(self.coeffs, self.xs, los):
            slack = self.const - (lo - t)
            if a > 0:
                eng.set_max(x, slack // a)
            elif a < 0:
                eng.set_min(x, -(slack // -a))


class LinEq(Propagator):
    """sum(coeff_i * x_i) == const."""

    def __init__(self, coeffs, xs, const):
        self.coeffs = tuple(coeffs)
        self.xs = tuple(xs)
        self.const = const

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        lo = hi = 0
        parts = []
        for a, x in zip(self.coeffs, self.xs):
            if a > 0:
                l, h = a * eng.min(x), a * eng.max(x)
            else:
                l, h = a * eng.max(x), a * eng.min(x)
            parts.append((l, h))
            lo += l
            hi += h
        if lo > self.const or hi < self.const:
            raise Wipeout()
        for (a, x), (l, h) in zip(zip(self.coeffs, self.xs), parts):
            lo_rest = lo - l
            hi_rest = hi - h
            # a*x must lie in [const - hi_rest, const - lo_rest]
            vmin, vmax = self.const - hi_rest, self.const - lo_rest
            if a > 0:
                eng.set_min(x, -((-vmin) // a))
                eng.set_max(x, vmax // a)
            else:
                eng.set_min(x, -(vmax // -a))
                eng.set_max(x, vmin // a)


class BoolClause(Propagator):
    """pos_1 or ... or pos_n or not neg_1 or ... or not neg_m."""

    def __init__(self, pos=(), neg=()):
        self.pos = tuple(pos)
        self.neg = tuple(neg)

    def vars(self):
        return list(self.pos) + list(self.neg)

    def run(self, eng):
        unfixed = None
        count = 0
        for x in self.pos:
            if eng.fixed(x):
                if eng.val(x) == 1:
                    return
            else:
                unfixed, unfixed_val = x, 1
                count += 1
        for x in self.neg:
            if eng.fixed(x):
                if eng.val(x) == 0:
                    return
            else:
                unfixed, unfixed_val = x, 0
                count += 1
        if count == 0:
            raise Wipeout()
        if count == 1:
            eng.assign(unfixed, unfixed_val)


class BoolEq(Propagator):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def vars(self):
        return [self.a, self.b]

    def run(self, eng):
        if eng.fixed(self.a):
            eng.assign(self.b, eng.val(self.a))
        elif eng.fixed(self.b):
            eng.assign(self.a, eng.val(self.b))


class NotAllEqual(Propagator):
    """Nogood: not (x_1 = v_1 and ... and x_n = v_n)."""

    def __init__(self, xs, vs):
        self.xs = tuple(xs)
        self.vs = tuple(vs)

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        open_idx = None
        for i, (x, v) in enumerate(zip(self.xs, self.vs)):
            if not eng.contains(x, v):
                return
            if not eng.fixed(x):
                if open_idx is not None:
                    return
                open_idx = i
        if open_idx is None:
            raise Wipeout()
        eng.remove(self.xs[open_idx], self.vs[open_idx])


class ElementConst(Propagator):
    """y = arr[x] with a constant array, x zero-based."""

    def __init__(self, y, arr, x):
        self.y, self.arr, self.x = y, tuple(arr), x

    def vars(self):
        return [self.y, self.x]

    def run(self, eng):
        eng.keep(self.x, [v for v in eng.values(self.x)
                          if 0 <= v < len(self.arr) and eng.contains(self.y, self.arr[v])])
        eng.keep(self.y, {self.arr[v] for v in eng.values(self.x)})


class CondDep(Propagator):
    """guard => cq >= cp + lat[ins] + slack_p + slack_q.

    Covers the data-dependency family: latency looked up through the
    implementing instruction, optional latency slack terms, and a forwarding
    exemption that turns the whole constraint off.
    """

    def __init__(self, cq, cp, guard: Guard, ins=None, lats=(), const_lat=0,
                 sp=None, sq=None):
        self.cq, self.cp = cq, cp
        self.guard = guard
        self.ins = ins
        self.lats = tuple(lats)
        self.const_lat = const_lat
        self.sp, self.sq = sp, sq

    def vars(self):
        vs = [self.cq, self.cp] + self.guard.vars()
        if self.ins is not None:
            vs.append(self.ins)
        if self.sp is not None:
            vs.append(self.sp)
        if self.sq is not None:
            vs.append(self.sq)
        return vs

    def _lat_bounds(self, eng):
        if self.ins is None:
            lmin = lmax = self.const_lat
        else:
            vals = [self.lats[i] for i in eng.values(self.ins)]
            lmin, lmax = min(vals), max(vals)
        if self.sp is not None:
            lmin += eng.min(self.sp)
            lmax += eng.max(self.sp)
        if self.sq is not None:
            lmin += eng.min(self.sq)
            lmax += eng.max(self.sq)
        return lmin, lmax

    def run(self, eng):
        st = self.guard.status(eng)
        if st == FALSE:
            return
        lmin, lmax = self._lat_bounds(eng)
        if st == UNKNOWN:
            if eng.max(self.cq) < eng.min(self.cp) + lmin:
                self.guard.force_false(eng)
            return
        eng.set_min(self.cq, eng.min(self.cp) + lmin)
        eng.set_max(self.cp, eng.max(self.cq) - lmin)
        gap = eng.max(self.cq) - eng.min(self.cp)
        if self.ins is not None:
            smin = (eng.min(self.sp) if self.sp is not None else 0) + \
                   (eng.min(self.sq) if self.sq is not None else 0)
            eng.keep(self.ins, [i for i in eng.values(self.ins)
                                if self.lats[i] + smin <= gap])
        base = self.const_lat if self.ins is None else min(
            self.lats[i] for i in eng.values(self.ins))
        if self.sp is not None:
            other = eng.min(self.sq) if self.sq is not None else 0
            eng.set_max(self.sp, gap - base - other)
        if self.sq is not None:
            other = eng.min(self.sp) if self.sp is not None else 0
            eng.set_max(self.sq, gap - base - other)


class CondEq(Propagator):
    """guard => x == y (used for operand-forwarding synchronization)."""

    def __init__(self, x, y, guard: Guard):
        self.x, self.y, self.guard = x, y, guard

    def vars(self):
        return [self.x, self.y] + self.guard.vars()

    def run(self, eng):
        st = self.guard.status(eng)
        if st == FALSE:
            return
        lo = max(eng.min(self.x), eng.min(self.y))
        hi = min(eng.max(self.x), eng.max(self.y))
        if st == UNKNOWN:
            if lo > hi:
                self.guard.force_false(eng)
            return
        eng.set_min(self.x, lo)
        eng.set_max(self.x, hi)
        eng.set_min(self.y, lo)
        eng.set_max(self.y, hi)


class CondLeq(Propagator):
    """guard => x <= y + const."""

    def __init__(self, x, y, guard: Guard, const=0):
        self.x, self.y, self.guard, self.const = x, y, guard, const

    def vars(self):
        return [self.x, self.y] + self.guard.vars()

    def run(self, eng):
        st = self.guard.status(eng)
        if st == FALSE:
            return
        if st == UNKNOWN:
            if eng.min(self.x) > eng.max(self.y) + self.const:
                self.guard.force_false(eng)
            return
        eng.set_max(self.x, eng.max(self.y) + self.const)
        eng.set_min(self.y, eng.min(self.x) - self.const)


class CondFix(Propagator):
    """guard => fix each var to its domain minimum (dominance pinning)."""

    def __init__(self, guard: Guard, xs):
        self.guard = guard
        self.xs = tuple(xs)

    def vars(self):
        return self.guard.vars()

    def run(self, eng):
        if self.guard.status(eng) == TRUE:
            for x in self.xs:
                if not eng.fixed(x):
                    eng.assign(x, eng.min(x))


class LiveUse(Propagator):
    """live <-> exists user operand p with active[op(p)] and temp[p] = t."""

    def __init__(self, live, users):
        self.live = live
        self.users = tuple(users)      # (active var, temp var, t value)

    def vars(self):
        vs = [self.live]
        for a, tv, _ in self.users:
            vs.append(a)
            vs.append(tv)
        return vs

    def run(self, eng):
        possible = []
        for a, tv, t in self.users:
            if eng.contains(a, 1) and eng.contains(tv, t):
                entailed = eng.fixed(a) and eng.fixed(tv)
                possible.append((a, tv, t, entailed))
        if any(e for *_, e in possible):
            eng.assign(self.live, 1)
        if not possible:
            eng.assign(self.live, 0)
            return
        if eng.fixed(self.live):
            if eng.val(self.live) == 0:
                for a, tv, t, _ in possible:
                    if eng.fixed(a) and eng.val(a) == 1:
                        eng.remove(tv, t)
                    elif eng.fixed(tv) and eng.val(tv) == t:
                        eng.assign(a, 0)
            elif len(possible) == 1:
                a, tv, t, _ = possible[0]
                eng.assign(a, 1)
                eng.assign(tv, t)


class CondMax(Propagator):
    """live => le equals the max candidate cycle among selected users."""

    def __init__(self, le, live, cands):
        self.le = le
        self.live = live
        self.cands = tuple(cands)      # (cycle var, active var, temp var, t)

    def vars(self):
        vs = [self.le, self.live]
        for c, a, tv, _ in self.cands:
            vs += [c, a, tv]
        return vs

    def run(self, eng):
        if not eng.contains(self.live, 1):
            return
        possible = []
        entailed = []
        for c, a, tv, t in self.cands:
            if eng.contains(a, 1) and eng.contains(tv, t):
                possible.append(c)
                if eng.fixed(a) and eng.fixed(tv):
                    entailed.append(c)
        if eng.fixed(self.live):
            if not possible:
                raise Wipeout()
            eng.set_max(self.le, max(eng.max(c) for c in possible))
            if entailed:
                eng.set_min(self.le, max(eng.min(c) for c in entailed))
            for c in entailed:
                eng.set_max(c, eng.max(self.le))
            if all(eng.max(c) < eng.min(self.le) for c in possible):
                raise Wipeout()


class LiveStart(Propagator):
    """live => ls == cycle of the defining operation."""

    def __init__(self, ls, live, cycle):
        self.ls, self.live, self.cycle = ls, live, cycle

    def vars(self):
        return [self.ls, self.live, self.cycle]

    def run(self, eng):
        if eng.fixed(self.live) and eng.val(self.live) == 1:
            lo = max(eng.min(self.ls), eng.min(self.cycle))
            hi = min(eng.max(self.ls), eng.max(self.cycle))
            if lo > hi:
                raise Wipeout()
            eng.set_min(self.ls, lo)
            eng.set_max(self.ls, hi)
            eng.set_min(self.cycle, lo)
            eng.set_max(self.cycle, hi)


class Cumulative(Propagator):
    """Renewable resource: active tasks' usage never exceeds capacity.

    Tasks carry per-instruction duration/usage/offset tables; filtering is
    time-table style over compulsory parts.
    """

    def __init__(self, tasks, cap):
        # task: (cycle var, ins var or None, durs, units, offs, active var or None)
        self.tasks = tuple(tasks)
        self.cap = cap

    def vars(self):
        vs = []
        for c, ins, _, _, _, a in self.tasks:
            vs.append(c)
            if ins is not None:
                vs.append(ins)
            if a is not None:
                vs.append(a)
        return vs

    def _bounds(self, eng, task):
        c, ins, durs, units, offs, a = task
        if ins is None:
            dmin, umin, omin, omax = durs[0], units[0], offs[0], offs[0]
        else:
            ivals = list(eng.values(ins))
            dmin = min(durs[i] for i in ivals)
            umin = min(units[i] for i in ivals)
            omin = min(offs[i] for i in ivals)
            omax = max(offs[i] for i in ivals)
        est = eng.min(c) + omin
        lst = eng.max(c) + omax
        return est, lst, dmin, umin

    def run(self, eng):
        profile: dict[int, int] = {}
        parts = []
        for task in self.tasks:
            a = task[5]
            if a is not None and not eng.contains(a, 1):
                continue
            est, lst, dmin, umin = self._bounds(eng, task)
            if umin <= 0 or dmin <= 0:
                continue
            guaranteed = a is None or (eng.fixed(a) and eng.val(a) == 1)
            if guaranteed and lst < est + dmin:
                for k in range(lst, est + dmin):
                    profile[k] = profile.get(k, 0) + umin
                parts.append((task, lst, est + dmin, umin))
            else:
                parts.append((task, 0, 0, umin))
        for k, total in profile.items():
            if total > self.cap:
                raise Wipeout()
        # push earliest starts over profile peaks
        for task, plo, phi, umin in parts:
            c, ins, durs, units, offs, a = task
            guaranteed = a is None or (eng.fixed(a) and eng.val(a) == 1)
            if not guaranteed:
                continue
            est, lst, dmin, umin = self._bounds(eng, task)
            s = est
            pushed = True
            while pushed and s <= lst:
                pushed = False
                for k in range(s, s + dmin):
                    load = profile.get(k, 0)
                    if plo <= k < phi:
                        load -= umin
                    if load + umin > self.cap:
                        s = k + 1
                        pushed = True
                        break
            if s > lst:
                raise Wipeout()
            omin = offs[0] if ins is None else min(offs[i] for i in eng.values(ins))
            eng.set_min(c, s - omin)


class CumulativeSE(Propagator):
    """Start/end form of cumulative for register-pressure relaxations."""

    def __init__(self, tasks, cap):
        self.tasks = tuple(tasks)      # (start var, end var, units, live var)
        self.cap = cap

    def vars(self):
        vs = []
        for s, e, _, l in self.tasks:
            vs += [s, e, l]
        return vs

    def run(self, eng):
        profile: dict[int, int] = {}
        for s, e, u, l in self.tasks:
            if not (eng.fixed(l) and eng.val(l) == 1):
                continue
            lo, hi = eng.max(s), eng.min(e)
            for k in range(lo, hi):
                profile[k] = profile.get(k, 0) + u
                if profile[k] > self.cap:
                    raise Wipeout()


class NoOverlap2D(Propagator):
    """Live rectangles (register extent x cycle range) must be disjoint."""

    def __init__(self, rects):
        # rect: (reg var, width, ls var, le var, live var)
        self.rects = tuple(rects)

    def vars(self):
        vs = []
        for r, _, s, e, l in self.rects:
            vs += [r, s, e, l]
        return vs

    def run(self, eng):
        rs = self.rects
        n = len(rs)
        for i in range(n):
            ri, wi, si, ei, li = rs[i]
            if not eng.contains(li, 1):
                continue
            for j in range(i + 1, n):
                rj, wj, sj, ej, lj = rs[j]
                if not eng.contains(lj, 1):
                    continue
                # time overlap is certain when both compulsory ranges intersect
                y_must = eng.max(si) < eng.min(ej) and eng.max(sj) < eng.min(ei)
                y_may = eng.min(si) < eng.max(ej) and eng.min(sj) < eng.max(ei)
                x_must = (eng.max(ri) + wi > eng.min(rj)
                          and eng.max(rj) + wj > eng.min(ri)
                          and eng.min(ri) + wi > eng.max(rj)
                          and eng.min(rj) + wj > eng.max(ri))
                x_may = (eng.max(ri) + wi > eng.min(rj)
                         and eng.max(rj) + wj > eng.min(ri))
                both_live = (eng.fixed(li) and eng.val(li) == 1
                             and eng.fixed(lj) and eng.val(lj) == 1)
                if not (y_may and x_may):
                    continue
                if y_must and x_must:
                    if both_live:
                        raise Wipeout()
                    if eng.fixed(li) and eng.val(li) == 1 and not eng.fixed(lj):
                        eng.assign(lj, 0)
                        continue
                    if eng.fixed(lj) and eng.val(lj) == 1 and not eng.fixed(li):
                        eng.assign(li, 0)
                        continue
                    continue
                if not both_live:
                    continue
                if y_must:
                    # registers must separate
                    if eng.fixed(ri):
                        a = eng.val(ri)
                        for v in range(a - wj + 1, a + wi):
                            eng.remove(rj, v)
                    if eng.fixed(rj):
                        a = eng.val(rj)
                        for v in range(a - wi + 1, a + wj):
                            eng.remove(ri, v)
                if x_must:
                    # cycles must separate: i before j or j before i
                    i_before = eng.min(ei) <= eng.max(sj)
                    j_before = eng.min(ej) <= eng.max(si)
                    if not i_before and not j_before:
                        raise Wipeout()
                    if not j_before:
                        eng.set_min(sj, eng.min(ei))
                        eng.set_max(ei, eng.max(sj))
                    elif not i_before:
                        eng.set_min(si, eng.min(ej))
                        eng.set_max(ej, eng.max(si))


class AllDiffVal(Propagator):
    """Pairwise value-based all-different."""

    def __init__(self, xs):
        self.xs = tuple(xs)

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        fixed = {}
        for x in self.xs:
            if eng.fixed(x):
                v = eng.val(x)
                if v in fixed and fixed[v] != x:
                    raise Wipeout()
                fixed[v] = x
        for x in self.xs:
            if not eng.fixed(x):
                for v, owner in fixed.items():
                    if owner != x:
                        eng.remove(x, v)


class Precede(Propagator):
    """Value u must be used at a lower index than value v ever is."""

    def __init__(self, xs, u, v):
        self.xs = tuple(xs)
        self.u, self.v = u, v

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        first_u = None
        for i, x in enumerate(self.xs):
            if eng.contains(x, self.u):
                first_u = i
                break
        # v cannot appear before (or at) the first position that could hold u
        limit = len(self.xs) if first_u is None else first_u + 1
        for i in range(limit):
            eng.remove(self.xs[i], self.v)
        if first_u is None:
            return
        # the earliest certain v needs a u somewhere before it
        for i, x in enumerate(self.xs):
            if eng.fixed(x) and eng.val(x) == self.v:
                spots = [j for j in range(i) if eng.contains(self.xs[j], self.u)]
                if not spots:
                    raise Wipeout()
                if len(spots) == 1:
                    eng.assign(self.xs[spots[0]], self.u)
                break


class OpAllDiff(Propagator):
    """Distinct temporaries read by one active operation get disjoint extents."""

    def __init__(self, active, operands, widths, regof):
        self.active = active
        self.operands = tuple(operands)    # temp vars
        self.widths = dict(widths)         # temp id -> width
        self.regof = dict(regof)           # temp id -> reg var

    def vars(self):
        vs = [self.active] + list(self.operands)
        vs += list(self.regof.values())
        return vs

    def run(self, eng):
        if not (eng.fixed(self.active) and eng.val(self.active) == 1):
            return
        chosen = []
        for tv in self.operands:
            if eng.fixed(tv):
                chosen.append(eng.val(tv))
        for i in range(len(chosen)):
            for j in range(i + 1, len(chosen)):
                a, b = chosen[i], chosen[j]
                if a == b:
                    continue
                ra, rb = self.regof[a], self.regof[b]
                wa, wb = self.widths[a], self.widths[b]
                if eng.fixed(ra):
                    v = eng.val(ra)
                    for k in range(v - wb + 1, v + wa):
                        eng.remove(rb, k)
                if eng.fixed(rb):
                    v = eng.val(rb)
                    for k in range(v - wa + 1, v + wb):
                        eng.remove(ra, k)


class SameRegIf(Propagator):
    """guard => reg[temp[p]] == reg[temp[q]] (congruences, two-address)."""

    def __init__(self, tp, tq, regof, guard: Guard | None = None):
        self.tp, self.tq = tp, tq
        self.regof = dict(regof)
        self.guard = guard or Guard()

    def vars(self):
        return [self.tp, self.tq] + list(self.regof.values()) + self.guard.vars()

    def run(self, eng):
        st = self.guard.status(eng)
        if st == FALSE:
            return
        if st == UNKNOWN:
            return
        if eng.fixed(self.tp) and eng.fixed(self.tq):
            ra = self.regof[eng.val(self.tp)]
            rb = self.regof[eng.val(self.tq)]
            lo = max(eng.min(ra), eng.min(rb))
            hi = min(eng.max(ra), eng.max(rb))
            if lo > hi:
                raise Wipeout()
            eng.set_min(ra, lo)
            eng.set_max(ra, hi)
            eng.set_min(rb, lo)
            eng.set_max(rb, hi)
            if eng.fixed(ra):
                eng.assign(rb, eng.val(ra))
            elif eng.fixed(rb):
                eng.assign(ra, eng.val(rb))
        elif eng.fixed(self.tp):
            self._prune_other(eng, self.tp, self.tq)
        elif eng.fixed(self.tq):
            self._prune_other(eng, self.tq, self.tp)

    def _prune_other(self, eng, fixed_side, open_side):
        ra = self.regof[eng.val(fixed_side)]
        avals = set(eng.values(ra))
        for t in list(eng.values(open_side)):
            rb = self.regof[t]
            if not any(v in avals for v in eng.values(rb)):
                eng.remove(open_side, t)


class NeqRegIf(Propagator):
    """guard => extents of reg[src] and reg[dst] are disjoint (copy dominance)."""

    def __init__(self, tsrc_var, tdst, regof, widths, guard: Guard):
        self.tsrc_var = tsrc_var
        self.tdst = tdst
        self.regof = dict(regof)
        self.widths = dict(widths)
        self.guard = guard

    def vars(self):
        return [self.tsrc_var] + list(self.regof.values()) + self.guard.vars()

    def run(self, eng):
        if self.guard.status(eng) != TRUE or not eng.fixed(self.tsrc_var):
            return
        src = eng.val(self.tsrc_var)
        ra, rb = self.regof[src], self.regof[self.tdst]
        wa, wb = self.widths[src], self.widths[self.tdst]
        if eng.fixed(ra):
            v = eng.val(ra)
            for k in range(v - wb + 1, v + wa):
                eng.remove(rb, k)
        if eng.fixed(rb):
            v = eng.val(rb)
            for k in range(v - wa + 1, v + wb):
                eng.remove(ra, k)


class RegClassOf(Propagator):
    """active => reg[temp[p]] within the class table of the chosen instruction."""

    def __init__(self, active, ins, tempvar, rows, regof):
        self.active = active
        self.ins = ins                  # var or None (single instruction)
        self.tempvar = tempvar
        self.rows = dict(rows)          # (t, ins idx) -> frozenset of atoms (or None)
        self.regof = dict(regof)

    def vars(self):
        vs = [self.tempvar] + list(self.regof.values())
        if self.active is not None:
            vs.append(self.active)
        if self.ins is not None:
            vs.append(self.ins)
        return vs

    def _allowed(self, eng, t):
        ivals = list(eng.values(self.ins)) if self.ins is not None else [0]
        out = set()
        for i in ivals:
            atoms = self.rows.get((t, i))
            if atoms is None:
                return None             # some instruction leaves it unconstrained
            out |= atoms
        return out

    def run(self, eng):
        if self.active is not None and not eng.contains(self.active, 1):
            return
        entailed = self.active is None or (eng.fixed(self.active) and eng.val(self.active) == 1)
        if not entailed:
            return
        for t in list(eng.values(self.tempvar)):
            allowed = self._allowed(eng, t)
            if allowed is None:
                continue
            if not any(v in allowed for v in eng.values(self.regof[t])):
                eng.remove(self.tempvar, t)
        if eng.fixed(self.tempvar):
            t = eng.val(self.tempvar)
            allowed = self._allowed(eng, t)
            if allowed is not None:
                eng.keep(self.regof[t], allowed)
            if self.ins is not None:
                rvals = set(eng.values(self.regof[t]))
                keep = []
                for i in eng.values(self.ins):
                    atoms = self.rows.get((t, i))
                    if atoms is None or any(v in atoms for v in rvals):
                        keep.append(i)
                eng.keep(self.ins, keep)


class PreassignReg(Propagator):
    """reg[temp[p]] = fixed atom."""

    def __init__(self, tempvar, atom, regof):
        self.tempvar = tempvar
        self.atom = atom
        self.regof = dict(regof)

    def vars(self):
        return [self.tempvar] + list(self.regof.values())

    def run(self, eng):
        for t in list(eng.values(self.tempvar)):
            if not eng.contains(self.regof[t], self.atom):
                eng.remove(self.tempvar, t)
        if eng.fixed(self.tempvar):
            eng.assign(self.regof[eng.val(self.tempvar)], self.atom)


class FrameRequired(Propagator):
    """frame <= exists active operation whose instruction requires a frame."""

    def __init__(self, frame, triggers):
        self.frame = frame
        self.triggers = tuple(triggers)   # (active var, ins var or None, idx set)

    def vars(self):
        vs = [self.frame]
        for a, ins, _ in self.triggers:
            vs.append(a)
            if ins is not None:
                vs.append(ins)
        return vs

    def run(self, eng):
        for a, ins, idxs in self.triggers:
            if not (eng.fixed(a) and eng.val(a) == 1):
                continue
            if ins is None or all(i in idxs for i in eng.values(ins)):
                eng.assign(self.frame, 1)
                return
        if eng.fixed(self.frame) and eng.val(self.frame) == 0:
            # no requiring instruction may be selected on an active operation
            for a, ins, idxs in self.triggers:
                if eng.fixed(a) and eng.val(a) == 1 and ins is not None:
                    eng.keep(ins, [i for i in eng.values(ins) if i not in idxs])
                elif ins is None and eng.contains(a, 1):
                    eng.assign(a, 0)


class SizeTerm(Propagator):
    """s = size[ins] when active else 0."""

    def __init__(self, s, active, ins, sizes):
        self.s, self.active, self.ins = s, active, ins
        self.sizes = tuple(sizes)

    def vars(self):
        vs = [self.s, self.active]
        if self.ins is not None:
            vs.append(self.ins)
        return vs

    def _size_set(self, eng):
        if self.ins is None:
            return {self.sizes[0]}
        return {self.sizes[i] for i in eng.values(self.ins)}

    def run(self, eng):
        if eng.fixed(self.active):
            if eng.val(self.active) == 0:
                eng.assign(self.s, 0)
            else:
                sizes = self._size_set(eng)
                eng.keep(self.s, sizes)
                if self.ins is not None:
                    eng.keep(self.ins, [i for i in eng.values(self.ins)
                                        if eng.contains(self.s, self.sizes[i])])
        else:
            eng.keep(self.s, self._size_set(eng) | {0})
            if not eng.contains(self.s, 0):
                eng.assign(self.active, 1)


class Table(Propagator):
    """Positive table constraint over small tuple sets."""

    def __init__(self, xs, tuples):
        self.xs = tuple(xs)
        self.tuples = [t for t in tuples]

    def vars(self):
        return list(self.xs)

    def run(self, eng):
        alive = [t for t in self.tuples
                 if all(eng.contains(x, v) for x, v in zip(self.xs, t))]
        if not alive:
            raise Wipeout()
        for i, x in enumerate(self.xs):
            eng.keep(x, {t[i] for t in alive})


class BoundLe(Propagator):
    """x <= cell.value, where the bound cell tightens during search."""

    def __init__(self, x, cell):
        self.x, self.cell = x, cell

    def vars(self):
        return [self.x]

    def run(self, eng):
        if self.cell.value is not None:
            eng.set_max(self.x, self.cell.value)
