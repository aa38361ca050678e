"""Finite integer domains, trailing store, and the propagation engine.

Domains are sorted interval sets over machine ints.  Propagators register on
variables and are re-run to a mutual fixpoint; failure raises Wipeout, which
the engine converts into a backtrack signal.
"""

from __future__ import annotations


class Wipeout(Exception):
    """A domain became empty."""


Dom = tuple  # tuple of (lo, hi) pairs, sorted, disjoint, non-adjacent


def dom_from_values(values) -> Dom:
    vals = sorted(set(values))
    if not vals:
        raise ValueError("empty domain")
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


def dom_range(lo: int, hi: int) -> Dom:
    if lo > hi:
        raise ValueError("empty range")
    return ((lo, hi),)


def dom_min(d: Dom) -> int:
    return d[0][0]


def dom_max(d: Dom) -> int:
    return d[-1][1]


def dom_size(d: Dom) -> int:
    return sum(hi - lo + 1 for lo, hi in d)


def dom_contains(d: Dom, v: int) -> bool:
    for lo, hi in d:
        if lo <= v <= hi:
            return True
        if v < lo:
            return False
    return False


def dom_values(d: Dom):
    for lo, hi in d:
        yield from range(lo, hi + 1)


def dom_remove_below(d: Dom, b: int) -> Dom:
    if b <= d[0][0]:
        return d
    runs = [(max(lo, b), hi) for lo, hi in d if hi >= b]
    return tuple(runs)


def dom_remove_above(d: Dom, b: int) -> Dom:
    if b >= d[-1][1]:
        return d
    runs = [(lo, min(hi, b)) for lo, hi in d if lo <= b]
    return tuple(runs)


def dom_remove_value(d: Dom, v: int) -> Dom:
    runs = []
    for lo, hi in d:
        if lo <= v <= hi:
            if lo <= v - 1:
                runs.append((lo, v - 1))
            if v + 1 <= hi:
                runs.append((v + 1, hi))
        else:
            runs.append((lo, hi))
    return tuple(runs)


def dom_intersect_values(d: Dom, allowed) -> Dom:
    vals = [v for v in dom_values(d) if v in allowed]
    if not vals:
        return ()
    return dom_from_values(vals)


class Engine:
    """Trailing domain store plus a FIFO propagation queue."""

    def __init__(self):
        self.doms: list[Dom] = []
        self.trail: list[tuple[int, Dom]] = []
        self.props: list = []
        self.watchers: list[list[int]] = []   # var -> propagator indices
        self.queue: list[int] = []
        self.queued: list[bool] = []
        self.propagations = 0

    def new_var(self, dom: Dom) -> int:
        self.doms.append(dom)
        self.watchers.append([])
        return len(self.doms) - 1

    def add_propagator(self, prop) -> int:
        idx = len(self.props)
        self.props.append(prop)
        self.queued.append(False)
        for v in prop.vars():
            self.watchers[v].append(idx)
        self.queue.append(idx)
        self.queued[idx] = True
        return idx

    # -- domain access --

    def dom(self, x: int) -> Dom:
        return self.doms[x]

    def min(self, x: int) -> int:
        return self.doms[x][0][0]

    def max(self, x: int) -> int:
        return self.doms[x][-1][1]

    def fixed(self, x: int) -> bool:
        d = self.doms[x]
        return len(d) == 1 and d[0][0] == d[0][1]

    def val(self, x: int) -> int:
        return self.doms[x][0][0]

    def size(self, x: int) -> int:
        return dom_size(self.doms[x])

    def contains(self, x: int, v: int) -> bool:
        return dom_contains(self.doms[x], v)

    def values(self, x: int):
        return dom_values(self.doms[x])

    # -- domain updates (trailled) --

    def _update(self, x: int, nd: Dom):
        if not nd:
            raise Wipeout()
        old = self.doms[x]
        if nd == old:
            return
        self.trail.append((x, old))
        self.doms[x] = nd
        for pidx in self.watchers[x]:
            if not self.queued[pidx]:
                self.queued[pidx] = True
                self.queue.append(pidx)

    def set_min(self, x: int, v: int):
        if v > self.doms[x][0][0]:
            self._update(x, dom_remove_below(self.doms[x], v))

    def set_max(self, x: int, v: int):
        if v < self.doms[x][-1][1]:
            self._update(x, dom_remove_above(self.doms[x], v))

    def remove(self, x: int, v: int):
        if dom_contains(self.doms[x], v):
            self._update(x, dom_remove_value(self.doms[x], v))

    def keep(self, x: int, allowed):
        self._update(x, dom_intersect_values(self.doms[x], allowed))

    def assign(self, x: int, v: int):
        if not dom_contains(self.doms[x], v):
            raise Wipeout()
        self._update(x, ((v, v),))

    # -- search support --

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int):
        while len(self.trail) > mark:
            x, old = self.trail.pop()
            self.doms[x] = old

    def wake_all(self):
        for idx in range(len(self.props)):
            if not self.queued[idx]:
                self.queued[idx] = True
                self.queue.append(idx)

    def propagate(self) -> bool:
        """Run queued propagators to fixpoint; False on failure."""
        try:
            while self.queue:
                idx = self.queue.pop()
                self.queued[idx] = False
                self.propagations += 1
                self.props[idx].run(self)
            return True
        except Wipeout:
            self.queue.clear()
            for i in range(len(self.queued)):
                self.queued[i] = False
            return False

    def snapshot(self) -> dict[int, int]:
        return {x: d[0][0] for x, d in enumerate(self.doms)
                if len(d) == 1 and d[0][0] == d[0][1]}
