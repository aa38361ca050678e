"""Program and processor data model, textual formats, and validation.

Functions are block-structured, SSA (each temporary textually defined once),
with virtual entry/exit operations delimiting every block.  Values that merge
across control flow are expressed by temporary-level congruences; after
normalization the congruences live on boundary operands instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

USE = "use"
DEF = "def"

NATURAL = "natural"
COPY = "copy"
ENTRY = "entry"
EXIT = "exit"

B_NONE = "none"
B_ENTRY = "entry"
B_EXIT = "exit"

ENTRY_INSTR = "in"
EXIT_INSTR = "out"

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.':]*")


class ParseError(Exception):
    """Syntax or reference error in a textual function/processor."""

    def __init__(self, msg: str, line: int, col: int = 0):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Temporary:
    id: int
    name: str
    width: int = 1
    remat: bool = False
    definer: int = -1               # operand id, filled at finalize
    users: tuple[int, ...] = ()     # operand ids, filled at finalize


@dataclass(frozen=True)
class Operand:
    id: int
    operation: int
    direction: str                  # USE or DEF
    temps: tuple[int, ...]          # ordered alternatives, original first
    preassign: str | None = None    # register name
    boundary: str = B_NONE


@dataclass(frozen=True)
class Operation:
    id: int
    block: int
    kind: str                       # NATURAL, COPY, ENTRY, EXIT
    instructions: tuple[str, ...]
    uses: tuple[int, ...]           # operand ids
    defs: tuple[int, ...]
    addr_offset: int | None = None  # byte offset for pairable memory ops


@dataclass(frozen=True)
class Block:
    id: int
    name: str
    frequency: Fraction
    depth: int = 0
    succs: tuple[int, ...] = ()
    operations: tuple[int, ...] = ()


@dataclass(frozen=True)
class Function:
    name: str
    blocks: tuple[int, ...]
    blocktab: dict[int, Block]
    temps: dict[int, Temporary]
    operands: dict[int, Operand]
    operations: dict[int, Operation]
    temp_congruences: tuple[tuple[int, int], ...] = ()
    congruences: tuple[tuple[int, int], ...] = ()   # operand pairs, post-lift

    def block_ops(self, bid: int) -> list[Operation]:
        return [self.operations[o] for o in self.blocktab[bid].operations]

    def op_operands(self, op: Operation) -> list[Operand]:
        return [self.operands[p] for p in op.defs + op.uses]

    def temp_name(self, tid: int) -> str:
        return self.temps[tid].name

    def entry_op(self, bid: int) -> Operation:
        return self.operations[self.blocktab[bid].operations[0]]

    def exit_op(self, bid: int) -> Operation:
        return self.operations[self.blocktab[bid].operations[-1]]

    def is_normalized(self) -> bool:
        """A function counts as normalized once copies or lifted congruences exist."""
        if self.congruences:
            return True
        return any(o.kind == COPY for o in self.operations.values())

    def operand_order(self) -> dict[int, int]:
        """Reading-order index of each operand (defs before uses per operation)."""
        order: dict[int, int] = {}
        for bid in self.blocks:
            for op in self.block_ops(bid):
                for pid in op.defs + op.uses:
                    order[pid] = len(order)
        return order

    def canonical(self):
        """Identifier-free structural form, used for equality across round-trips."""
        order = self.operand_order()
        def ctemp(tid): return self.temps[tid].name
        def coperand(pid):
            p = self.operands[pid]
            return (p.direction, tuple(ctemp(t) for t in p.temps), p.preassign, p.boundary)
        blocks = []
        for bid in self.blocks:
            b = self.blocktab[bid]
            ops = []
            for op in self.block_ops(bid):
                ops.append((op.kind, op.instructions,
                            tuple(coperand(p) for p in op.defs),
                            tuple(coperand(p) for p in op.uses),
                            op.addr_offset))
            blocks.append((b.name, b.frequency, b.depth,
                           tuple(self.blocktab[s].name for s in b.succs), tuple(ops)))
        tcong = sorted((ctemp(a), ctemp(b)) for a, b in self.temp_congruences)
        ocong = sorted((order[a], order[b]) for a, b in self.congruences)
        widths = tuple(sorted((t.name, t.width, t.remat) for t in self.temps.values()))
        return (self.name, tuple(blocks), tuple(tcong), tuple(ocong), widths)

    def structurally_equal(self, other: Function) -> bool:
        return self.canonical() == other.canonical()


class FunctionBuilder:
    """Mutable assembly area for Functions; transforms build fresh ones here."""

    def __init__(self, name: str):
        self.name = name
        self.blocks: list[int] = []
        self.blocktab: dict[int, Block] = {}
        self.temps: dict[int, Temporary] = {}
        self.operands: dict[int, Operand] = {}
        self.operations: dict[int, Operation] = {}
        self.block_ops: dict[int, list[int]] = {}
        self.temp_congruences: list[tuple[int, int]] = []
        self.congruences: list[tuple[int, int]] = []
        self._temp_by_name: dict[str, int] = {}

    def add_block(self, name, frequency, depth=0) -> int:
        bid = len(self.blocktab)
        self.blocktab[bid] = Block(bid, name, frequency, depth)
        self.blocks.append(bid)
        self.block_ops[bid] = []
        return bid

    def set_succs(self, bid: int, succs: tuple[int, ...]):
        self.blocktab[bid] = replace(self.blocktab[bid], succs=succs)

    def add_temp(self, name, width=1, remat=False) -> int:
        if name in self._temp_by_name:
            raise ValueError(f"duplicate temporary {name}")
        tid = len(self.temps)
        self.temps[tid] = Temporary(tid, name, width, remat)
        self._temp_by_name[name] = tid
        return tid

    def temp_id(self, name: str) -> int | None:
        return self._temp_by_name.get(name)

    def add_operand(self, operation, direction, temps, preassign=None, boundary=B_NONE) -> int:
        pid = len(self.operands)
        self.operands[pid] = Operand(pid, operation, direction, tuple(temps), preassign, boundary)
        return pid

    def new_op_id(self) -> int:
        oid = len(self.operations)
        self.operations[oid] = Operation(oid, -1, NATURAL, (), (), ())
        return oid

    def set_op(self, oid, block, kind, instructions, uses, defs, addr_offset=None):
        self.operations[oid] = Operation(oid, block, kind, tuple(instructions),
                                         tuple(uses), tuple(defs), addr_offset)

    def insert_op(self, bid: int, pos: int, oid: int):
        self.block_ops[bid].insert(pos, oid)

    def append_op(self, bid: int, oid: int):
        self.block_ops[bid].append(oid)

    def rewire(self, pid: int, temps: tuple[int, ...]):
        self.operands[pid] = replace(self.operands[pid], temps=temps)

    def finalize(self) -> Function:
        definer: dict[int, int] = {}
        users: dict[int, list[int]] = {t: [] for t in self.temps}
        for bid in self.blocks:
            for oid in self.block_ops[bid]:
                op = self.operations[oid]
                for pid in op.defs:
                    p = self.operands[pid]
                    for t in p.temps:
                        if t in definer:
                            raise ValueError(f"temporary {self.temps[t].name} defined twice")
                        definer[t] = pid
                for pid in op.uses:
                    for t in self.operands[pid].temps:
                        users[t].append(pid)
        temps = {t: replace(tmp, definer=definer.get(t, -1), users=tuple(users[t]))
                 for t, tmp in self.temps.items()}
        blocktab = {bid: replace(b, operations=tuple(self.block_ops[bid]))
                    for bid, b in self.blocktab.items()}
        return Function(self.name, tuple(self.blocks), blocktab, temps,
                        dict(self.operands), dict(self.operations),
                        tuple(self.temp_congruences), tuple(self.congruences))

    @classmethod
    def from_function(cls, fn: Function) -> FunctionBuilder:
        fb = cls(fn.name)
        for bid in fn.blocks:
            b = fn.blocktab[bid]
            nb = fb.add_block(b.name, b.frequency, b.depth)
            assert nb == bid
            fb.block_ops[bid] = list(b.operations)
        for bid in fn.blocks:
            fb.set_succs(bid, fn.blocktab[bid].succs)
        for tid in sorted(fn.temps):
            t = fn.temps[tid]
            nid = fb.add_temp(t.name, t.width, t.remat)
            assert nid == tid
        for pid in sorted(fn.operands):
            p = fn.operands[pid]
            np_ = fb.add_operand(p.operation, p.direction, p.temps, p.preassign, p.boundary)
            assert np_ == pid
        for oid in sorted(fn.operations):
            o = fn.operations[oid]
            fb.operations[oid] = o
        fb.temp_congruences = list(fn.temp_congruences)
        fb.congruences = list(fn.congruences)
        return fb


# --- processor description ---------------------------------------------------

@dataclass(frozen=True)
class Resource:
    name: str
    capacity: int


@dataclass(frozen=True)
class Usage:
    resource: str
    units: int
    duration: int
    offset: int = 0


@dataclass(frozen=True)
class Instruction:
    name: str
    virtual: bool = False
    latency: int = 1
    size: int = 0
    usages: tuple[Usage, ...] = ()
    def_classes: tuple[str, ...] = ()
    use_classes: tuple[str, ...] = ()
    requires_frame: bool = False
    manages_frame: bool = False
    forwarded: tuple[int, ...] = ()          # use-operand positions
    two_address: tuple[tuple[int, int], ...] = ()  # (def pos, use pos)

    def class_for(self, direction: str, pos: int) -> str | None:
        classes = self.def_classes if direction == DEF else self.use_classes
        if pos < len(classes):
            return classes[pos]
        return None                          # unconstrained position


@dataclass(frozen=True)
class RegisterFile:
    atoms: tuple[str, ...]                    # processor atoms, in array order
    mem_prefix: str = "M"
    remat_prefix: str = "RM"
    named: dict[str, tuple[int, int]] = field(default_factory=dict)  # name -> (leftmost, width)
    classes: dict[str, tuple[str, ...] | str] = field(default_factory=dict)
    # class value: tuple of register names, or the literal space name "mem"/"remat"


@dataclass(frozen=True)
class CallConv:
    saved: tuple[str, ...] = ()
    frame_setup: tuple[str, ...] = ()
    frame_teardown: tuple[str, ...] = ()


@dataclass(frozen=True)
class ProcessorDescription:
    name: str
    regfile: RegisterFile
    resources: dict[str, Resource]
    instructions: dict[str, Instruction]
    copies: dict[str, tuple[str, ...]]        # purpose -> instruction names
    pairs: dict[str, str]                     # single -> double instruction
    callconv: CallConv
    issue_width: int
    issue_resource: str

    def instr(self, name: str) -> Instruction:
        return self.instructions[name]

    def max_latency(self) -> int:
        return max((i.latency for i in self.instructions.values()), default=1)


def builtin_instructions() -> dict[str, Instruction]:
    """Virtual block delimiters shared by all processors.

    The entry instruction carries latency one so that live-in temporaries
    occupy a non-empty cycle range in their block.
    """
    return {
        ENTRY_INSTR: Instruction(ENTRY_INSTR, virtual=True, latency=1, size=0),
        EXIT_INSTR: Instruction(EXIT_INSTR, virtual=True, latency=0, size=0),
    }


# --- function parsing ---------------------------------------------------------

_OPERAND_RE = re.compile(
    r"(?P<names>[A-Za-z_][A-Za-z0-9_.']*(\|[A-Za-z_][A-Za-z0-9_.']*)*)"
    r"(:(?P<width>\d+))?(?P<remat>!)?"
    r"(\s*@pre\((?P<pre>[A-Za-z_][A-Za-z0-9_.:']*)\))?$")


def _split_commas(text: str) -> list[str]:
    parts = [t.strip() for t in text.split(",")]
    return [p for p in parts if p]


class _FunctionParser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.fb: FunctionBuilder | None = None
        self.block_names: dict[str, int] = {}
        self.pending_succs: list[tuple[int, list[str], int]] = []
        self.operand_seq: list[int] = []   # reading order -> operand id
        self.cur_block: int | None = None
        self.saw_entry = False
        self.saw_exit = False
        self.in_congruences = False

    def fail(self, msg: str, lineno: int, col: int = 0):
        raise ParseError(msg, lineno, col)

    def parse(self) -> Function:
        for idx, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if self.in_congruences:
                self._congruence_line(line, idx)
            elif line.startswith("function "):
                self._function_line(line, idx)
            elif line.startswith("block"):
                self._block_line(line, idx)
            elif line == "congruences:":
                self._close_block(idx)
                self.in_congruences = True
            else:
                self._operation_line(line, idx)
        if self.fb is None:
            raise ParseError("missing 'function' header", 1)
        if not self.in_congruences:
            self._close_block(len(self.lines) + 1)
        for bid, names, lineno in self.pending_succs:
            succs = []
            for n in names:
                if n not in self.block_names:
                    self.fail(f"unknown successor block {n}", lineno)
                succs.append(self.block_names[n])
            self.fb.set_succs(bid, tuple(succs))
        try:
            return self.fb.finalize()
        except ValueError as e:
            raise ParseError(str(e), len(self.lines)) from None

    def _function_line(self, line, lineno):
        if self.fb is not None:
            self.fail("duplicate function header", lineno)
        parts = line.split()
        if len(parts) != 2:
            self.fail("expected: function <name>", lineno)
        self.fb = FunctionBuilder(parts[1])

    def _block_line(self, line, lineno):
        if self.fb is None:
            self.fail("block before function header", lineno)
        self._close_block(lineno)
        toks = line.split()
        if len(toks) < 2:
            self.fail("expected: block <name> ...", lineno)
        name = toks[1]
        if name in self.block_names:
            self.fail(f"duplicate block {name}", lineno)
        freq = None
        depth = 0
        succ_names: list[str] = []
        i = 2
        while i < len(toks):
            if toks[i] == "freq" and i + 1 < len(toks):
                try:
                    freq = Fraction(toks[i + 1])
                except ValueError:
                    self.fail(f"bad frequency {toks[i + 1]}", lineno)
                i += 2
            elif toks[i] == "depth" and i + 1 < len(toks):
                depth = int(toks[i + 1])
                i += 2
            elif toks[i] == "succ":
                succ_names = toks[i + 1:]
                break
            else:
                self.fail(f"unexpected token {toks[i]}", lineno)
        if freq is None:
            freq = Fraction(10) ** depth
        bid = self.fb.add_block(name, freq, depth)
        self.block_names[name] = bid
        self.pending_succs.append((bid, succ_names, lineno))
        self.cur_block = bid
        self.saw_entry = False
        self.saw_exit = False

    def _close_block(self, lineno):
        if self.cur_block is not None and not self.saw_exit:
            self.fail(f"block {self.fb.blocktab[self.cur_block].name} lacks exit", lineno)
        self.cur_block = None

    def _parse_operand(self, text, lineno, direction, opid):
        m = _OPERAND_RE.match(text.strip())
        if not m:
            self.fail(f"bad operand {text!r}", lineno)
        names = m.group("names").split("|")
        width = int(m.group("width")) if m.group("width") else 1
        remat = bool(m.group("remat"))
        temps = []
        for n in names:
            tid = self.fb.temp_id(n)
            if tid is None:
                if direction == DEF and n is names[0]:
                    tid = self.fb.add_temp(n, width, remat)
                else:
                    self.fail(f"use of undefined temporary {n}", lineno)
            temps.append(tid)
        if direction == DEF and len(temps) != 1:
            self.fail("def operands take a single temporary", lineno)
        pid = self.fb.add_operand(opid, direction, tuple(temps), m.group("pre"))
        self.operand_seq.append(pid)
        return pid

    def _operation_line(self, line, lineno):
        if self.cur_block is None:
            self.fail("operation outside block", lineno)
        if line.startswith("entry") or line.startswith("exit"):
            kind = ENTRY if line.startswith("entry") else EXIT
            m = re.match(r"(entry|exit)\s*\[(.*)\]$", line)
            if not m:
                self.fail(f"expected: {kind} [...]", lineno)
            if kind == ENTRY and (self.saw_entry or self.fb.block_ops[self.cur_block]):
                self.fail("entry must be the first operation", lineno)
            if kind == EXIT and self.saw_exit:
                self.fail("duplicate exit", lineno)
            oid = self.fb.new_op_id()
            pids = [self._parse_operand(t, lineno, DEF if kind == ENTRY else USE, oid)
                    for t in _split_commas(m.group(2))]
            instr = ENTRY_INSTR if kind == ENTRY else EXIT_INSTR
            if kind == ENTRY:
                self.fb.set_op(oid, self.cur_block, kind, (instr,), (), tuple(pids))
                self.saw_entry = True
            else:
                self.fb.set_op(oid, self.cur_block, kind, (instr,), tuple(pids), ())
                self.saw_exit = True
            self.fb.append_op(self.cur_block, oid)
            return
        if not self.saw_entry:
            self.fail("block must start with entry", lineno)
        if self.saw_exit:
            self.fail("operation after exit", lineno)
        m = re.match(r"(copy\s+)?\[(?P<defs>.*?)\]\s*=\s*\{(?P<ins>.*?)\}\s*"
                     r"\[(?P<uses>.*?)\]\s*(@off\((?P<off>-?\d+)\))?$", line)
        if not m:
            self.fail(f"bad operation syntax: {line!r}", lineno)
        instrs = [t.strip() for t in m.group("ins").split(",") if t.strip()]
        if not instrs:
            self.fail("operation needs at least one instruction", lineno)
        oid = self.fb.new_op_id()
        defs = [self._parse_operand(t, lineno, DEF, oid) for t in _split_commas(m.group("defs"))]
        uses = [self._parse_operand(t, lineno, USE, oid) for t in _split_commas(m.group("uses"))]
        kind = COPY if m.group(1) else NATURAL
        off = int(m.group("off")) if m.group("off") else None
        self.fb.set_op(oid, self.cur_block, kind, tuple(instrs), tuple(uses), tuple(defs), off)
        self.fb.append_op(self.cur_block, oid)

    def _congruence_line(self, line, lineno):
        m = re.match(r"(\S+)\s*~\s*(\S+)$", line)
        if not m:
            self.fail(f"bad congruence {line!r}", lineno)
        a, b = m.group(1), m.group(2)
        if re.fullmatch(r"p\d+", a) and re.fullmatch(r"p\d+", b):
            ia, ib = int(a[1:]), int(b[1:])
            if ia >= len(self.operand_seq) or ib >= len(self.operand_seq):
                self.fail(f"dangling operand reference in {line!r}", lineno)
            self.fb.congruences.append((self.operand_seq[ia], self.operand_seq[ib]))
        else:
            ta, tb = self.fb.temp_id(a), self.fb.temp_id(b)
            if ta is None or tb is None:
                self.fail(f"dangling temporary in congruence {line!r}", lineno)
            self.fb.temp_congruences.append((ta, tb))


def parse_function(text: str) -> Function:
    """Parse the textual function format into a validated Function graph."""
    return _FunctionParser(text).parse()


def serialize_function(fn: Function) -> str:
    """Canonical textual form; parse(serialize(fn)) is structurally equal to fn."""
    order = fn.operand_order()
    out = [f"function {fn.name}"]

    def operand_text(pid: int) -> str:
        p = fn.operands[pid]
        t0 = fn.temps[p.temps[0]]
        s = "|".join(fn.temps[t].name for t in p.temps)
        if p.direction == DEF and t0.width != 1:
            s += f":{t0.width}"
        if p.direction == DEF and t0.remat:
            s += "!"
        if p.preassign:
            s += f" @pre({p.preassign})"
        return s

    for bid in fn.blocks:
        b = fn.blocktab[bid]
        line = f"block {b.name} freq {b.frequency}"
        if b.depth:
            line += f" depth {b.depth}"
        if b.succs:
            line += " succ " + " ".join(fn.blocktab[s].name for s in b.succs)
        out.append(line)
        for op in fn.block_ops(bid):
            if op.kind == ENTRY:
                out.append("  entry [" + ", ".join(operand_text(p) for p in op.defs) + "]")
            elif op.kind == EXIT:
                out.append("  exit [" + ", ".join(operand_text(p) for p in op.uses) + "]")
            else:
                prefix = "copy " if op.kind == COPY else ""
                text = (f"  {prefix}[" + ", ".join(operand_text(p) for p in op.defs)
                        + "] = {" + ", ".join(op.instructions) + "} ["
                        + ", ".join(operand_text(p) for p in op.uses) + "]")
                if op.addr_offset is not None:
                    text += f" @off({op.addr_offset})"
                out.append(text)
    if fn.temp_congruences or fn.congruences:
        out.append("congruences:")
        for a, b in sorted((fn.temp_name(a), fn.temp_name(b)) for a, b in fn.temp_congruences):
            out.append(f"  {a} ~ {b}")
        for a, b in sorted((order[a], order[b]) for a, b in fn.congruences):
            out.append(f"  p{a} ~ p{b}")
    return "\n".join(out) + "\n"


# --- processor parsing --------------------------------------------------------

def parse_processor(text: str) -> ProcessorDescription:
    """Parse the sectioned processor format."""
    name = None
    atoms: list[str] = []
    named: dict[str, tuple[int, int]] = {}
    classes: dict[str, tuple[str, ...] | str] = {}
    resources: dict[str, Resource] = {}
    instructions: dict[str, Instruction] = dict(builtin_instructions())
    copies: dict[str, tuple[str, ...]] = {}
    pairs: dict[str, str] = {}
    saved: tuple[str, ...] = ()
    setup: tuple[str, ...] = ()
    teardown: tuple[str, ...] = ()
    mem_prefix, remat_prefix = "M", "RM"
    issue_width, issue_resource = 1, "slots"

    for idx, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0]
        try:
            if head == "processor":
                name = toks[1]
            elif head == "issuewidth":
                issue_width = int(toks[1])
                if len(toks) > 2:
                    issue_resource = toks[2]
                if issue_width < 1:
                    raise ParseError("issue width must be positive", idx)
            elif head == "atoms":
                atoms.extend(toks[1:])
            elif head == "wide":
                # wide <name> = <leftmost atom> <width>
                if len(toks) != 5 or toks[2] != "=":
                    raise ParseError("expected: wide <name> = <atom> <width>", idx)
                if toks[3] not in atoms:
                    raise ParseError(f"unknown atom {toks[3]}", idx)
                named[toks[1]] = (atoms.index(toks[3]), int(toks[4]))
            elif head == "space":
                if toks[1] == "mem":
                    mem_prefix = toks[2]
                elif toks[1] == "remat":
                    remat_prefix = toks[2]
                else:
                    raise ParseError(f"unknown space {toks[1]}", idx)
            elif head == "class":
                if toks[2] != "=":
                    raise ParseError("expected: class <name> = ...", idx)
                if toks[3] == "space":
                    if toks[4] not in ("mem", "remat"):
                        raise ParseError(f"unknown space {toks[4]}", idx)
                    classes[toks[1]] = toks[4]
                else:
                    classes[toks[1]] = tuple(toks[3:])
            elif head == "resource":
                cap = int(toks[2])
                if cap < 1:
                    raise ParseError(f"resource {toks[1]} has zero capacity", idx)
                resources[toks[1]] = Resource(toks[1], cap)
            elif head == "instruction":
                ins = _parse_instruction(toks[1:], idx)
                instructions[ins.name] = ins
            elif head == "copy":
                copies[toks[1]] = tuple(toks[2:])
            elif head == "pair":
                pairs[toks[1]] = toks[2]
            elif head == "callconv":
                if toks[1] == "saved":
                    saved = tuple(toks[2:])
                elif toks[1] == "setup":
                    setup = tuple(toks[2:])
                elif toks[1] == "teardown":
                    teardown = tuple(toks[2:])
                else:
                    raise ParseError(f"unknown callconv entry {toks[1]}", idx)
            else:
                raise ParseError(f"unknown section {head}", idx)
        except (IndexError, ValueError) as e:
            raise ParseError(f"malformed line: {e}", idx) from None
    if name is None:
        raise ParseError("missing 'processor' header", 1)

    for i, a in enumerate(atoms):
        named.setdefault(a, (i, 1))
    if issue_resource not in resources:
        resources[issue_resource] = Resource(issue_resource, issue_width)
    elif resources[issue_resource].capacity != issue_width:
        raise ParseError(f"resource {issue_resource} capacity differs from issue width", 1)
    # every real instruction occupies one issue slot for one cycle
    for iname, ins in list(instructions.items()):
        if not ins.virtual and not any(u.resource == issue_resource for u in ins.usages):
            instructions[iname] = replace(
                ins, usages=ins.usages + (Usage(issue_resource, 1, 1),))

    regfile = RegisterFile(tuple(atoms), mem_prefix, remat_prefix, named, classes)
    proc = ProcessorDescription(name, regfile, resources, instructions, copies, pairs,
                                CallConv(saved, setup, teardown), issue_width, issue_resource)
    diags = validate_processor(proc)
    if diags:
        raise ParseError("; ".join(diags), 1)
    return proc


_FLAG_FWD = re.compile(r"fwd\((\d+)\)")
_FLAG_2ADDR = re.compile(r"2addr\((\d+),(\d+)\)")


def _parse_instruction(toks: list[str], lineno: int) -> Instruction:
    name = toks[0]
    virtual = False
    lat, size = 1, 0
    usages: list[Usage] = []
    def_classes: list[str] = []
    use_classes: list[str] = []
    requires = manages = False
    fwd: list[int] = []
    two: list[tuple[int, int]] = []
    i = 1
    while i < len(toks):
        t = toks[i]
        if t == "virtual":
            virtual = True
            i += 1
        elif t == "lat":
            lat = int(toks[i + 1]); i += 2
        elif t == "size":
            size = int(toks[i + 1]); i += 2
        elif t == "defs":
            i += 1
            while i < len(toks) and toks[i] not in _INS_KEYWORDS:
                def_classes.append(toks[i]); i += 1
        elif t == "uses":
            i += 1
            while i < len(toks) and toks[i] not in _INS_KEYWORDS:
                use_classes.append(toks[i]); i += 1
        elif t == "use":
            res, units, dur = toks[i + 1], int(toks[i + 2]), int(toks[i + 3])
            i += 4
            off = 0
            if i < len(toks) and toks[i].startswith("+"):
                off = int(toks[i][1:]); i += 1
            usages.append(Usage(res, units, dur, off))
        elif t == "frame+":
            requires = True; i += 1
        elif t == "frame!":
            manages = True; i += 1
        elif _FLAG_FWD.fullmatch(t):
            fwd.append(int(_FLAG_FWD.fullmatch(t).group(1))); i += 1
        elif _FLAG_2ADDR.fullmatch(t):
            m = _FLAG_2ADDR.fullmatch(t)
            two.append((int(m.group(1)), int(m.group(2)))); i += 1
        else:
            raise ParseError(f"unknown instruction token {t}", lineno)
    if lat < 0 or size < 0:
        raise ParseError(f"instruction {name}: negative latency or size", lineno)
    return Instruction(name, virtual, lat, size, tuple(usages), tuple(def_classes),
                       tuple(use_classes), requires, manages, tuple(fwd), tuple(two))


_INS_KEYWORDS = {"virtual", "lat", "size", "defs", "uses", "use",
                 "frame+", "frame!"}


def serialize_processor(proc: ProcessorDescription) -> str:
    """Canonical textual form of a processor description."""
    rf = proc.regfile
    out = [f"processor {proc.name}",
           f"issuewidth {proc.issue_width} {proc.issue_resource}",
           "atoms " + " ".join(rf.atoms)]
    for name, (left, width) in rf.named.items():
        if width != 1 or name != rf.atoms[left]:
            out.append(f"wide {name} = {rf.atoms[left]} {width}")
    out.append(f"space mem {rf.mem_prefix}")
    out.append(f"space remat {rf.remat_prefix}")
    for cname, val in rf.classes.items():
        if isinstance(val, str):
            out.append(f"class {cname} = space {val}")
        else:
            out.append(f"class {cname} = " + " ".join(val))
    for r in proc.resources.values():
        if r.name != proc.issue_resource:
            out.append(f"resource {r.name} {r.capacity}")
    builtins = set(builtin_instructions())
    for ins in proc.instructions.values():
        if ins.name in builtins:
            continue
        toks = [f"instruction {ins.name}"]
        if ins.virtual:
            toks.append("virtual")
        toks.append(f"lat {ins.latency}")
        toks.append(f"size {ins.size}")
        if ins.def_classes:
            toks.append("defs " + " ".join(ins.def_classes))
        if ins.use_classes:
            toks.append("uses " + " ".join(ins.use_classes))
        for u in ins.usages:
            if u.resource == proc.issue_resource and u.units == 1 and u.duration == 1 and not u.offset:
                continue
            t = f"use {u.resource} {u.units} {u.duration}"
            if u.offset:
                t += f" +{u.offset}"
            toks.append(t)
        if ins.requires_frame:
            toks.append("frame+")
        if ins.manages_frame:
            toks.append("frame!")
        for k in ins.forwarded:
            toks.append(f"fwd({k})")
        for d, u in ins.two_address:
            toks.append(f"2addr({d},{u})")
        out.append(" ".join(toks))
    for purpose, names in proc.copies.items():
        out.append(f"copy {purpose} " + " ".join(names))
    for single, double in proc.pairs.items():
        out.append(f"pair {single} {double}")
    if proc.callconv.saved:
        out.append("callconv saved " + " ".join(proc.callconv.saved))
    if proc.callconv.frame_setup:
        out.append("callconv setup " + " ".join(proc.callconv.frame_setup))
    if proc.callconv.frame_teardown:
        out.append("callconv teardown " + " ".join(proc.callconv.frame_teardown))
    return "\n".join(out) + "\n"


# --- validation ---------------------------------------------------------------

def validate_processor(proc: ProcessorDescription) -> list[str]:
    diags = []
    rf = proc.regfile
    n = len(rf.atoms)
    for name, (left, width) in rf.named.items():
        if left < 0 or left + width > n:
            diags.append(f"register {name}: atoms out of range")
    for cname, val in rf.classes.items():
        if isinstance(val, str):
            continue
        if not val:
            diags.append(f"class {cname} is empty")
            continue
        widths = set()
        for reg in val:
            if reg not in rf.named:
                diags.append(f"class {cname} references unknown register {reg}")
            else:
                widths.add(rf.named[reg][1])
        if len(widths) > 1:
            diags.append(f"class {cname} mixes register widths {sorted(widths)}")
    for ins in proc.instructions.values():
        for u in ins.usages:
            if u.resource not in proc.resources:
                diags.append(f"instruction {ins.name}: unknown resource {u.resource}")
        if ins.virtual:
            if ins.size != 0:
                diags.append(f"virtual instruction {ins.name} has nonzero size")
            if any(u.units > 0 for u in ins.usages):
                diags.append(f"virtual instruction {ins.name} consumes resources")
        for c in ins.def_classes + ins.use_classes:
            if c not in rf.classes:
                diags.append(f"instruction {ins.name}: unknown class {c}")
    if proc.instructions[ENTRY_INSTR].latency != 1:
        diags.append("entry instruction latency must be 1")
    for purpose, names in proc.copies.items():
        if purpose not in ("store", "load", "move", "demat"):
            diags.append(f"unknown copy purpose {purpose}")
        for nm in names:
            if nm not in proc.instructions:
                diags.append(f"copy {purpose} references unknown instruction {nm}")
    for single, double in proc.pairs.items():
        for nm in (single, double):
            if nm not in proc.instructions:
                diags.append(f"pair references unknown instruction {nm}")
    for reg in proc.callconv.saved:
        if reg not in rf.named:
            diags.append(f"callee-saved register {reg} unknown")
    for nm in proc.callconv.frame_setup + proc.callconv.frame_teardown:
        if nm not in proc.instructions:
            diags.append(f"frame operation instruction {nm} unknown")
    return diags


def class_atoms(proc: ProcessorDescription, cname: str, width: int,
                mem_count: int = 0, remat_count: int = 0) -> tuple[int, ...]:
    """Leftmost atoms a width-`width` temporary may take within class `cname`.

    Memory and rematerialization atoms are appended after the processor atoms,
    sized per function; space classes admit any leftmost whose extent fits.
    """
    rf = proc.regfile
    n = len(rf.atoms)
    val = rf.classes[cname]
    if val == "mem":
        return tuple(a for a in range(n, n + mem_count) if a + width <= n + mem_count)
    if val == "remat":
        base = n + mem_count
        return tuple(a for a in range(base, base + remat_count) if a + width <= base + remat_count)
    return tuple(sorted(rf.named[r][0] for r in val if rf.named[r][1] == width))


def atom_register_name(proc: ProcessorDescription, atom: int, width: int,
                       mem_count: int = 0) -> str:
    """Display name for a placement: named register if one covers it exactly."""
    rf = proc.regfile
    n = len(rf.atoms)
    if atom >= n + mem_count:
        return f"{rf.remat_prefix}{atom - n - mem_count}"
    if atom >= n:
        return f"{rf.mem_prefix}{atom - n}"
    for name, (left, w) in rf.named.items():
        if left == atom and w == width:
            return name
    return rf.atoms[atom]


def validate(fn: Function, proc: ProcessorDescription) -> list[str]:
    """Structural diagnostics for a function against a processor; [] when clean."""
    diags = []
    for bid in fn.blocks:
        ops = fn.block_ops(bid)
        bname = fn.blocktab[bid].name
        if not ops or ops[0].kind != ENTRY:
            diags.append(f"block {bname}: first operation is not entry")
        if not ops or ops[-1].kind != EXIT:
            diags.append(f"block {bname}: last operation is not exit")
        if sum(1 for o in ops if o.kind == ENTRY) > 1 or sum(1 for o in ops if o.kind == EXIT) > 1:
            diags.append(f"block {bname}: multiple entry/exit operations")
        if fn.blocktab[bid].frequency < 0:
            diags.append(f"block {bname}: negative frequency")
    for t in fn.temps.values():
        if t.width < 1:
            diags.append(f"temporary {t.name}: width < 1")
        if t.definer < 0:
            diags.append(f"temporary {t.name}: no defining operand")
    for op in fn.operations.values():
        if not op.instructions:
            diags.append(f"operation o{op.id}: no instructions")
        if op.kind in (ENTRY, EXIT) and len(op.instructions) != 1:
            diags.append(f"operation o{op.id}: boundary operations carry one instruction")
        for iname in op.instructions:
            if iname not in proc.instructions:
                diags.append(f"operation o{op.id}: unknown instruction {iname}")
                continue
            ins = proc.instructions[iname]
            for pos, pid in enumerate(op.defs):
                cname = ins.class_for(DEF, pos)
                if cname is None:
                    continue
                if cname not in proc.regfile.classes:
                    continue
                for t in fn.operands[pid].temps:
                    if not _width_ok(proc, cname, fn.temps[t].width):
                        diags.append(
                            f"operation o{op.id}: class {cname} incompatible with "
                            f"width of {fn.temp_name(t)}")
            for pos, pid in enumerate(op.uses):
                cname = ins.class_for(USE, pos)
                if cname is None or cname not in proc.regfile.classes:
                    continue
                for t in fn.operands[pid].temps:
                    if not _width_ok(proc, cname, fn.temps[t].width):
                        diags.append(
                            f"operation o{op.id}: class {cname} incompatible with "
                            f"width of {fn.temp_name(t)}")
    for p in fn.operands.values():
        if p.direction == DEF and len(p.temps) != 1:
            diags.append(f"operand p{p.id}: def with multiple temporaries")
        if p.preassign and p.preassign not in proc.regfile.named:
            diags.append(f"operand p{p.id}: unknown register {p.preassign}")
        op = fn.operations[p.operation]
        if p.boundary != B_NONE and op.kind not in (ENTRY, EXIT):
            diags.append(f"operand p{p.id}: boundary mark on non-boundary operation")
    for a, b in fn.congruences:
        pa, pb = fn.operands.get(a), fn.operands.get(b)
        if pa is None or pb is None:
            diags.append(f"congruence ({a},{b}): dangling operand")
            continue
        ka = fn.operations[pa.operation].kind
        kb = fn.operations[pb.operation].kind
        if not (ka == EXIT and kb == ENTRY):
            diags.append(f"congruence (p{a},p{b}): must join an exit operand to an entry operand")
    return diags


def _width_ok(proc: ProcessorDescription, cname: str, width: int) -> bool:
    val = proc.regfile.classes[cname]
    if isinstance(val, str):
        return True          # space classes place any width on consecutive atoms
    return any(proc.regfile.named[r][1] == width for r in val)
