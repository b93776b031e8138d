"""Internal RISC-like ISA: instructions, basic blocks, and the .casm text format.

Programs are ordered lists of basic blocks. Every block starts with a `head`
marker carrying the block metadata (control-presence bit, body size, control
offset, fall-through offset). Addresses are instruction slot indices: the head
occupies one slot and the body the following `blk_size` slots.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

MASK64 = (1 << 64) - 1
SIGN64 = 1 << 63

LOCAL = "r"
GLOBAL = "g"

N_ARCH_GLOBALS = 64
LRF_SIZE = 20
MAX_BLOCK_BODY = 32
MAX_GLOBAL_WRITES = 8

ALU_OPS = frozenset({"add", "sub", "mul", "and", "or", "xor", "shl", "shr", "cmp", "mov", "li"})
BRANCH_OPS = frozenset({"beq", "bne", "blt"})
CTRL_OPS = frozenset({"beq", "bne", "blt", "jmp", "call", "ret"})
MEM_OPS = frozenset({"lw", "sw"})
OPCODES = ALU_OPS | CTRL_OPS | MEM_OPS | {"head", "nop"}

# Nominal execution latencies in cycles. Loads use the L1 latency here; the
# timing cores override it with whatever the cache hierarchy reports.
LATENCY = {op: 1 for op in OPCODES}
LATENCY["mul"] = 3
LATENCY["lw"] = 4


class Reg(NamedTuple):
    scope: str  # LOCAL or GLOBAL
    idx: int

    @property
    def rrf(self) -> int:
        """Register rename flag: 1 iff the operand needs the rename tables."""
        return 1 if self.scope == GLOBAL else 0

    def __str__(self) -> str:
        return f"{self.scope}{self.idx}"


@dataclass
class HeadMeta:
    has_ctrl: bool
    blk_size: int
    ctrl_offset: int  # slots from head to the control op; valid when has_ctrl
    fall_through_offset: int  # slots from this head to the next head


@dataclass
class Instruction:
    op: str
    dest: Optional[Reg] = None
    srcs: tuple[Reg, ...] = ()
    imm: Optional[int] = None
    target_label: Optional[str] = None
    target: Optional[int] = None  # resolved head slot of the target block
    meta: Optional[HeadMeta] = None  # head only
    seq_id: int = -1
    pc: int = -1
    latency: int = 1

    @property
    def is_ctrl(self) -> bool:
        return self.op in CTRL_OPS

    @property
    def is_mem(self) -> bool:
        return self.op in MEM_OPS

    @property
    def is_load(self) -> bool:
        return self.op == "lw"

    @property
    def is_store(self) -> bool:
        return self.op == "sw"

    def operand_regs(self) -> tuple[Reg, ...]:
        if self.dest is None:
            return self.srcs
        return (self.dest,) + self.srcs

    def render(self) -> str:
        if self.op == "head":
            return "head"
        if self.op in ("ret", "nop"):
            return self.op
        if self.op in ("jmp", "call"):
            return f"{self.op} {self.target_label}"
        if self.op in BRANCH_OPS:
            return f"{self.op} {self.srcs[0]}, {self.srcs[1]}, {self.target_label}"
        if self.op == "lw":
            return f"lw {self.dest}, {self.imm}({self.srcs[0]})"
        if self.op == "sw":
            return f"sw {self.srcs[0]}, {self.imm}({self.srcs[1]})"
        if self.op == "li":
            return f"li {self.dest}, {self.imm}"
        if self.op == "mov":
            return f"mov {self.dest}, {self.srcs[0]}"
        parts = [str(s) for s in self.srcs]
        if self.imm is not None:
            parts.append(str(self.imm))
        return f"{self.op} {self.dest}, {', '.join(parts)}"


@dataclass
class BasicBlock:
    label: Optional[str]
    head: Instruction
    body: list[Instruction] = field(default_factory=list)
    global_writes: list[int] = field(default_factory=list)

    @property
    def blk_size(self) -> int:
        return len(self.body)

    @property
    def has_ctrl(self) -> bool:
        return bool(self.body) and self.body[-1].is_ctrl

    @property
    def ctrl(self) -> Optional[Instruction]:
        return self.body[-1] if self.has_ctrl else None


@dataclass
class Program:
    blocks: list[BasicBlock]
    mem_init: dict[int, int] = field(default_factory=dict)
    reg_init: dict[int, int] = field(default_factory=dict)
    # Bare programs carry no head slots (the baseline-core form).
    bare: bool = False
    # Filled by relayout(): slot -> instruction, and head slot -> block index.
    slots: list[Instruction] = field(default_factory=list)
    block_at_head: dict[int, int] = field(default_factory=dict)

    def relayout(self) -> "Program":
        """Recompute slots, seq ids, head metadata, and branch targets."""
        label_to_block = {}
        for i, blk in enumerate(self.blocks):
            if blk.label is not None:
                if blk.label in label_to_block:
                    raise AsmError(f"duplicate label {blk.label!r}")
                label_to_block[blk.label] = i

        self.slots = []
        self.block_at_head = {}
        seq = 0
        for i, blk in enumerate(self.blocks):
            if not blk.body:
                raise AsmError(f"empty block (block {i})")
            for ins in blk.body[:-1]:
                if ins.is_ctrl:
                    raise AsmError(f"control op {ins.op!r} is not last in block {i}")
            blk.head.op = "head"
            blk.head.pc = len(self.slots)
            self.block_at_head[blk.head.pc] = i
            if not self.bare:
                blk.head.seq_id = seq
                seq += 1
                self.slots.append(blk.head)
            for ins in blk.body:
                ins.pc = len(self.slots)
                ins.seq_id = seq
                seq += 1
                self.slots.append(ins)
            blk.head.meta = HeadMeta(
                has_ctrl=blk.has_ctrl,
                blk_size=blk.blk_size,
                ctrl_offset=blk.blk_size if blk.has_ctrl else 0,
                fall_through_offset=(0 if self.bare else 1) + blk.blk_size,
            )
            blk.global_writes = [
                ins.dest.idx
                for ins in blk.body
                if ins.dest is not None and ins.dest.scope == GLOBAL
            ]
        for blk in self.blocks:
            ctrl = blk.ctrl
            if ctrl is not None and ctrl.target_label is not None:
                if ctrl.target_label not in label_to_block:
                    raise AsmError(f"undefined label {ctrl.target_label!r}")
                ctrl.target = self.blocks[label_to_block[ctrl.target_label]].head.pc
        return self

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def instr_at(self, pc: int) -> Optional[Instruction]:
        if 0 <= pc < len(self.slots):
            return self.slots[pc]
        return None

    def used_globals(self) -> set[int]:
        used = set()
        for blk in self.blocks:
            for ins in blk.body:
                for r in ins.operand_regs():
                    if r.scope == GLOBAL:
                        used.add(r.idx)
        return used


class AsmError(Exception):
    """Syntax or block-invariant error in .casm input."""

    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        if line is not None:
            msg = f"line {line}" + (f", col {col}" if col is not None else "") + f": {msg}"
        super().__init__(msg)
        self.line = line
        self.col = col


# --- functional semantics -------------------------------------------------

def to_signed(v: int) -> int:
    return v - (1 << 64) if v & SIGN64 else v


def alu_result(op: str, a: int, b: int) -> int:
    if op == "add":
        return (a + b) & MASK64
    if op == "sub":
        return (a - b) & MASK64
    if op == "mul":
        return (a * b) & MASK64
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return (a << (b & 63)) & MASK64
    if op == "shr":
        return a >> (b & 63)
    if op == "cmp":
        return 1 if to_signed(a) < to_signed(b) else 0
    if op in ("mov", "li"):
        return a
    raise ValueError(f"not an ALU op: {op}")


def branch_taken(op: str, a: int, b: int) -> bool:
    if op == "beq":
        return a == b
    if op == "bne":
        return a != b
    if op == "blt":
        return to_signed(a) < to_signed(b)
    raise ValueError(f"not a branch: {op}")


def mem_addr(base: int, imm: int) -> int:
    # The ISA only has naturally aligned 64-bit accesses; addresses are
    # force-aligned so misalignment is unrepresentable (wrong-path execution
    # must never fault the simulator).
    return (base + imm) & MASK64 & ~7


# --- parsing ---------------------------------------------------------------

_REG_RE = re.compile(r"^([lgr])(\d+)$")
_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*):$")
_MEMOFF_RE = re.compile(r"^(-?\d+)\(([lgr]\d+)\)$")


def _parse_reg(tok: str, line: int) -> Reg:
    m = _REG_RE.match(tok)
    if not m:
        raise AsmError(f"expected register, got {tok!r}", line)
    scope = LOCAL if m.group(1) in ("l", "r") else GLOBAL
    idx = int(m.group(2))
    limit = LRF_SIZE if scope == LOCAL else N_ARCH_GLOBALS
    if idx >= limit:
        raise AsmError(f"register index {tok!r} out of range (< {limit})", line)
    return Reg(scope, idx)


def _parse_int(tok: str, line: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"expected integer, got {tok!r}", line) from None


def _parse_operands(op: str, rest: str, line: int) -> Instruction:
    toks = [t.strip() for t in rest.split(",")] if rest else []
    if op in ("ret", "nop", "head"):
        if toks and toks != [""]:
            raise AsmError(f"{op} takes no operands", line)
        return Instruction(op=op)
    if op in ("jmp", "call"):
        if len(toks) != 1:
            raise AsmError(f"{op} takes one label", line)
        return Instruction(op=op, target_label=toks[0])
    if op in BRANCH_OPS:
        if len(toks) != 3:
            raise AsmError(f"{op} takes two registers and a label", line)
        return Instruction(
            op=op,
            srcs=(_parse_reg(toks[0], line), _parse_reg(toks[1], line)),
            target_label=toks[2],
        )
    if op == "lw":
        if len(toks) != 2:
            raise AsmError("lw takes dest and imm(base)", line)
        m = _MEMOFF_RE.match(toks[1].replace(" ", ""))
        if not m:
            raise AsmError(f"bad address operand {toks[1]!r}", line)
        return Instruction(
            op=op,
            dest=_parse_reg(toks[0], line),
            srcs=(_parse_reg(m.group(2), line),),
            imm=int(m.group(1)),
        )
    if op == "sw":
        if len(toks) != 2:
            raise AsmError("sw takes data and imm(base)", line)
        m = _MEMOFF_RE.match(toks[1].replace(" ", ""))
        if not m:
            raise AsmError(f"bad address operand {toks[1]!r}", line)
        return Instruction(
            op=op,
            srcs=(_parse_reg(toks[0], line), _parse_reg(m.group(2), line)),
            imm=int(m.group(1)),
        )
    if op == "li":
        if len(toks) != 2:
            raise AsmError("li takes dest and immediate", line)
        return Instruction(op=op, dest=_parse_reg(toks[0], line), imm=_parse_int(toks[1], line))
    if op == "mov":
        if len(toks) != 2:
            raise AsmError("mov takes dest and source", line)
        return Instruction(op=op, dest=_parse_reg(toks[0], line), srcs=(_parse_reg(toks[1], line),))
    if op in ALU_OPS:
        if len(toks) != 3:
            raise AsmError(f"{op} takes dest and two sources", line)
        dest = _parse_reg(toks[0], line)
        a = _parse_reg(toks[1], line)
        if _REG_RE.match(toks[2]):
            return Instruction(op=op, dest=dest, srcs=(a, _parse_reg(toks[2], line)))
        return Instruction(op=op, dest=dest, srcs=(a,), imm=_parse_int(toks[2], line))
    raise AsmError(f"unknown opcode {op!r}", line)


def _split_oversized(blocks: list[BasicBlock]) -> list[BasicBlock]:
    """Split blocks with more than MAX_BLOCK_BODY body instructions.

    Only the fragment holding the original control op keeps it; earlier
    fragments fall through.
    """
    out = []
    for blk in blocks:
        if len(blk.body) <= MAX_BLOCK_BODY:
            out.append(blk)
            continue
        chunks = [
            blk.body[i : i + MAX_BLOCK_BODY] for i in range(0, len(blk.body), MAX_BLOCK_BODY)
        ]
        for j, chunk in enumerate(chunks):
            out.append(
                BasicBlock(
                    label=blk.label if j == 0 else None,
                    head=Instruction(op="head") if j > 0 else blk.head,
                    body=chunk,
                )
            )
    return out


def parse_program(text: str, partition: bool = True) -> Program:
    """Parse .casm source into a Program.

    Grammar: one instruction per line; `#` comments; `label:` lines start a
    block; explicit `head` lines start a block; `.mem addr value` preloads a
    64-bit memory word; `.reg gN value` presets a global register. Head
    metadata is always recomputed from the block structure, never trusted
    from the input.
    """
    blocks: list[BasicBlock] = []
    mem_init: dict[int, int] = {}
    reg_init: dict[int, int] = {}
    cur: Optional[BasicBlock] = None
    lineno = 0

    def start_block(label: Optional[str]) -> BasicBlock:
        nonlocal cur
        if cur is not None and not cur.body:
            raise AsmError(f"empty block before {label or 'head'}", lineno)
        cur = BasicBlock(label=label, head=Instruction(op="head"))
        blocks.append(cur)
        return cur

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LABEL_RE.match(line)
        if m:
            start_block(m.group(1))
            continue
        if line.startswith(".mem"):
            parts = line.split()
            if len(parts) != 3:
                raise AsmError(".mem takes address and value", lineno)
            addr = _parse_int(parts[1], lineno) & ~7
            mem_init[addr] = _parse_int(parts[2], lineno) & MASK64
            continue
        if line.startswith(".reg"):
            parts = line.split()
            if len(parts) != 3:
                raise AsmError(".reg takes a global register and value", lineno)
            r = _parse_reg(parts[1], lineno)
            if r.scope != GLOBAL:
                raise AsmError(".reg only presets globals", lineno)
            reg_init[r.idx] = _parse_int(parts[2], lineno) & MASK64
            continue
        op, _, rest = line.partition(" ")
        op = op.lower()
        if op == "head":
            start_block(None)
            continue
        ins = _parse_operands(op, rest.strip(), lineno)
        ins.latency = LATENCY[ins.op]
        if cur is None:
            start_block(None)
        cur.body.append(ins)

    if cur is not None and not cur.body:
        raise AsmError("empty block at end of input")
    if not blocks:
        raise AsmError("no instructions")
    if partition:
        blocks = _split_oversized(blocks)
    prog = Program(blocks=blocks, mem_init=mem_init, reg_init=reg_init)
    return prog.relayout()


def emit_program(p: Program) -> str:
    """Render a Program back to .casm text; parse(emit(p)) == p structurally."""
    lines = []
    for idx in sorted(p.reg_init):
        lines.append(f".reg g{idx} {p.reg_init[idx]}")
    for addr in sorted(p.mem_init):
        lines.append(f".mem {addr} {p.mem_init[addr]}")
    for blk in p.blocks:
        if blk.label is not None:
            lines.append(f"{blk.label}:")
        else:
            lines.append("head")
        for ins in blk.body:
            lines.append("    " + ins.render())
    return "\n".join(lines) + "\n"


def programs_equal(a: Program, b: Program) -> bool:
    if len(a.blocks) != len(b.blocks) or a.mem_init != b.mem_init or a.reg_init != b.reg_init:
        return False
    for ba, bb in zip(a.blocks, b.blocks):
        if ba.label != bb.label or len(ba.body) != len(bb.body):
            return False
        for ia, ib in zip(ba.body, bb.body):
            if (ia.op, ia.dest, ia.srcs, ia.imm, ia.target) != (
                ib.op,
                ib.dest,
                ib.srcs,
                ib.imm,
                ib.target,
            ):
                return False
    return True
