"""Reference interpreter: architectural semantics with no timing.

Executes a program block by block and records the control trace. Local
registers are block-scoped: they reset to invalid at every block entry and
unwritten locals read as zero, matching the per-window local register files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .isa import (
    GLOBAL,
    MASK64,
    N_ARCH_GLOBALS,
    Program,
    alu_result,
    branch_taken,
    mem_addr,
)


class OracleLimit(Exception):
    pass


@dataclass
class CtrlOutcome:
    head_pc: int
    ctrl_pc: int
    op: str
    taken: bool
    target: int | None  # None means program halt


@dataclass
class FinalState:
    globals_: list[int]
    memory: dict[int, int]
    ctrl_trace: list[CtrlOutcome] = field(default_factory=list)
    blocks_run: int = 0
    instrs_run: int = 0

    def global_values(self, indices) -> dict[int, int]:
        return {i: self.globals_[i] for i in indices}


def run_functional(program: Program, max_steps: int = 2_000_000) -> FinalState:
    g = [0] * N_ARCH_GLOBALS
    for idx, val in program.reg_init.items():
        g[idx] = val
    mem = dict(program.mem_init)
    call_stack: list[int] = []
    trace: list[CtrlOutcome] = []

    pc = 0
    steps = 0
    blocks = 0
    while True:
        if pc == program.n_slots:
            break  # fell off the end of the last block
        if pc not in program.block_at_head:
            raise OracleLimit(f"jump to invalid slot {pc}")
        blocks += 1
        blk = program.blocks[program.block_at_head[pc]]
        local = [0] * 32
        next_pc: int | None = pc + blk.head.meta.fall_through_offset
        halted = False

        for ins in blk.body:
            steps += 1
            if steps > max_steps:
                raise OracleLimit(f"exceeded {max_steps} steps")

            def rd(r):
                return g[r.idx] if r.scope == GLOBAL else local[r.idx]

            if ins.op in ("beq", "bne", "blt"):
                taken = branch_taken(ins.op, rd(ins.srcs[0]), rd(ins.srcs[1]))
                if taken:
                    next_pc = ins.target
                trace.append(CtrlOutcome(pc, ins.pc, ins.op, taken, next_pc))
            elif ins.op == "jmp":
                next_pc = ins.target
                trace.append(CtrlOutcome(pc, ins.pc, ins.op, True, next_pc))
            elif ins.op == "call":
                call_stack.append(ins.pc + 1)
                next_pc = ins.target
                trace.append(CtrlOutcome(pc, ins.pc, ins.op, True, next_pc))
            elif ins.op == "ret":
                if call_stack:
                    next_pc = call_stack.pop()
                else:
                    next_pc = None
                    halted = True
                trace.append(CtrlOutcome(pc, ins.pc, ins.op, True, next_pc))
            elif ins.op == "lw":
                addr = mem_addr(rd(ins.srcs[0]), ins.imm)
                val = mem.get(addr, 0)
                if ins.dest.scope == GLOBAL:
                    g[ins.dest.idx] = val
                else:
                    local[ins.dest.idx] = val
            elif ins.op == "sw":
                addr = mem_addr(rd(ins.srcs[1]), ins.imm)
                mem[addr] = rd(ins.srcs[0])
            elif ins.op == "nop":
                pass
            else:
                if ins.op == "li":
                    val = ins.imm & MASK64
                else:
                    a = rd(ins.srcs[0])
                    b = rd(ins.srcs[1]) if len(ins.srcs) > 1 else (
                        (ins.imm & MASK64) if ins.imm is not None else 0
                    )
                    val = alu_result(ins.op, a, b)
                if ins.dest.scope == GLOBAL:
                    g[ins.dest.idx] = val
                else:
                    local[ins.dest.idx] = val

        if halted or next_pc is None:
            break
        pc = next_pc

    return FinalState(globals_=g, memory=mem, ctrl_trace=trace, blocks_run=blocks, instrs_run=steps)
