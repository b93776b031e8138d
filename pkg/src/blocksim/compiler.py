"""Static block-level compiler passes.

The software half of the hierarchy: register classification (local vs global
from liveness), per-block list scheduling with memory-op hoisting, block
partitioning under the body-size and global-write caps, and lowering to the
bare all-global form the baseline cores run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .isa import (
    GLOBAL,
    LOCAL,
    LRF_SIZE,
    MAX_BLOCK_BODY,
    MAX_GLOBAL_WRITES,
    N_ARCH_GLOBALS,
    AsmError,
    BasicBlock,
    Instruction,
    Program,
    Reg,
)

TRUE_DEP = "true"
ORDER_DEP = "order"  # anti, output, and memory-order edges


@dataclass
class DepGraph:
    nodes: list[Instruction]
    succs: list[dict[int, str]]  # node -> {succ: edge kind}
    preds: list[set[int]]
    priority: list[int] = field(default_factory=list)


def build_depgraph(body: list[Instruction]) -> DepGraph:
    """Register true/anti/output deps plus conservative memory-order edges.

    No alias analysis: every lw orders against every earlier sw, and sw
    against all earlier memory ops. Priorities are critical-path lengths with
    each load costed at its L1 latency.
    """
    n = len(body)
    succs: list[dict[int, str]] = [{} for _ in range(n)]
    preds: list[set[int]] = [set() for _ in range(n)]

    def add(p: int, s: int, kind: str):
        if p == s:
            return
        prev = succs[p].get(s)
        if prev == TRUE_DEP:
            return
        if prev is None or kind == TRUE_DEP:
            succs[p][s] = kind
        preds[s].add(p)

    last_write: dict[Reg, int] = {}
    readers: dict[Reg, list[int]] = {}
    last_store = -1
    loads_since_store: list[int] = []

    for i, ins in enumerate(body):
        for r in ins.srcs:
            if r in last_write:
                add(last_write[r], i, TRUE_DEP)
            readers.setdefault(r, []).append(i)
        if ins.dest is not None:
            d = ins.dest
            if d in last_write:
                add(last_write[d], i, ORDER_DEP)  # WAW
            for rd in readers.get(d, ()):
                add(rd, i, ORDER_DEP)  # WAR
            last_write[d] = i
            readers[d] = []
        if ins.is_load:
            if last_store >= 0:
                add(last_store, i, ORDER_DEP)
            loads_since_store.append(i)
        elif ins.is_store:
            if last_store >= 0:
                add(last_store, i, ORDER_DEP)
            for ld in loads_since_store:
                add(ld, i, ORDER_DEP)
            last_store = i
            loads_since_store = []

    g = DepGraph(nodes=list(body), succs=succs, preds=preds)
    prio = [0] * n
    for i in range(n - 1, -1, -1):
        lat = body[i].latency
        best = lat
        for s, kind in succs[i].items():
            w = lat if kind == TRUE_DEP else 1
            if w + prio[s] > best:
                best = w + prio[s]
        prio[i] = best
    g.priority = prio
    return g


def list_schedule_block(blk: BasicBlock) -> BasicBlock:
    """Reorder a block body by delay-aware list scheduling.

    One op is placed per slot. Candidates are dependence-ready ops whose
    operands have arrived by the current slot (ops still waiting on a
    producer's latency lose to stall fillers); among candidates: highest
    critical-path priority, then loads (hoisting), then lowest original
    position. The control op stays last.
    """
    body = blk.body
    ctrl = body[-1] if body and body[-1].is_ctrl else None
    work = body[:-1] if ctrl is not None else list(body)
    if len(work) > 1:
        g = build_depgraph(work)
        n = len(work)
        remaining = [len(g.preds[i]) for i in range(n)]
        est = [0] * n  # earliest data-ready slot
        ready = [i for i in range(n) if remaining[i] == 0]
        order: list[int] = []
        t = 0
        while ready:
            avail = [i for i in ready if est[i] <= t]
            pool = avail or ready
            best = max(pool, key=lambda i: (g.priority[i], work[i].is_load, -i))
            ready.remove(best)
            order.append(best)
            start = max(t, est[best])
            t = start + 1
            for s, kind in g.succs[best].items():
                w = work[best].latency if kind == TRUE_DEP else 1
                est[s] = max(est[s], start + w)
                remaining[s] -= 1
                if remaining[s] == 0:
                    ready.append(s)
        if len(order) != n:
            raise AssertionError("dependence graph cycle")
        work = [work[i] for i in order]
    blk.body = work + ([ctrl] if ctrl is not None else [])
    return blk


def schedule_violations(original: list[Instruction], scheduled: list[Instruction]) -> int:
    """Count dependence-edge violations of a schedule (0 for a legal one)."""
    g = build_depgraph(original)
    pos = {id(ins): i for i, ins in enumerate(scheduled)}
    bad = 0
    for p in range(len(original)):
        for s in g.succs[p]:
            if pos[id(original[p])] >= pos[id(original[s])]:
                bad += 1
    return bad


# --- register classification -------------------------------------------------


def classify_registers(p: Program) -> Program:
    """Retag every register operand as Local or Global from liveness.

    A virtual register is global iff some block reads it before writing it
    (the value crosses a block boundary, including initial state). Existing
    scope tags are treated as virtual-register names, not trusted. Source
    globals keep their architectural index; promoted locals take free ones.
    Blocks needing more than the LRF capacity spill their least-used locals
    to globals.
    """
    live_in: set[Reg] = set()
    appear_order: list[Reg] = []
    seen: set[Reg] = set()
    for blk in p.blocks:
        written: set[Reg] = set()
        for ins in blk.body:
            for r in ins.srcs:
                if r not in seen:
                    seen.add(r)
                    appear_order.append(r)
                if r not in written:
                    live_in.add(r)
            if ins.dest is not None:
                if ins.dest not in seen:
                    seen.add(ins.dest)
                    appear_order.append(ins.dest)
                written.add(ins.dest)

    global_vregs = set(live_in)

    # Per-block spill of over-capacity locals, least used first.
    for blk in p.blocks:
        while True:
            pressure, at_peak = _peak_local_pressure(blk, global_vregs)
            if pressure <= LRF_SIZE:
                break
            uses = _use_counts(blk)
            victim = min(at_peak, key=lambda v: (uses[v], appear_order.index(v)))
            global_vregs.add(victim)

    arch_index: dict[Reg, int] = {}
    taken = set()
    for v in appear_order:
        if v in global_vregs and v.scope == GLOBAL:
            arch_index[v] = v.idx
            taken.add(v.idx)
    free = [i for i in range(N_ARCH_GLOBALS) if i not in taken]
    for v in appear_order:
        if v in global_vregs and v not in arch_index:
            if not free:
                raise AsmError("register-space overflow: too many globals")
            arch_index[v] = free.pop(0)

    for blk in p.blocks:
        local_index = _assign_local_indices(blk, global_vregs)

        def newreg(r: Reg) -> Reg:
            if r in global_vregs:
                return Reg(GLOBAL, arch_index[r])
            return Reg(LOCAL, local_index[r])

        for ins in blk.body:
            ins.srcs = tuple(newreg(r) for r in ins.srcs)
            if ins.dest is not None:
                ins.dest = newreg(ins.dest)
    return p.relayout()


def _use_counts(blk: BasicBlock) -> dict[Reg, int]:
    counts: dict[Reg, int] = {}
    for ins in blk.body:
        for r in ins.operand_regs():
            counts[r] = counts.get(r, 0) + 1
    return counts


def _local_intervals(blk: BasicBlock, global_vregs: set[Reg]) -> dict[Reg, tuple[int, int]]:
    intervals: dict[Reg, tuple[int, int]] = {}
    for i, ins in enumerate(blk.body):
        for r in ins.operand_regs():
            if r in global_vregs:
                continue
            lo, hi = intervals.get(r, (i, i))
            intervals[r] = (min(lo, i), max(hi, i))
    return intervals


def _peak_local_pressure(blk: BasicBlock, global_vregs: set[Reg]) -> tuple[int, list[Reg]]:
    intervals = _local_intervals(blk, global_vregs)
    peak, at_peak = 0, []
    for i in range(len(blk.body)):
        alive = [v for v, (lo, hi) in intervals.items() if lo <= i <= hi]
        if len(alive) > peak:
            peak, at_peak = len(alive), alive
    return peak, at_peak


def _assign_local_indices(blk: BasicBlock, global_vregs: set[Reg]) -> dict[Reg, int]:
    # FIFO reuse of freed indices: spreading assignments avoids manufacturing
    # anti-dependences that the list scheduler would then have to respect.
    intervals = _local_intervals(blk, global_vregs)
    order = sorted(intervals, key=lambda v: intervals[v])
    free = list(range(LRF_SIZE))
    active: list[tuple[int, int]] = []  # (end, index)
    out: dict[Reg, int] = {}
    for v in order:
        lo, hi = intervals[v]
        keep = []
        for end, idx in active:
            if end < lo:
                free.append(idx)
            else:
                keep.append((end, idx))
        active = keep
        if not free:
            raise AssertionError("local pressure above LRF capacity after spilling")
        idx = free.pop(0)
        out[v] = idx
        active.append((hi, idx))
    return out


# --- partitioning and lowering ----------------------------------------------


def partition_blocks(p: Program) -> Program:
    """Split blocks so every fragment fits the body-size and GW caps.

    Fresh heads get HasCtrl=0; only the fragment holding the original control
    op ends with it. Splitting can turn locals into cross-fragment values, so
    registers are reclassified until a fixpoint.
    """
    for _ in range(8):
        changed = False
        new_blocks: list[BasicBlock] = []
        for blk in p.blocks:
            frags = _split_block(blk)
            if len(frags) > 1:
                changed = True
            new_blocks.extend(frags)
        p.blocks = new_blocks
        p.relayout()
        if not changed:
            return p
        classify_registers(p)
    raise AssertionError("block partitioning did not converge")


def _split_block(blk: BasicBlock) -> list[BasicBlock]:
    if len(blk.body) <= MAX_BLOCK_BODY and _gw_count(blk.body) <= MAX_GLOBAL_WRITES:
        return [blk]
    frags: list[list[Instruction]] = []
    cur: list[Instruction] = []
    gw = 0
    for ins in blk.body:
        w = 1 if ins.dest is not None and ins.dest.scope == GLOBAL else 0
        if cur and (len(cur) >= MAX_BLOCK_BODY or gw + w > MAX_GLOBAL_WRITES):
            frags.append(cur)
            cur, gw = [], 0
        cur.append(ins)
        gw += w
    frags.append(cur)
    out = []
    for j, body in enumerate(frags):
        out.append(
            BasicBlock(
                label=blk.label if j == 0 else None,
                head=blk.head if j == 0 else Instruction(op="head"),
                body=body,
            )
        )
    return out


def _gw_count(body: list[Instruction]) -> int:
    return sum(1 for ins in body if ins.dest is not None and ins.dest.scope == GLOBAL)


def lower_for_baseline(p: Program) -> Program:
    """Produce the bare form baseline cores run: no heads, all registers global.

    Original globals keep their indices; locals map onto unused ones (legal
    because locals never carry values across blocks).
    """
    used = p.used_globals()
    free = [i for i in range(N_ARCH_GLOBALS) if i not in used]
    local_map: dict[int, int] = {}

    for blk in p.blocks:
        written: set[Reg] = set()
        for ins in blk.body:
            for r in ins.srcs:
                if r.scope == LOCAL and r not in written:
                    raise AsmError("cannot lower: local read before write")
            if ins.dest is not None and ins.dest.scope == LOCAL:
                written.add(ins.dest)

    def lowered(r: Reg) -> Reg:
        if r.scope == GLOBAL:
            return r
        if r.idx not in local_map:
            if not free:
                raise AsmError("register-space overflow while lowering")
            local_map[r.idx] = free.pop(0)
        return Reg(GLOBAL, local_map[r.idx])

    blocks = []
    for blk in p.blocks:
        body = []
        for ins in blk.body:
            body.append(
                Instruction(
                    op=ins.op,
                    dest=lowered(ins.dest) if ins.dest is not None else None,
                    srcs=tuple(lowered(r) for r in ins.srcs),
                    imm=ins.imm,
                    target_label=ins.target_label,
                    latency=ins.latency,
                )
            )
        blocks.append(BasicBlock(label=blk.label, head=Instruction(op="head"), body=body))
    out = Program(
        blocks=blocks,
        mem_init=dict(p.mem_init),
        reg_init=dict(p.reg_init),
        bare=True,
    )
    return out.relayout()


def compile_program(p: Program, schedule: bool = True) -> Program:
    """Full pipeline: classify registers, optionally schedule, partition."""
    classify_registers(p)
    if schedule:
        for blk in p.blocks:
            list_schedule_block(blk)
        p.relayout()
    return partition_blocks(p)
