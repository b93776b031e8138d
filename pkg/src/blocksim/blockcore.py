"""Cycle-level model of the block-granularity out-of-order core.

Stage structure per cycle (runs in reverse pipeline order so every stage
consumes last cycle's latch): commit, write-back, issue, dispatch into block
windows, head-buffer refill, rename/allocate, decode, next-block prediction,
fetch. Control resolutions and memory-order conflicts apply as a single
squash at the end of the cycle, oldest target first.

Issue timing: an op issued at cycle N with latency L has its result usable by
consumers issuing at N+L and notifies the block reorder buffer at N+L+1.
Block windows free as soon as they drain (all ops issued); commit happens
later, when the block completes at the buffer head.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .bpu import Bpu, PredRecord
from .config import CoreConfig
from .energy import EnergyLedger, access_energy, eu_energy_pj, grf_segment_access_pj
from .isa import GLOBAL, HeadMeta, Instruction, Program, alu_result, branch_taken, mem_addr
from .memsys import Lsu
from .stats import ArchState, RunStats

FREE, SPEC, ARCH = 0, 1, 2
PENDING = 1 << 62  # ready_at of an allocated register awaiting its producer


class SimError(Exception):
    pass


@dataclass
class DynBlock:
    sn: int
    head_pc: int
    meta: HeadMeta
    bw: "BlockWindow | None" = None
    gw: list[tuple[int, int, int]] = field(default_factory=list)  # (arch, old, new)
    remaining: int = 0
    dispatched: int = 0
    completed: bool = False
    squashed: bool = False
    pred_rec: PredRecord | None = None
    ret_target: int | None = None
    is_halt: bool = False
    cs_undo: tuple | None = None
    ctrl_op: str | None = None
    issued_positions: list[int] = field(default_factory=list)
    in_brob: bool = False
    outcome: tuple | None = None  # (op, taken, target) once the control op executes
    ctrl_applied: bool = False


class DynOp:
    __slots__ = ("ins", "block", "pos", "srcs", "dest", "charged_reads")

    def __init__(self, ins: Instruction, block: DynBlock, pos: int,
                 srcs: list[tuple[str, int]], dest: tuple[str, int] | None):
        self.ins = ins
        self.block = block
        self.pos = pos
        self.srcs = srcs
        self.dest = dest
        self.charged_reads = False


class BlockWindow:
    __slots__ = ("bw_id", "cluster", "iq", "hb", "lrf_val", "lrf_ready", "block")

    def __init__(self, bw_id: int, cluster: int, lrf_size: int):
        self.bw_id = bw_id
        self.cluster = cluster
        self.iq: deque[DynOp] = deque()
        self.hb: list[DynOp] = []
        self.lrf_val = [0] * lrf_size
        self.lrf_ready = [0] * lrf_size
        self.block: DynBlock | None = None

    def reset_lrf(self):
        for i in range(len(self.lrf_val)):
            self.lrf_val[i] = 0
            self.lrf_ready[i] = 0


@dataclass
class BpbEntry:
    pc: int | None  # None is the unknown-target sentinel
    push_cycle: int
    rec: PredRecord | None = None
    src_block: DynBlock | None = None
    consumed_unknown: bool = False


@dataclass
class SquashEvent:
    kind: str  # "control" or "memory"
    target_sn: int
    restart_pc: int | None
    resolving: tuple | None = None  # (rec, op kind, taken, target)
    victim_load_pos: int | None = None


class BlockCore:
    def __init__(self, program: Program, cfg: CoreConfig, ledger: EnergyLedger | None = None,
                 trace: list | None = None):
        if program.bare:
            raise SimError("block core needs a program with heads")
        for blk in program.blocks:
            if blk.blk_size > 32:
                raise SimError("block exceeds the 32-op encoding; partition it first")
        self.program = program
        self.cfg = cfg
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.trace = trace
        self.cycle = 0
        self.stats = RunStats(core="cgooo", cycles=0, instructions=0, config=cfg.to_dict())

        led = self.ledger
        p = led.params
        led.register_flat("icache", p.icache_pj, p.icache_leak_pj_cycle)
        self.bpu = Bpu(cfg, led)
        self.lsu = Lsu(cfg, led, program.mem_init, speculative=True)
        led.register_table("rename", cfg.n_arch_regs, 8, 2, 2)
        nb = cfg.total_bws
        led.register_flat(
            "lrf",
            access_energy(p, cfg.lrf_size, 64, 2, 2),
            nb * cfg.lrf_size * 64 * p.leak_pj_per_bit_cycle,
        )
        led.register_flat(
            "grf",
            grf_segment_access_pj(p, cfg.grf_segments),
            cfg.n_phys_regs * 64 * p.leak_pj_per_bit_cycle,
        )
        led.register_flat(
            "iq",
            access_energy(p, cfg.iq_size, 150, 1, 1),
            nb * cfg.iq_size * 150 * p.leak_pj_per_bit_cycle,
        )
        led.register_flat(
            "hb",
            access_energy(p, cfg.hb_size, 220, 2, 2),
            nb * cfg.hb_size * 220 * p.leak_pj_per_bit_cycle,
        )
        led.register_table("brob", cfg.brob_entries, 88, 2, 2)
        led.register_flat("eu", 0.0)
        led.register_flat("stage_ff", p.ff_pj_per_instr_stage)

        # Physical register file with per-segment free lists; the committed
        # map starts as the identity over the architectural range.
        n = cfg.n_phys_regs
        s = cfg.grf_segments
        self.grf_val = [0] * n
        self.grf_ready = [0] * n
        self.grf_cluster = [-1] * n
        self.phys_state = [FREE] * n
        self.seg_of_phys = [i * s // n for i in range(n)]
        self.seg_free: list[list[int]] = [[] for _ in range(s)]
        self.spec_map = list(range(cfg.n_arch_regs))
        self.committed_map = list(range(cfg.n_arch_regs))
        for i in range(cfg.n_arch_regs):
            self.phys_state[i] = ARCH
            self.grf_val[i] = program.reg_init.get(i, 0)
        for i in range(cfg.n_arch_regs, n):
            self.seg_free[self.seg_of_phys[i]].append(i)
        self.free_count = n - cfg.n_arch_regs

        self.bws = [
            BlockWindow(i, i // cfg.bws_per_cluster, cfg.lrf_size) for i in range(nb)
        ]
        self.free_bws = list(range(nb))
        self.alloc_rotor = 0
        self.brob: deque[DynBlock] = deque()
        self.blocks_by_sn: dict[int, DynBlock] = {}

        self.fetched_latch: list[tuple[DynBlock, Instruction]] | None = None
        self.decoded_latch: list[tuple[DynBlock, Instruction]] | None = None
        self.renamed_latch: list[DynOp] | None = None
        self.bpu_requests: deque[tuple[DynBlock, int]] = deque()
        self.bpb: deque[BpbEntry] = deque([BpbEntry(pc=0, push_cycle=0)])
        self.unknown_entries: dict[int, BpbEntry] = {}
        self.cur_block: DynBlock | None = None
        self.fpos = 0
        self.next_adjacent: int | None = None
        self.next_sn = 1
        self.fetch_stopped = False
        self.fetch_hold_drain = False

        self.wb_events: dict[int, list[tuple[DynBlock, DynOp]]] = {}
        self.resolutions: dict[int, list] = {}
        self.squash_events: list[SquashEvent] = []
        self.freed_bws: list[BlockWindow] = []
        self.spec_callstack: list[int] = []
        self.committed_callstack: list[int] = []
        self.committed_sns: list[int] = []
        self.done = False

    # ------------------------------------------------------------- helpers

    def _emit(self, event: str, **kw):
        if self.trace is not None:
            rec = {"cycle": self.cycle, "event": event}
            rec.update(kw)
            self.trace.append(rec)

    def _alloc_phys(self, bw: BlockWindow) -> int | None:
        if self.free_count == 0:
            return None
        s = len(self.seg_free)
        pref = bw.bw_id * s // len(self.bws)
        for k in range(s):
            fl = self.seg_free[(pref + k) % s]
            if fl:
                self.free_count -= 1
                p = fl.pop(0)
                self.phys_state[p] = SPEC
                self.grf_ready[p] = PENDING
                return p
        raise AssertionError("free count out of sync")

    def _free_phys(self, p: int):
        self.phys_state[p] = FREE
        self.seg_free[self.seg_of_phys[p]].append(p)
        self.free_count += 1

    def _ready(self, op: DynOp, bw: BlockWindow) -> bool:
        c = self.cycle
        for scope, idx in op.srcs:
            if scope == GLOBAL:
                r = self.grf_ready[idx]
                cl = self.grf_cluster[idx]
                if cl >= 0 and cl != bw.cluster:
                    r += 1  # cross-cluster forwarding costs a cycle
                if r > c:
                    return False
            else:
                if bw.lrf_ready[idx] > c:
                    return False
        return True

    def _read_value(self, desc: tuple[str, int], bw: BlockWindow) -> int:
        scope, idx = desc
        if scope == GLOBAL:
            return self.grf_val[idx]
        return bw.lrf_val[idx]

    @staticmethod
    def _dep(op: DynOp, older: DynOp) -> bool:
        od, nd = older.dest, op.dest
        if od is not None and od in op.srcs:
            return True  # true dependence
        if nd is not None and (nd in older.srcs or nd == od):
            return True  # anti / output dependence
        return False

    # -------------------------------------------------------------- stages

    def step(self):
        self.cycle += 1
        self.commit_stage()
        self.writeback_stage()
        self.issue_stage()
        self.dispatch_stage()
        self.refill_hbs()
        self.rename_stage()
        self.decode_stage()
        self.bpu_stage()
        self.fetch_stage()
        self.end_of_cycle()
        self.ledger.tick()

    def commit_stage(self):
        committed = 0
        while self.brob and committed < self.cfg.block_commit_width:
            blk = self.brob[0]
            if not blk.completed:
                break
            self.brob.popleft()
            blk.in_brob = False
            self.ledger.charge("brob")
            for arch, _old, new in blk.gw:
                prev = self.committed_map[arch]
                self._free_phys(prev)
                self.committed_map[arch] = new
                self.phys_state[new] = ARCH
            self.lsu.retire_stores(blk.sn)
            self.lsu.retire_loads(blk.sn)
            if blk.ctrl_op == "call":
                self.committed_callstack.append(blk.head_pc + blk.meta.fall_through_offset)
            elif blk.ctrl_op == "ret":
                popped = self.committed_callstack.pop() if self.committed_callstack else None
                assert popped == blk.ret_target, "speculative call stack diverged"
            del self.blocks_by_sn[blk.sn]
            self.bpu.retire_records(blk.sn + 1)
            self.committed_sns.append(blk.sn)
            self.stats.blocks_committed += 1
            self.stats.instructions += blk.meta.blk_size
            self._emit("commit_block", sn=blk.sn, pc=blk.head_pc)
            if blk.is_halt:
                self.done = True
            committed += 1

    def writeback_stage(self):
        hb_tag_bits = 2 * 8  # two source ids per entry
        for blk, op in self.wb_events.pop(self.cycle, ()):
            if blk.squashed:
                continue  # wrong-path write-backs are dropped
            blk.remaining -= 1
            self.ledger.charge("brob")
            dest = op.dest
            if dest is not None:
                if dest[0] == GLOBAL:
                    self.ledger.charge("grf")
                    self.ledger.charge_wire("wire", 64, self.ledger.params.wire_mm_local)
                    if self.cfg.clusters > 1:
                        self.ledger.charge_wire(
                            "wire", 64, self.ledger.params.wire_mm_cross,
                            n=self.cfg.clusters - 1,
                        )
                    compares = sum(len(bw.hb) for bw in self.bws)
                    if compares:
                        self.ledger.charge_cam("hb_wakeup", compares, hb_tag_bits)
                        self.stats.wakeup_compares += compares
                else:
                    bw = blk.bw
                    if bw is not None and bw.block is blk:
                        self.ledger.charge("lrf")
                        compares = len(bw.hb)
                        if compares:
                            self.ledger.charge_cam("hb_wakeup", compares, hb_tag_bits)
                            self.stats.wakeup_compares += compares
            if blk.remaining == 0:
                blk.completed = True

    def issue_stage(self):
        epb = self.cfg.eus_per_cluster
        for c in range(self.cfg.clusters):
            nominations = []
            for bw in self.bws[c * self.cfg.bws_per_cluster : (c + 1) * self.cfg.bws_per_cluster]:
                if bw.block is None or not bw.hb:
                    continue
                op = self._select(bw)
                if op is not None:
                    nominations.append((bw.block.sn, bw, op))
            nominations.sort(key=lambda t: t[0])
            for _sn, bw, op in nominations[:epb]:
                self._issue(bw, op)
        for bw in self.bws:
            blk = bw.block
            if blk is not None and not bw.iq and not bw.hb and blk.dispatched == blk.meta.blk_size:
                self.freed_bws.append(bw)
                blk.bw = None
                bw.block = None

    def _select(self, bw: BlockWindow) -> DynOp | None:
        hb = bw.hb
        for i, op in enumerate(hb):
            if i:
                self.ledger.charge_cam("hb_depcheck", i, 2 * 8)
            if not self._ready(op, bw):
                continue
            blocked = False
            for j in range(i):
                if self._dep(op, hb[j]):
                    blocked = True
                    break
                if op.ins.is_mem and hb[j].ins.is_mem:
                    blocked = True  # memory ops stay ordered within a window
                    break
            if blocked:
                continue
            if op.ins.is_load and self.lsu.lq_full():
                continue
            if op.ins.is_store and self.lsu.sq_full():
                continue
            return op
        return None

    def _issue(self, bw: BlockWindow, op: DynOp):
        blk = bw.block
        ins = op.ins
        c = self.cycle
        bw.hb.remove(op)
        blk.issued_positions.append(op.pos)
        self.ledger.charge_pj("eu", eu_energy_pj(self.ledger.params, ins.op))
        lat = ins.latency

        if ins.op in ("beq", "bne", "blt"):
            a = self._read_value(op.srcs[0], bw)
            b = self._read_value(op.srcs[1], bw)
            taken = branch_taken(ins.op, a, b)
            target = ins.target if taken else blk.head_pc + blk.meta.fall_through_offset
            self.resolutions.setdefault(c + lat, []).append((blk, op, taken, target))
        elif ins.op == "jmp":
            self.resolutions.setdefault(c + lat, []).append((blk, op, True, ins.target))
        elif ins.op == "call":
            self.resolutions.setdefault(c + lat, []).append((blk, op, True, ins.target))
        elif ins.op == "ret":
            self.resolutions.setdefault(c + lat, []).append((blk, op, True, blk.ret_target))
        elif ins.op == "lw":
            base = self._read_value(op.srcs[0], bw)
            addr = mem_addr(base, ins.imm)
            val, lat = self.lsu.execute_load((blk.sn, op.pos), addr)
            self._write_dest(op, bw, val, c + lat)
        elif ins.op == "sw":
            data = self._read_value(op.srcs[0], bw)
            base = self._read_value(op.srcs[1], bw)
            addr = mem_addr(base, ins.imm)
            conflict = self.lsu.execute_store((blk.sn, op.pos), addr, data)
            if conflict is not None:
                victim = self.blocks_by_sn[conflict.target_block_sn]
                self.squash_events.append(
                    SquashEvent(
                        kind="memory",
                        target_sn=victim.sn,
                        restart_pc=victim.head_pc,
                        victim_load_pos=conflict.load_key[1],
                    )
                )
        elif ins.op != "nop":
            if ins.op == "li":
                val = ins.imm & ((1 << 64) - 1)
            else:
                a = self._read_value(op.srcs[0], bw)
                if len(op.srcs) > 1:
                    b = self._read_value(op.srcs[1], bw)
                else:
                    b = (ins.imm & ((1 << 64) - 1)) if ins.imm is not None else 0
                val = alu_result(ins.op, a, b)
            self._write_dest(op, bw, val, c + lat)

        self.wb_events.setdefault(c + lat + 1, []).append((blk, op))
        self._emit("issue", sn=blk.sn, seq=ins.seq_id, pc=ins.pc, op=ins.op)

    def _write_dest(self, op: DynOp, bw: BlockWindow, val: int, ready_at: int):
        dest = op.dest
        if dest is None:
            return
        scope, idx = dest
        if scope == GLOBAL:
            self.grf_val[idx] = val
            self.grf_ready[idx] = ready_at
            self.grf_cluster[idx] = bw.cluster
        else:
            bw.lrf_val[idx] = val
            bw.lrf_ready[idx] = ready_at

    def dispatch_stage(self):
        latch = self.renamed_latch
        if not latch:
            self.renamed_latch = None
            return
        target_bw = None
        n = 0
        for op in latch:
            bw = op.block.bw
            if target_bw is None:
                target_bw = bw
            elif bw is not target_bw:
                break  # one window receives instructions per cycle
            if len(bw.iq) >= self.cfg.iq_size:
                break
            bw.iq.append(op)
            self.ledger.charge("iq")
            self.ledger.charge("stage_ff")
            op.block.dispatched += 1
            if op.block.dispatched == 1:
                self._emit("bw_first_dispatch", sn=op.block.sn, bw=bw.bw_id, seq=op.ins.seq_id)
            n += 1
        self.renamed_latch = latch[n:] if n < len(latch) else None

    def refill_hbs(self):
        params = self.ledger.params
        for bw in self.bws:
            while bw.iq and len(bw.hb) < self.cfg.hb_size:
                op = bw.iq.popleft()
                bw.hb.append(op)
                self.ledger.charge("iq")
                self.ledger.charge("hb")
                # Operands already available are read from the register files
                # on entry; later ones arrive over the forwarding network.
                if not op.charged_reads:
                    op.charged_reads = True
                    for scope, idx in op.srcs:
                        if scope == GLOBAL:
                            if self.grf_ready[idx] <= self.cycle:
                                self.ledger.charge("grf")
                                self.ledger.charge_wire("wire", 64, params.wire_mm_local)
                        else:
                            if bw.lrf_ready[idx] <= self.cycle:
                                self.ledger.charge("lrf")
                                self.ledger.charge_wire("wire", 64, params.wire_mm_local)

    def rename_stage(self):
        if self.decoded_latch is None or self.renamed_latch is not None:
            return
        latch = self.decoded_latch
        out: list[DynOp] = []
        n = 0
        for blk, ins in latch:
            if ins.op == "head":
                if not self.free_bws or len(self.brob) >= self.cfg.brob_entries:
                    break
                bw = self._alloc_bw()
                blk.bw = bw
                bw.block = blk
                bw.reset_lrf()
                blk.remaining = blk.meta.blk_size
                self.brob.append(blk)
                blk.in_brob = True
                self.blocks_by_sn[blk.sn] = blk
                self.ledger.charge("brob")
                self._emit("alloc_bw", sn=blk.sn, bw=bw.bw_id, pc=blk.head_pc)
            else:
                needs_phys = ins.dest is not None and ins.dest.scope == GLOBAL
                if needs_phys and self.free_count == 0:
                    break  # free list empty: dispatch back-pressure
                out.append(self._rename_op(blk, ins))
            n += 1
        self.decoded_latch = latch[n:] if n < len(latch) else None
        self.renamed_latch = out or None

    def _alloc_bw(self) -> BlockWindow:
        # Round-robin across clusters for load balance.
        nclusters = self.cfg.clusters
        for k in range(nclusters):
            cl = (self.alloc_rotor + k) % nclusters
            for bw_id in self.free_bws:
                if self.bws[bw_id].cluster == cl:
                    self.free_bws.remove(bw_id)
                    self.alloc_rotor = (cl + 1) % nclusters
                    return self.bws[bw_id]
        raise AssertionError("no free window despite availability check")

    def _rename_op(self, blk: DynBlock, ins: Instruction) -> DynOp:
        srcs: list[tuple[str, int]] = []
        for r in ins.srcs:
            if r.scope == GLOBAL:
                srcs.append((GLOBAL, self.spec_map[r.idx]))
                self.ledger.charge("rename")
                self.stats.rename_accesses += 1
            else:
                srcs.append((r.scope, r.idx))
                self.stats.rename_skipped += 1
        dest = None
        if ins.dest is not None:
            r = ins.dest
            if r.scope == GLOBAL:
                p = self._alloc_phys(blk.bw)
                old = self.spec_map[r.idx]
                blk.gw.append((r.idx, old, p))
                if len(blk.gw) > 8:
                    raise SimError("block exceeds the global-write cap; compile it first")
                self.spec_map[r.idx] = p
                dest = (GLOBAL, p)
                self.ledger.charge("rename")
                self.stats.rename_accesses += 1
            else:
                dest = (r.scope, r.idx)
                self.stats.rename_skipped += 1
        if ins.is_ctrl:
            blk.ctrl_op = ins.op
            if ins.op == "call":
                self.spec_callstack.append(ins.pc + 1)
                blk.cs_undo = ("call",)
            elif ins.op == "ret":
                if self.spec_callstack:
                    blk.ret_target = self.spec_callstack.pop()
                    blk.cs_undo = ("ret", blk.ret_target)
                else:
                    blk.ret_target = None
                    blk.is_halt = True
                    blk.cs_undo = ("ret", None)
        pos = ins.pc - blk.head_pc - 1
        self.ledger.charge("stage_ff")
        return DynOp(ins, blk, pos, srcs, dest)

    def decode_stage(self):
        if self.fetched_latch is None or self.decoded_latch is not None:
            return
        group = self.fetched_latch
        self.fetched_latch = None
        out = []
        for gi, (blk, ins) in enumerate(group):
            self.ledger.charge("stage_ff")
            if ins.op == "head":
                self.bpu_requests.append((blk, self.cycle))
            elif ins.is_ctrl and blk.sn in self.unknown_entries:
                entry = self.unknown_entries.pop(blk.sn)
                target = ins.target  # None for ret: nothing to reconcile
                if target is not None:
                    if entry.rec is not None:
                        entry.rec.followed_target = target
                    if entry.consumed_unknown:
                        # Fetch already ran past on the fall-through
                        # assumption: redirect it and drop the wrong tail.
                        out.append((blk, ins))
                        self._kill_front_blocks(blk.sn)
                        self.cur_block = None
                        self.next_adjacent = None
                        self.bpb.append(BpbEntry(pc=target, push_cycle=self.cycle - 1))
                        self.decoded_latch = out
                        return
                    entry.pc = target
            out.append((blk, ins))
        self.decoded_latch = out

    def _kill_front_blocks(self, after_sn: int):
        """Front-end-only kill of blocks younger than after_sn (pre-rename)."""
        if self.fetched_latch is not None:
            self.fetched_latch = [e for e in self.fetched_latch if e[0].sn <= after_sn] or None
        self.bpu_requests = deque(
            (b, cyc) for b, cyc in self.bpu_requests if b.sn <= after_sn
        )
        self.bpb = deque(e for e in self.bpb if e.src_block is None or e.src_block.sn <= after_sn)
        for sn in [s for s in self.unknown_entries if s > after_sn]:
            del self.unknown_entries[sn]
        # Killed blocks may already have predicted their successors; their
        # speculative history must unwind with them.
        self.bpu.unwind_from(after_sn + 1)

    def bpu_stage(self):
        while self.bpu_requests and self.bpu_requests[0][1] < self.cycle:
            if len(self.bpb) >= self.cfg.block_pc_buffer:
                break
            blk, _cyc = self.bpu_requests.popleft()
            if blk.squashed:
                continue
            if blk.meta.has_ctrl:
                rec, target = self.bpu.predict_block(blk.sn, blk.head_pc, blk.meta)
                blk.pred_rec = rec
                entry = BpbEntry(pc=target, push_cycle=self.cycle, rec=rec, src_block=blk)
                if target is None:
                    self.unknown_entries[blk.sn] = entry
                self._emit("predict", sn=blk.sn, pc=blk.head_pc, target=target)
            else:
                target = blk.head_pc + blk.meta.fall_through_offset
                entry = BpbEntry(pc=target, push_cycle=self.cycle, src_block=blk)
                self._emit("predict", sn=blk.sn, pc=blk.head_pc, target=target, free=True)
            self.bpb.append(entry)

    def fetch_stage(self):
        if self.fetch_stopped or (self.fetch_hold_drain and self.brob):
            return
        if self.fetched_latch is not None:
            return  # decode is backed up
        group: list[tuple[DynBlock, Instruction]] = []
        budget = self.cfg.fetch_width
        while budget > 0:
            if self.cur_block is None:
                if not self.bpb or self.bpb[0].push_cycle >= self.cycle:
                    break
                entry = self.bpb[0]
                pc = entry.pc
                if pc is None:
                    assert self.next_adjacent is not None
                    pc = self.next_adjacent
                if group and pc != self.next_adjacent:
                    break  # non-adjacent target: the group ends here
                self.bpb.popleft()
                if entry.pc is None:
                    entry.consumed_unknown = True
                    if entry.rec is not None:
                        entry.rec.followed_target = pc
                if pc == self.program.n_slots:
                    self.fetch_stopped = True  # ran off the end of the program
                    break
                if pc not in self.program.block_at_head:
                    break  # bogus wrong-path target; wait for the squash
                meta = self.program.blocks[self.program.block_at_head[pc]].head.meta
                blk = DynBlock(sn=self.next_sn, head_pc=pc, meta=meta)
                self.next_sn += 1
                self.cur_block = blk
                self.fpos = pc
            ins = self.program.slots[self.fpos]
            group.append((self.cur_block, ins))
            self._emit("fetch", sn=self.cur_block.sn, seq=ins.seq_id, pc=self.fpos, op=ins.op)
            self.fpos += 1
            budget -= 1
            end = self.cur_block.head_pc + self.cur_block.meta.fall_through_offset
            if self.fpos >= end:
                self.next_adjacent = end
                self.cur_block = None
        if group:
            self.fetched_latch = group
            self.ledger.charge("icache")
            self.stats.fetch_groups += 1
        else:
            self.stats.fetch_stall_cycles += 1

    # ------------------------------------------------------ end of cycle

    def end_of_cycle(self):
        for blk, op, taken, target in self.resolutions.pop(self.cycle, ()):
            if blk.squashed:
                continue
            assert op.ins.pc - blk.meta.ctrl_offset == blk.head_pc
            blk.outcome = (op.ins.op, taken, target)

        # Memory-order squashes apply immediately (correctness), oldest first.
        if self.squash_events:
            ev = min(self.squash_events, key=lambda e: e.target_sn)
            self.squash_events.clear()
            self._apply_squash(ev)

        # Control outcomes apply in block order: a younger branch waits for
        # every older control block, so wrong-path resolutions never touch
        # the predictor (the squash that kills them always lands first).
        for blk in list(self.brob):
            if not blk.meta.has_ctrl or blk.ctrl_applied:
                continue
            if blk.outcome is None:
                break
            kind, taken, target = blk.outcome
            rec = blk.pred_rec
            assert rec is not None, "control block resolved without a prediction"
            blk.ctrl_applied = True
            if rec.followed_target != target or rec.pred_taken != taken:
                self._apply_squash(
                    SquashEvent(
                        kind="control",
                        target_sn=blk.sn + 1,
                        restart_pc=target,
                        resolving=(rec, kind, taken, target),
                    )
                )
                break
            self.bpu.resolve(rec, kind, taken, target)

        for bw in self.freed_bws:
            self.free_bws.append(bw.bw_id)
            self._emit("bw_available", bw=bw.bw_id, from_cycle=self.cycle + 1)
        if self.freed_bws:
            self.free_bws.sort()
            self.freed_bws = []
        if self.fetch_hold_drain and not self.brob:
            self.fetch_hold_drain = False

    def _apply_squash(self, ev: SquashEvent):
        t = ev.target_sn
        if ev.kind == "memory":
            self.stats.memory_squashes += 1
            victim = self.blocks_by_sn.get(t)
            if victim is not None and ev.victim_load_pos is not None:
                self.stats.wasted_squash_ops += sum(
                    1 for p in victim.issued_positions if p < ev.victim_load_pos
                )
        else:
            self.stats.control_squashes += 1

        # (a) front end: wrong-path fetch state and speculative history.
        if self.fetched_latch is not None:
            self.fetched_latch = [e for e in self.fetched_latch if e[0].sn < t] or None
        if self.decoded_latch is not None:
            self.decoded_latch = [e for e in self.decoded_latch if e[0].sn < t] or None
        if self.renamed_latch is not None:
            self.renamed_latch = [o for o in self.renamed_latch if o.block.sn < t] or None
        self.bpu_requests = deque((b, c) for b, c in self.bpu_requests if b.sn < t)
        self.bpb.clear()
        self.unknown_entries.clear()
        self.cur_block = None
        self.bpu.unwind_from(t)
        if ev.resolving is not None:
            rec, kind, taken, target = ev.resolving
            self.bpu.resolve(rec, kind, taken, target)
        if ev.restart_pc is not None:
            self.bpb.append(BpbEntry(pc=ev.restart_pc, push_cycle=self.cycle))
            self.next_adjacent = None
            self.fetch_stopped = False
        else:
            self.fetch_stopped = True
        if ev.kind == "control" and self.cfg.squash_drain_first:
            self.fetch_hold_drain = True

        # (b) block windows.
        for bw in self.bws:
            blk = bw.block
            if blk is not None and blk.sn >= t:
                bw.iq.clear()
                bw.hb.clear()
                bw.reset_lrf()
                bw.block = None
                blk.bw = None
                if bw.bw_id not in self.free_bws and bw not in self.freed_bws:
                    self.free_bws.append(bw.bw_id)
        self.free_bws.sort()

        # (c) load/store queues.
        self.lsu.flush_from(t)

        # (d) block reorder buffer, rename map, and call-stack rollback.
        while self.brob and self.brob[-1].sn >= t:
            blk = self.brob.pop()
            blk.in_brob = False
            blk.squashed = True
            for arch, old, new in reversed(blk.gw):
                self.spec_map[arch] = old
                self._free_phys(new)
            if blk.cs_undo is not None:
                kind = blk.cs_undo[0]
                if kind == "call":
                    self.spec_callstack.pop()
                elif blk.cs_undo[1] is not None:
                    self.spec_callstack.append(blk.cs_undo[1])
            del self.blocks_by_sn[blk.sn]
        # Mark latch-only blocks (never allocated) squashed for bookkeeping.
        self._emit("squash", kind=ev.kind, target_sn=t, restart=ev.restart_pc)

    # ----------------------------------------------------------------- run

    def run(self, max_cycles: int = 1_000_000) -> RunStats:
        while not self.done:
            if self.cycle >= max_cycles:
                raise SimError(f"no forward progress after {max_cycles} cycles")
            self.step()
            if (
                not self.brob
                and self.fetched_latch is None
                and self.decoded_latch is None
                and self.renamed_latch is None
                and not self.bpu_requests
                and not self.wb_events
                and not self.resolutions
                and (self.fetch_stopped or (not self.bpb and self.cur_block is None))
            ):
                break
        self.stats.cycles = self.cycle
        self.stats.bpu_lookups = self.bpu.lookups
        self.stats.bpu_hits = self.bpu.hits
        self.stats.bpu_mispredicts = self.bpu.mispredicts
        self.stats.cache_hits = dict(self.lsu.cache.hits)
        self.stats.finalize_energy(self.ledger)
        return self.stats

    def arch_state(self) -> ArchState:
        vals = [self.grf_val[self.committed_map[i]] for i in range(self.cfg.n_arch_regs)]
        return ArchState(globals_=vals, memory=dict(self.lsu.mem))
