"""Baseline out-of-order core: per-group prediction, full rename, a unified
RAM/CAM instruction window, and a per-op reorder buffer.

Shares the ISA, branch predictor, load/store unit, cache model, and energy
ledger with the block core; only the scheduling machinery differs. Loads are
conservative: a load issues only after every older store has executed, so
memory-order squashes cannot occur. Control outcomes apply in program order,
exactly as in the block core, so wrong-path resolutions never train the
predictor tables.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .bpu import Bpu, PredRecord
from .config import CoreConfig
from .energy import EnergyLedger, eu_energy_pj
from .isa import Instruction, Program, alu_result, branch_taken, mem_addr
from .memsys import Lsu
from .stats import ArchState, RunStats

PENDING = 1 << 62


class SimError(Exception):
    pass


@dataclass
class RobOp:
    sn: int
    ins: Instruction
    srcs: list[int] = field(default_factory=list)  # physical ids
    dest: tuple[int, int, int] | None = None  # (arch, old phys, new phys)
    issued: bool = False
    done: bool = False
    squashed: bool = False
    pred_rec: PredRecord | None = None
    ret_target: int | None = None
    is_halt: bool = False
    cs_undo: tuple | None = None
    outcome: tuple | None = None
    ctrl_applied: bool = False


class OooCore:
    def __init__(self, program: Program, cfg: CoreConfig, ledger: EnergyLedger | None = None,
                 trace: list | None = None):
        if not program.bare:
            raise SimError("baseline cores run bare (lowered) programs")
        self.program = program
        self.cfg = cfg
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.trace = trace
        self.cycle = 0
        self.stats = RunStats(core="ooo", cycles=0, instructions=0, config=cfg.to_dict())

        led = self.ledger
        p = led.params
        led.register_flat("icache", p.icache_pj, p.icache_leak_pj_cycle)
        self.bpu = Bpu(cfg, led)
        self.lsu = Lsu(cfg, led, program.mem_init, speculative=False)
        led.register_table("rename", cfg.n_arch_regs, 8, 2, 2)
        led.register_table("rf", cfg.n_phys_regs, 64, 8, 4)
        led.register_table("window", cfg.ooo_window, 150, 4, 4)
        led.register_table("rob", cfg.rob_entries, 88, 2, 2)
        led.register_flat("eu", 0.0)
        led.register_flat("stage_ff", p.ff_pj_per_instr_stage)

        n = cfg.n_phys_regs
        self.rf_val = [0] * n
        self.rf_ready = [0] * n
        self.free_list = list(range(cfg.n_arch_regs, n))
        self.spec_map = list(range(cfg.n_arch_regs))
        self.committed_map = list(range(cfg.n_arch_regs))
        for i in range(cfg.n_arch_regs):
            self.rf_val[i] = program.reg_init.get(i, 0)

        self.window: list[RobOp] = []
        self.rob: deque[RobOp] = deque()
        self.fetched_latch: list[RobOp] | None = None
        self.decoded_latch: list[RobOp] | None = None
        self.renamed_latch: list[RobOp] | None = None
        self.fpos: int | None = 0
        self.fetch_stopped = False
        self.next_sn = 1
        self.pending_stores: list[int] = []  # sns of renamed, unissued stores

        self.wb_events: dict[int, list[RobOp]] = {}
        self.resolutions: dict[int, list] = {}
        self.spec_callstack: list[int] = []
        self.committed_callstack: list[int] = []
        self.done = False

    def _emit(self, event: str, **kw):
        if self.trace is not None:
            rec = {"cycle": self.cycle, "event": event}
            rec.update(kw)
            self.trace.append(rec)

    # -------------------------------------------------------------- stages

    def step(self):
        self.cycle += 1
        self.commit_stage()
        self.writeback_stage()
        self.issue_stage()
        self.dispatch_stage()
        self.rename_stage()
        self.decode_stage()
        self.fetch_stage()
        self.end_of_cycle()
        self.ledger.tick()

    def commit_stage(self):
        committed = 0
        while self.rob and committed < self.cfg.fetch_width:
            op = self.rob[0]
            if not op.done:
                break
            self.rob.popleft()
            self.ledger.charge("rob")
            if op.dest is not None:
                arch, _old, new = op.dest
                prev = self.committed_map[arch]
                self.free_list.append(prev)
                self.committed_map[arch] = new
            if op.ins.is_store:
                self.lsu.retire_stores(op.sn)
            if op.ins.is_load:
                self.lsu.retire_loads(op.sn)
            if op.ins.op == "call":
                self.committed_callstack.append(op.ins.pc + 1)
            elif op.ins.op == "ret":
                popped = self.committed_callstack.pop() if self.committed_callstack else None
                assert popped == op.ret_target, "speculative call stack diverged"
            self.bpu.retire_records(op.sn + 1)
            self.stats.instructions += 1
            if op.is_halt:
                self.done = True
            committed += 1

    def writeback_stage(self):
        for op in self.wb_events.pop(self.cycle, ()):
            if op.squashed:
                continue
            op.done = True
            self.ledger.charge("rob")
            if op.dest is not None:
                self.ledger.charge("rf")
            compares = len(self.window)
            if compares:
                self.ledger.charge_cam("window_wakeup", compares, 2 * 8)
                self.stats.wakeup_compares += compares

    def issue_stage(self):
        ready = [op for op in self.window if self._ready(op)]
        ready.sort(key=lambda o: o.sn)
        for op in ready[: self.cfg.eus_per_cluster * self.cfg.clusters]:
            self.window.remove(op)
            self._execute(op)

    def _ready(self, op: RobOp) -> bool:
        c = self.cycle
        for p in op.srcs:
            if self.rf_ready[p] > c:
                return False
        if op.ins.is_load:
            if self.lsu.lq_full() or any(s < op.sn for s in self.pending_stores):
                return False
        if op.ins.is_store and self.lsu.sq_full():
            return False
        return True

    def _execute(self, op: RobOp):
        ins = op.ins
        c = self.cycle
        op.issued = True
        vals = [self.rf_val[p] for p in op.srcs]
        for _ in op.srcs:
            self.ledger.charge("rf")
        self.ledger.charge_pj("eu", eu_energy_pj(self.ledger.params, ins.op))
        lat = ins.latency

        if ins.op in ("beq", "bne", "blt"):
            taken = branch_taken(ins.op, vals[0], vals[1])
            target = ins.target if taken else ins.pc + 1
            self.resolutions.setdefault(c + lat, []).append((op, taken, target))
        elif ins.op in ("jmp", "call"):
            self.resolutions.setdefault(c + lat, []).append((op, True, ins.target))
        elif ins.op == "ret":
            self.resolutions.setdefault(c + lat, []).append((op, True, op.ret_target))
        elif ins.op == "lw":
            addr = mem_addr(vals[0], ins.imm)
            val, lat = self.lsu.execute_load((op.sn, 0), addr)
            self._write_dest(op, val, c + lat)
        elif ins.op == "sw":
            addr = mem_addr(vals[1], ins.imm)
            conflict = self.lsu.execute_store((op.sn, 0), addr, vals[0])
            assert conflict is None
            self.pending_stores.remove(op.sn)
        elif ins.op != "nop":
            if ins.op == "li":
                val = ins.imm & ((1 << 64) - 1)
            else:
                a = vals[0]
                b = vals[1] if len(vals) > 1 else ((ins.imm or 0) & ((1 << 64) - 1))
                val = alu_result(ins.op, a, b)
            self._write_dest(op, val, c + lat)

        self.wb_events.setdefault(c + lat + 1, []).append(op)
        self._emit("issue", sn=op.sn, seq=ins.seq_id, pc=ins.pc, op=ins.op)

    def _write_dest(self, op: RobOp, val: int, ready_at: int):
        if op.dest is not None:
            p = op.dest[2]
            self.rf_val[p] = val
            self.rf_ready[p] = ready_at

    def dispatch_stage(self):
        latch = self.renamed_latch
        if not latch:
            self.renamed_latch = None
            return
        n = 0
        for op in latch:
            if len(self.window) >= self.cfg.ooo_window:
                break
            self.window.append(op)
            self.ledger.charge("window")
            self.ledger.charge("stage_ff")
            n += 1
        self.renamed_latch = latch[n:] if n < len(latch) else None

    def rename_stage(self):
        if self.decoded_latch is None or self.renamed_latch is not None:
            return
        latch = self.decoded_latch
        out: list[RobOp] = []
        n = 0
        for op in latch:
            ins = op.ins
            if len(self.rob) >= self.cfg.rob_entries:
                break
            if ins.dest is not None and not self.free_list:
                break
            for r in ins.srcs:
                op.srcs.append(self.spec_map[r.idx])
                self.ledger.charge("rename")
                self.stats.rename_accesses += 1
            if ins.dest is not None:
                p = self.free_list.pop(0)
                old = self.spec_map[ins.dest.idx]
                op.dest = (ins.dest.idx, old, p)
                self.spec_map[ins.dest.idx] = p
                self.rf_ready[p] = PENDING
                self.ledger.charge("rename")
                self.stats.rename_accesses += 1
            if ins.is_store:
                self.pending_stores.append(op.sn)
            if ins.op == "call":
                self.spec_callstack.append(ins.pc + 1)
                op.cs_undo = ("call",)
            elif ins.op == "ret":
                if self.spec_callstack:
                    op.ret_target = self.spec_callstack.pop()
                    op.cs_undo = ("ret", op.ret_target)
                else:
                    op.ret_target = None
                    op.is_halt = True
                    op.cs_undo = ("ret", None)
            self.rob.append(op)
            self.ledger.charge("rob")
            out.append(op)
            n += 1
        self.decoded_latch = latch[n:] if n < len(latch) else None
        self.renamed_latch = out or None

    def decode_stage(self):
        if self.fetched_latch is None or self.decoded_latch is not None:
            return
        self.decoded_latch = self.fetched_latch
        self.fetched_latch = None
        for op in self.decoded_latch:
            self.ledger.charge("stage_ff")

    def fetch_stage(self):
        if self.fetch_stopped or self.fetched_latch is not None or self.fpos is None:
            return
        group: list[RobOp] = []
        pos = self.fpos
        for _ in range(self.cfg.fetch_width):
            if pos is None or pos >= self.program.n_slots:
                if pos == self.program.n_slots:
                    self.fetch_stopped = True
                break
            ins = self.program.slots[pos]
            op = RobOp(sn=self.next_sn, ins=ins)
            self.next_sn += 1
            group.append(op)
            self._emit("fetch", sn=op.sn, seq=ins.seq_id, pc=pos, op=ins.op)
            if ins.is_ctrl:
                rec, target = self.bpu.predict_ctrl(op.sn, ins)
                op.pred_rec = rec
                if rec.pred_taken and target is not None:
                    pos = target
                    break  # taken prediction ends the group
                if target is None:
                    rec.followed_target = pos + 1  # empty return stack: fall through
                pos += 1
            else:
                pos += 1
        self.fpos = pos
        if group:
            self.fetched_latch = group
            self.bpu.charge_group_lookup()  # one lookup before every fetch
            self.ledger.charge("icache")
            self.stats.fetch_groups += 1
        else:
            self.stats.fetch_stall_cycles += 1

    def end_of_cycle(self):
        for op, taken, target in self.resolutions.pop(self.cycle, ()):
            if op.squashed:
                continue
            op.outcome = (op.ins.op, taken, target)
        for op in list(self.rob):
            if not op.ins.is_ctrl or op.ctrl_applied:
                continue
            if op.outcome is None:
                break
            kind, taken, target = op.outcome
            rec = op.pred_rec
            op.ctrl_applied = True
            if rec.followed_target != target or rec.pred_taken != taken:
                self._squash_after(op, kind, taken, target)
                break
            self.bpu.resolve(rec, kind, taken, target)

    def _squash_after(self, op: RobOp, kind: str, taken: bool, target: int | None):
        self.stats.control_squashes += 1
        t = op.sn + 1
        self.fetched_latch = None
        self.decoded_latch = (
            [o for o in (self.decoded_latch or []) if o.sn < t] or None
        )
        self.renamed_latch = (
            [o for o in (self.renamed_latch or []) if o.sn < t] or None
        )
        self.window = [o for o in self.window if o.sn < t]
        while self.rob and self.rob[-1].sn >= t:
            victim = self.rob.pop()
            victim.squashed = True
            if victim.dest is not None:
                arch, old, new = victim.dest
                self.spec_map[arch] = old
                self.free_list.append(new)
            if victim.ins.is_store and not victim.issued:
                self.pending_stores.remove(victim.sn)
            if victim.cs_undo is not None:
                if victim.cs_undo[0] == "call":
                    self.spec_callstack.pop()
                elif victim.cs_undo[1] is not None:
                    self.spec_callstack.append(victim.cs_undo[1])
        self.lsu.flush_from(t)
        self.bpu.unwind_from(t)
        self.bpu.resolve(op.pred_rec, kind, taken, target)
        self.fpos = target
        self.fetch_stopped = target is None
        self._emit("squash", kind="control", target_sn=t, restart=target)

    # ----------------------------------------------------------------- run

    def run(self, max_cycles: int = 2_000_000) -> RunStats:
        while not self.done:
            if self.cycle >= max_cycles:
                raise SimError(f"no forward progress after {max_cycles} cycles")
            self.step()
            if (
                not self.rob
                and self.fetched_latch is None
                and self.decoded_latch is None
                and self.renamed_latch is None
                and not self.window
                and not self.wb_events
                and not self.resolutions
                and (self.fetch_stopped or self.fpos is None or self.fpos >= self.program.n_slots)
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
        vals = [self.rf_val[self.committed_map[i]] for i in range(self.cfg.n_arch_regs)]
        return ArchState(globals_=vals, memory=dict(self.lsu.mem))
