"""Baseline in-order core: short pipeline, FIFO issue queue, scoreboard.

Head-of-queue blocking by construction: issue walks the FIFO front in order
and stops at the first op whose operands (or destination, for WAW) are not
ready. Control ops act as an issue barrier, so nothing issues speculatively
past an unresolved branch and recovery only refills the short front end.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .bpu import Bpu, PredRecord
from .config import CoreConfig
from .energy import EnergyLedger, eu_energy_pj
from .isa import Instruction, Program, alu_result, branch_taken, mem_addr
from .memsys import Lsu
from .stats import ArchState, RunStats


class SimError(Exception):
    pass


@dataclass
class InoOp:
    sn: int
    ins: Instruction
    pred_rec: PredRecord | None = None


class InOrderCore:
    def __init__(self, program: Program, cfg: CoreConfig, ledger: EnergyLedger | None = None,
                 trace: list | None = None):
        if not program.bare:
            raise SimError("baseline cores run bare (lowered) programs")
        self.program = program
        self.cfg = cfg
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.trace = trace
        self.cycle = 0
        self.stats = RunStats(core="ino", cycles=0, instructions=0, config=cfg.to_dict())

        led = self.ledger
        p = led.params
        led.register_flat("icache", p.icache_pj, p.icache_leak_pj_cycle)
        self.bpu = Bpu(cfg, led)
        self.lsu = Lsu(cfg, led, program.mem_init, speculative=False)
        led.register_table("fifo", cfg.ino_iq, 150, 1, 1)
        led.register_table("rf", cfg.ino_rf_entries, 64, 4, 2)
        led.register_flat("eu", 0.0)
        led.register_flat("stage_ff", p.ff_pj_per_instr_stage)

        self.rf_val = [0] * cfg.ino_rf_entries
        self.rf_ready = [0] * cfg.ino_rf_entries
        for i, v in program.reg_init.items():
            self.rf_val[i] = v

        self.fifo: deque[InoOp] = deque()
        self.fetched_latch: list[InoOp] | None = None
        self.fpos: int | None = 0
        self.fetch_stopped = False
        self.next_sn = 1

        self.ctrl_inflight: InoOp | None = None
        self.loads_inflight = 0
        self.stores_inflight = 0
        self.mem_inflight = 0
        self.wb_events: dict[int, list[tuple[InoOp, int | None, int]]] = {}
        self.resolutions: dict[int, list] = {}
        self.call_stack: list[int] = []
        self.done = False
        self.halting = False

    def _emit(self, event: str, **kw):
        if self.trace is not None:
            rec = {"cycle": self.cycle, "event": event}
            rec.update(kw)
            self.trace.append(rec)

    def step(self):
        self.cycle += 1
        self.writeback_stage()
        self.issue_stage()
        self.decode_stage()
        self.fetch_stage()
        self.end_of_cycle()
        self.ledger.tick()

    def writeback_stage(self):
        for op, dest, _val in self.wb_events.pop(self.cycle, ()):
            if dest is not None:
                self.ledger.charge("rf")
            if op.ins.is_store:
                self.lsu.retire_stores(op.sn)
                self.stores_inflight -= 1
                self.mem_inflight -= 1
            if op.ins.is_load:
                self.lsu.retire_loads(op.sn)
                self.loads_inflight -= 1
                self.mem_inflight -= 1
            self.stats.instructions += 1
            if self.halting and op.ins.op == "ret":
                self.done = True

    def issue_stage(self):
        issued = 0
        while self.fifo and issued < self.cfg.eus_per_cluster * self.cfg.clusters:
            if self.ctrl_inflight is not None:
                break  # barrier: resolve the branch first
            op = self.fifo[0]
            ins = op.ins
            if not self._ready(ins):
                break  # head-of-queue blocking
            self.fifo.popleft()
            self._execute(op)
            issued += 1
            if ins.is_ctrl:
                break

    def _ready(self, ins: Instruction) -> bool:
        c = self.cycle
        for r in ins.srcs:
            if self.rf_ready[r.idx] > c:
                return False
        if ins.dest is not None and self.rf_ready[ins.dest.idx] > c:
            return False  # WAW stall
        if ins.is_load and (self.stores_inflight or self.lsu.lq_full()):
            return False
        if ins.is_store and (self.mem_inflight or self.lsu.sq_full()):
            return False
        return True

    def _execute(self, op: InoOp):
        ins = op.ins
        c = self.cycle
        vals = [self.rf_val[r.idx] for r in ins.srcs]
        for _ in ins.srcs:
            self.ledger.charge("rf")
        self.ledger.charge_pj("eu", eu_energy_pj(self.ledger.params, ins.op))
        lat = ins.latency
        dest = None
        val = 0

        if ins.op in ("beq", "bne", "blt"):
            taken = branch_taken(ins.op, vals[0], vals[1])
            target = ins.target if taken else ins.pc + 1
            self.ctrl_inflight = op
            self.resolutions.setdefault(c + lat, []).append((op, taken, target))
        elif ins.op in ("jmp", "call"):
            if ins.op == "call":
                self.call_stack.append(ins.pc + 1)
            self.ctrl_inflight = op
            self.resolutions.setdefault(c + lat, []).append((op, True, ins.target))
        elif ins.op == "ret":
            target = self.call_stack.pop() if self.call_stack else None
            if target is None:
                self.halting = True
            self.ctrl_inflight = op
            self.resolutions.setdefault(c + lat, []).append((op, True, target))
        elif ins.op == "lw":
            addr = mem_addr(vals[0], ins.imm)
            val, lat = self.lsu.execute_load((op.sn, 0), addr)
            dest = ins.dest.idx
            self.loads_inflight += 1
            self.mem_inflight += 1
        elif ins.op == "sw":
            addr = mem_addr(vals[1], ins.imm)
            conflict = self.lsu.execute_store((op.sn, 0), addr, vals[0])
            assert conflict is None
            self.stores_inflight += 1
            self.mem_inflight += 1
        elif ins.op != "nop":
            if ins.op == "li":
                val = ins.imm & ((1 << 64) - 1)
            else:
                a = vals[0]
                b = vals[1] if len(vals) > 1 else ((ins.imm or 0) & ((1 << 64) - 1))
                val = alu_result(ins.op, a, b)
            dest = ins.dest.idx

        if dest is not None:
            # Value lands now (forwarding); the ready cycle gates consumers.
            self.rf_val[dest] = val
            self.rf_ready[dest] = c + lat
        self.wb_events.setdefault(c + lat + 1, []).append((op, dest, val))
        self._emit("issue", sn=op.sn, seq=ins.seq_id, pc=ins.pc, op=ins.op)

    def decode_stage(self):
        if self.fetched_latch is None:
            return
        if len(self.fifo) + len(self.fetched_latch) > self.cfg.ino_iq:
            return  # FIFO back-pressure
        for op in self.fetched_latch:
            self.fifo.append(op)
            self.ledger.charge("fifo")
            self.ledger.charge("stage_ff")
        self.fetched_latch = None

    def fetch_stage(self):
        if self.fetch_stopped or self.fetched_latch is not None or self.fpos is None:
            return
        group: list[InoOp] = []
        pos = self.fpos
        for _ in range(self.cfg.fetch_width):
            if pos is None or pos >= self.program.n_slots:
                if pos == self.program.n_slots:
                    self.fetch_stopped = True
                break
            ins = self.program.slots[pos]
            op = InoOp(sn=self.next_sn, ins=ins)
            self.next_sn += 1
            group.append(op)
            if ins.is_ctrl:
                rec, target = self.bpu.predict_ctrl(op.sn, ins)
                op.pred_rec = rec
                if rec.pred_taken and target is not None:
                    pos = target
                    break
                if target is None:
                    rec.followed_target = pos + 1
                pos += 1
            else:
                pos += 1
        self.fpos = pos
        if group:
            self.fetched_latch = group
            self.bpu.charge_group_lookup()
            self.ledger.charge("icache")
            self.stats.fetch_groups += 1
        else:
            self.stats.fetch_stall_cycles += 1

    def end_of_cycle(self):
        for op, taken, target in self.resolutions.pop(self.cycle, ()):
            rec = op.pred_rec
            assert self.ctrl_inflight is op
            self.ctrl_inflight = None
            mispredicted = rec.followed_target != target or rec.pred_taken != taken
            if mispredicted:
                self.bpu.unwind_from(op.sn + 1)  # before resolve fixes history
            self.bpu.resolve(rec, op.ins.op, taken, target)
            if mispredicted:
                self.stats.control_squashes += 1
                self.fifo.clear()
                self.fetched_latch = None
                self.fpos = target
                self.fetch_stopped = target is None
                self._emit("squash", kind="control", target_sn=op.sn + 1, restart=target)

    def run(self, max_cycles: int = 2_000_000) -> RunStats:
        while not self.done:
            if self.cycle >= max_cycles:
                raise SimError(f"no forward progress after {max_cycles} cycles")
            self.step()
            if (
                not self.fifo
                and self.fetched_latch is None
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
        vals = list(self.rf_val[: self.cfg.n_arch_regs])
        return ArchState(globals_=vals, memory=dict(self.lsu.mem))
