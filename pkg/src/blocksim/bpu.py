"""Hybrid branch prediction: gshare + bimodal + meta chooser, BTB, RAS.

One predictor serves both granularities: the block core indexes it by head
address and looks up once per block, the baselines index by control-op
address and charge one lookup per fetch group. Every prediction snapshots
the global history and return stack, so any squash restores the speculative
state exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import CoreConfig
from .energy import EnergyLedger
from .isa import HeadMeta, Instruction

UNCONDITIONAL = ("jmp", "call", "ret")


@dataclass
class PredRecord:
    uid: int
    pc: int  # table index address (head pc at block level, ctrl pc otherwise)
    ghr_before: int
    ras_before: list[int]
    used_tables: bool
    ghr_pushed: bool
    pred_taken: bool
    fall_through: int | None
    followed_target: int | None  # where fetch actually went next
    kind_hint: str | None
    resolved: bool = False


@dataclass
class BtbEntry:
    tag: int
    target: int
    kind: str


class Bpu:
    def __init__(self, cfg: CoreConfig, ledger: EnergyLedger):
        self.cfg = cfg
        self.ledger = ledger
        self.gshare = [1] * cfg.gshare_entries
        self.bimodal = [1] * cfg.bimodal_entries
        self.meta = [1] * cfg.meta_entries  # >=2 prefers gshare
        self.ghr = 0
        self.ghr_mask = (1 << cfg.ghist_bits) - 1
        self.btb_sets = cfg.btb_entries // cfg.btb_assoc
        self.btb: dict[int, list[BtbEntry]] = {}
        self.ras: list[int] = []
        self.records: list[PredRecord] = []
        self.lookups = 0
        self.hits = 0
        self.mispredicts = 0
        # Twin-run hook: an iterator of actual control outcomes makes every
        # block-level prediction follow the correct path while reading and
        # training the tables exactly as a normal run would.
        self.oracle_feed = None
        led = ledger
        p = led.params
        led.register_flat("bpu_gshare", p.bpu_dir_pj, cfg.gshare_entries * 2 * p.leak_pj_per_bit_cycle)
        led.register_flat("bpu_bimodal", p.bpu_dir_pj, cfg.bimodal_entries * 2 * p.leak_pj_per_bit_cycle)
        led.register_flat("bpu_meta", p.bpu_dir_pj, cfg.meta_entries * 2 * p.leak_pj_per_bit_cycle)
        led.register_flat("bpu_btb", p.btb_pj, cfg.btb_entries * 80 * p.leak_pj_per_bit_cycle)
        led.register_table("bpu_ras", cfg.ras_depth, 64, 1, 1)

    # --- table primitives ---

    def _dir_predict(self, pc: int) -> tuple[bool, int, int]:
        gi = (pc ^ self.ghr) % len(self.gshare)
        bi = pc % len(self.bimodal)
        mi = (pc ^ self.ghr) % len(self.meta)
        g_taken = self.gshare[gi] >= 2
        b_taken = self.bimodal[bi] >= 2
        taken = g_taken if self.meta[mi] >= 2 else b_taken
        return taken, gi, bi

    def _btb_find(self, pc: int) -> BtbEntry | None:
        ways = self.btb.get(pc % self.btb_sets)
        if not ways:
            return None
        tag = (pc // self.btb_sets) & ((1 << self.cfg.btb_tag_bits) - 1)
        for e in ways:
            if e.tag == tag:
                return e
        return None

    def _btb_install(self, pc: int, target: int, kind: str) -> None:
        idx = pc % self.btb_sets
        tag = (pc // self.btb_sets) & ((1 << self.cfg.btb_tag_bits) - 1)
        ways = self.btb.setdefault(idx, [])
        for e in ways:
            if e.tag == tag:
                e.target, e.kind = target, kind
                ways.remove(e)
                ways.append(e)
                return
        ways.append(BtbEntry(tag, target, kind))
        if len(ways) > self.cfg.btb_assoc:
            ways.pop(0)

    def _ras_push(self, addr: int) -> None:
        self.ras.append(addr)
        if len(self.ras) > self.cfg.ras_depth:
            self.ras.pop(0)
        self.ledger.charge("bpu_ras")

    # --- prediction ---

    def predict_block(self, uid: int, head_pc: int, meta: HeadMeta) -> tuple[PredRecord, int | None]:
        """One lookup for a control-ending block; returns (record, next pc).

        None as next pc means the target is unknown (taken prediction with a
        BTB miss, or a return with an empty stack).
        """
        fall_through = head_pc + meta.fall_through_offset
        rec = PredRecord(
            uid=uid,
            pc=head_pc,
            ghr_before=self.ghr,
            ras_before=list(self.ras),
            used_tables=False,
            ghr_pushed=False,
            pred_taken=False,
            fall_through=fall_through,
            followed_target=None,
            kind_hint=None,
        )
        self.lookups += 1
        entry = self._btb_find(pc=head_pc)
        self.ledger.charge("bpu_btb")
        kind = entry.kind if entry is not None else None
        rec.kind_hint = kind

        if kind in UNCONDITIONAL:
            taken = True
        else:
            taken, _, _ = self._dir_predict(head_pc)
            rec.used_tables = True
            self.ledger.charge("bpu_gshare")
            self.ledger.charge("bpu_bimodal")
            self.ledger.charge("bpu_meta")

        forced = None
        if self.oracle_feed is not None:
            # Exhaustion means a wrong-path block beyond the halt; it will be
            # squashed, so the normal prediction stands in.
            forced = next(self.oracle_feed, None)
            if forced is not None:
                taken = forced.taken

        rec.pred_taken = taken
        if rec.used_tables:
            self.ghr = ((self.ghr << 1) | (1 if taken else 0)) & self.ghr_mask
            rec.ghr_pushed = True

        if not taken:
            target = fall_through
        elif kind == "ret":
            target = self.ras.pop() if self.ras else None
            self.ledger.charge("bpu_ras")
        else:
            target = entry.target if entry is not None else None
            if kind == "call":
                self._ras_push(head_pc + meta.ctrl_offset + 1)
        if forced is not None:
            target = forced.target
        rec.followed_target = target
        self.records.append(rec)
        return rec, target

    def predict_ctrl(self, uid: int, ins: Instruction) -> tuple[PredRecord, int | None]:
        """Baseline per-op prediction; the group lookup is charged separately."""
        fall_through = ins.pc + 1
        rec = PredRecord(
            uid=uid,
            pc=ins.pc,
            ghr_before=self.ghr,
            ras_before=list(self.ras),
            used_tables=False,
            ghr_pushed=False,
            pred_taken=False,
            fall_through=fall_through,
            followed_target=None,
            kind_hint=ins.op,
        )
        if ins.op in UNCONDITIONAL:
            taken = True
        else:
            taken, _, _ = self._dir_predict(ins.pc)
            rec.used_tables = True
            self.ghr = ((self.ghr << 1) | (1 if taken else 0)) & self.ghr_mask
            rec.ghr_pushed = True
        rec.pred_taken = taken
        if not taken:
            target = fall_through
        elif ins.op == "ret":
            target = self.ras.pop() if self.ras else None
        else:
            target = ins.target
            if ins.op == "call":
                self._ras_push(ins.pc + 1)
        rec.followed_target = target
        self.records.append(rec)
        return rec, target

    def charge_group_lookup(self) -> None:
        """Baseline front ends look the BPU up before every fetch group."""
        self.lookups += 1
        self.ledger.charge("bpu_gshare")
        self.ledger.charge("bpu_bimodal")
        self.ledger.charge("bpu_meta")
        self.ledger.charge("bpu_btb")

    # --- resolution and recovery ---

    def resolve(self, rec: PredRecord, kind: str, taken: bool, target: int | None) -> bool:
        """Table update at control completion; True if the fetch path was wrong.

        Wrong-path control ops must not reach here: the caller drops
        resolutions of squashed blocks.
        """
        assert not rec.resolved
        rec.resolved = True
        # A wrong direction is a misprediction even when the fetched path
        # coincides with the target: the speculative history bit was wrong.
        mispredict = rec.followed_target != target or rec.pred_taken != taken

        if kind not in UNCONDITIONAL or rec.used_tables:
            gi = (rec.pc ^ rec.ghr_before) % len(self.gshare)
            bi = rec.pc % len(self.bimodal)
            mi = (rec.pc ^ rec.ghr_before) % len(self.meta)
            g_right = (self.gshare[gi] >= 2) == taken
            b_right = (self.bimodal[bi] >= 2) == taken
            self.gshare[gi] = _bump(self.gshare[gi], taken)
            self.bimodal[bi] = _bump(self.bimodal[bi], taken)
            if g_right != b_right:
                self.meta[mi] = _bump(self.meta[mi], g_right)
            self.ledger.charge("bpu_gshare")
            self.ledger.charge("bpu_bimodal")
            self.ledger.charge("bpu_meta")
        if taken:
            # Rets keep their target on the return stack, only the kind matters.
            btb_target = 0 if (kind == "ret" or target is None) else target
            self._btb_install(rec.pc, btb_target, kind)
            self.ledger.charge("bpu_btb")

        if mispredict:
            self.mispredicts += 1
            if rec.ghr_pushed:
                self.ghr = ((rec.ghr_before << 1) | (1 if taken else 0)) & self.ghr_mask
            # Return-stack repair for kinds the predictor did not know about.
            # rec.fall_through is the slot after the control op at both
            # granularities, i.e. the call's return address.
            if kind == "call" and not (rec.pred_taken and rec.kind_hint == "call"):
                self._ras_push(rec.fall_through)
            if kind == "ret" and not (rec.pred_taken and rec.kind_hint == "ret"):
                if self.ras:
                    self.ras.pop()
        else:
            self.hits += 1
        return mispredict

    def unwind_from(self, uid: int) -> None:
        """Discard speculative records for blocks/ops at or past uid."""
        dropped = None
        while self.records and self.records[-1].uid >= uid:
            dropped = self.records.pop()
        if dropped is not None:
            self.ghr = dropped.ghr_before
            self.ras = list(dropped.ras_before)

    def retire_records(self, uid: int) -> None:
        """Forget resolved records older than uid (bounds queue growth)."""
        self.records = [r for r in self.records if not (r.resolved and r.uid < uid)]

    def table_state(self) -> tuple:
        btb = {
            idx: [(e.tag, e.target, e.kind) for e in ways]
            for idx, ways in sorted(self.btb.items())
            if ways
        }
        return (
            tuple(self.gshare),
            tuple(self.bimodal),
            tuple(self.meta),
            self.ghr,
            tuple(self.ras),
            tuple(sorted(btb.items())),
        )


def _bump(counter: int, up: bool) -> int:
    if up:
        return min(3, counter + 1)
    return max(0, counter - 1)
