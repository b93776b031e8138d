from __future__ import annotations

from blocksim.bpu import Bpu
from blocksim.config import CoreConfig
from blocksim.energy import EnergyLedger
from blocksim.isa import HeadMeta, parse_program
from blocksim.blockcore import BlockCore
from blocksim.harness import run_experiment


def make_bpu():
    return Bpu(CoreConfig(), EnergyLedger())


def meta(blk_size=6, has_ctrl=True):
    return HeadMeta(
        has_ctrl=has_ctrl,
        blk_size=blk_size,
        ctrl_offset=blk_size if has_ctrl else 0,
        fall_through_offset=1 + blk_size,
    )


def test_fallthrough_blocks_skip_the_predictor_tables():
    # head at 100, offset 7: next block is 107, and the direction tables see
    # zero accesses because the block carries no control op.
    src = "head\n" + "    add g1, g1, 1\n" * 3 + "head\n    add g2, g2, 1\nhead\n    ret\n"
    p = parse_program(src)
    core = BlockCore(p, CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=2,
                                   eus_per_cluster=2, hb_size=2))
    core.run()
    # Only the ret block has a control op.
    assert core.bpu.lookups == 1
    assert core.ledger.counts["bpu_gshare"] <= 2  # one lookup + one resolve


def test_cold_btb_taken_prediction_is_unknown():
    bpu = make_bpu()
    for t in (bpu.gshare, bpu.bimodal, bpu.meta):
        for i in range(len(t)):
            t[i] = 3  # force a taken prediction
    rec, target = bpu.predict_block(1, 100, meta())
    assert rec.pred_taken and target is None


def test_monotone_loop_branch_reaches_98_percent():
    # Two-bit counters from the weakly-not-taken state: the first prediction
    # is wrong, the second may miss the target (cold BTB), then solid hits.
    bpu = make_bpu()
    correct = 0
    for i in range(100):
        rec, target = bpu.predict_block(i, 100, meta())
        followed = target if target is not None else 107
        rec.followed_target = followed
        if followed == 0 and rec.pred_taken:
            correct += 1
        if rec.pred_taken != True or followed != 0:
            bpu.unwind_from(i + 1)
        bpu.resolve(rec, "bne", True, 0)
    assert correct >= 98


def test_head_recovery_arithmetic():
    # A control op at 106 with offset 6 resolves against the entry for 100.
    bpu = make_bpu()
    rec, _ = bpu.predict_block(1, 106 - 6, meta())
    before = bpu.bimodal[100 % len(bpu.bimodal)]
    rec.followed_target = rec.fall_through
    bpu.resolve(rec, "bne", False, rec.fall_through)
    after = bpu.bimodal[100 % len(bpu.bimodal)]
    assert after == before - 1  # not-taken reinforcement at the head index


def test_correct_prediction_reinforces_without_squash():
    src = """
.reg g3 40
loop:
    add g2, g2, 8
    bne g2, g3, loop
head
    ret
"""
    p = parse_program(src)
    cfg = CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=2, eus_per_cluster=2, hb_size=2)
    stats, _ = run_experiment(p, cfg, "cgooo")
    # Mispredicts: the cold first iteration, the loop exit, and the halt.
    assert stats.bpu_mispredicts <= 3
    assert stats.bpu_hits >= 3
    assert stats.control_squashes <= 3


def _alternating_accuracy(bpu, rounds=200):
    hits = 0
    for i in range(rounds):
        actual_taken = i % 2 == 0
        rec, target = bpu.predict_block(i, 100, meta())
        followed = target if target is not None else 107
        rec.followed_target = followed
        actual_target = 0 if actual_taken else 107
        ok = rec.pred_taken == actual_taken and followed == actual_target
        if i >= rounds // 2 and ok:
            hits += 1
        if not ok:
            bpu.unwind_from(i + 1)
        bpu.resolve(rec, "bne", actual_taken, actual_target)
    return hits / (rounds // 2)


def _bimodal_reference_accuracy(rounds=200):
    # Hand automaton: one 2-bit counter driven by the alternating pattern.
    counter, hits = 1, 0
    for i in range(rounds):
        actual = i % 2 == 0
        pred = counter >= 2
        if i >= rounds // 2 and pred == actual:
            hits += 1
        counter = min(3, counter + 1) if actual else max(0, counter - 1)
    return hits / (rounds // 2)


def test_alternating_branch_needs_history():
    accuracy = _alternating_accuracy(make_bpu())
    assert accuracy >= 0.95  # gshare locks onto the period-2 pattern
    assert _bimodal_reference_accuracy() <= 0.6  # a lone counter cannot


def test_unwind_restores_history_and_return_stack():
    bpu = make_bpu()
    ghr0, ras0 = bpu.ghr, list(bpu.ras)
    recs = []
    for i in range(3):
        rec, _ = bpu.predict_block(i + 1, 100 + 10 * i, meta())
        recs.append((rec, bpu.ghr, list(bpu.ras)))
    bpu.unwind_from(2)
    assert bpu.ghr == recs[0][1] and bpu.ras == recs[0][2]
    bpu.unwind_from(1)
    assert bpu.ghr == ghr0 and bpu.ras == ras0
