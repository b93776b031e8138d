from __future__ import annotations

import pytest

from blocksim.blockcore import BlockCore, SimError
from blocksim.compiler import compile_program
from blocksim.config import ConfigError, CoreConfig
from blocksim.energy import grf_segment_access_pj
from blocksim.isa import GLOBAL, parse_program
from blocksim.kernels import dowhile, kernel_source, skipahead_pair
from blocksim.oracle import run_functional
from blocksim.randprog import random_program

from conftest import assert_matches_oracle


def run_block(prog, cfg, max_cycles=300_000):
    trace = []
    core = BlockCore(prog, cfg, trace=trace)
    stats = core.run(max_cycles=max_cycles)
    return core, stats, trace


def events(trace, kind):
    return [e for e in trace if e["event"] == kind]


WALK_CFG = CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=2,
                      eus_per_cluster=2, hb_size=4)


class TestPipelineWalkthrough:
    """Cycle-by-cycle flow of the do-while loop on the 2-wide, 2-window
    machine. Cycle numbering starts at 1 (the first fetch happens in cycle 1),
    which is the alignment the expected values below use."""

    @pytest.fixture(scope="class")
    def trace(self):
        prog = parse_program(dowhile(4))
        _, _, trace = run_block(prog, WALK_CFG)
        return trace

    def test_head_fetched_cycle_1(self, trace):
        first = events(trace, "fetch")[0]
        assert first["cycle"] == 1 and first["op"] == "head"

    def test_prediction_available_cycle_3_before_bne_fetch(self, trace):
        pred = events(trace, "predict")[0]
        bne_fetch = next(e for e in events(trace, "fetch") if e["op"] == "bne")
        assert pred["cycle"] == 3
        assert pred["cycle"] < bne_fetch["cycle"] == 4

    def test_block_window_gets_first_instruction_cycle_4(self, trace):
        first = events(trace, "bw_first_dispatch")[0]
        assert first["cycle"] == 4 and first["bw"] == 0

    def test_first_add_issues_cycle_5(self, trace):
        first = events(trace, "issue")[0]
        assert first["cycle"] == 5 and first["op"] == "add"

    def test_one_issue_per_cycle_through_bne_at_10(self, trace):
        sn1 = [e for e in events(trace, "issue") if e["sn"] == 1]
        assert [e["cycle"] for e in sn1] == [5, 6, 7, 8, 9, 10]
        assert sn1[-1]["op"] == "bne"

    def test_window_zero_free_for_cycle_11(self, trace):
        avail = next(e for e in events(trace, "bw_available") if e["bw"] == 0)
        assert avail["from_cycle"] == 11

    def test_first_block_retires_cycle_13(self, trace):
        commit = events(trace, "commit_block")[0]
        assert commit["sn"] == 1 and commit["cycle"] == 13


class TestSkipahead:
    def order(self, hb):
        prog = parse_program(skipahead_pair())
        pos = {ins.pc: i + 1 for i, ins in enumerate(prog.blocks[1].body)}
        cfg = CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=1,
                         eus_per_cluster=1, hb_size=hb)
        _, _, trace = run_block(prog, cfg)
        return [pos[e["pc"]] for e in events(trace, "issue") if e["pc"] in pos]

    def test_three_entry_buffer_issues_1_3_2_4(self):
        assert self.order(3) == [1, 3, 2, 4]

    def test_single_entry_buffer_is_in_order(self):
        assert self.order(1) == [1, 2, 3, 4]

    def test_war_blocks_skipahead(self):
        # Entry 2 writes the register entry 1 reads: 2 may not pass 1.
        src = """
.mem 64 3
head
    li g2, 64
head
    lw  r1, 0(g2)       # op 1: slow
    add r2, r1, 1       # op 2: waits on op 1
    add r1, g2, 5       # op 3: writes what op 2 reads (WAR)
head
    ret
"""
        prog = parse_program(src)
        pos = {ins.pc: i + 1 for i, ins in enumerate(prog.blocks[1].body)}
        cfg = CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=1,
                         eus_per_cluster=1, hb_size=3)
        _, _, trace = run_block(prog, cfg)
        order = [pos[e["pc"]] for e in events(trace, "issue") if e["pc"] in pos]
        assert order == [1, 2, 3]

    def test_memory_ops_stay_ordered_within_a_window(self):
        src = """
.mem 64 3
head
    li g2, 64
    li g3, 128
head
    lw  r1, 0(g2)
    add r2, r1, 1
    sw  g3, 8(g2)       # may not pass the older load
head
    ret
"""
        prog = parse_program(src)
        pos = {ins.pc: i + 1 for i, ins in enumerate(prog.blocks[1].body)}
        cfg = CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=1,
                         eus_per_cluster=1, hb_size=3)
        _, _, trace = run_block(prog, cfg)
        order = [pos[e["pc"]] for e in events(trace, "issue") if e["pc"] in pos]
        assert order.index(3) > order.index(1)


def test_hb1_issues_strictly_in_order_per_block():
    cfg = WALK_CFG.replace(hb_size=1, bws_per_cluster=4)
    for seed in range(6):
        prog = random_program(seed)
        core, _, trace = run_block(prog, cfg)
        last_pos = {}
        for e in events(trace, "issue"):
            pos = last_pos.get(e["sn"], -1)
            assert e["pc"] > pos or e["op"] == "head"
            last_pos[e["sn"]] = e["pc"]
        assert_matches_oracle(prog, core.arch_state())


def test_issue_trace_respects_block_dependences():
    # Post-hoc audit: within a block, architectural RAW order always holds,
    # and local-register RAW/WAR/WAW order always holds.
    cfg = WALK_CFG.replace(hb_size=4, bws_per_cluster=4)
    for seed in range(8):
        prog = random_program(seed)
        core, _, trace = run_block(prog, cfg)
        issue_seq = {}
        for n, e in enumerate(events(trace, "issue")):
            issue_seq.setdefault(e["sn"], {})[e["pc"]] = n
        for sn, by_pc in issue_seq.items():
            pcs = sorted(by_pc)
            body = [prog.slots[pc] for pc in pcs]
            for i, a in enumerate(body):
                for j in range(i + 1, len(body)):
                    b = body[j]
                    raw = a.dest is not None and a.dest in b.srcs
                    local_conf = a.dest is not None and a.dest.scope != GLOBAL and (
                        a.dest == b.dest or a.dest in b.srcs
                    ) or (
                        b.dest is not None and b.dest.scope != GLOBAL and b.dest in a.srcs
                    )
                    if raw or local_conf:
                        assert by_pc[a.pc] < by_pc[b.pc], (sn, a.render(), b.render())


def test_architectural_results_independent_of_geometry():
    prog_src = kernel_source("store_load_conflict")
    configs = [
        WALK_CFG,
        WALK_CFG.replace(hb_size=1),
        WALK_CFG.replace(bws_per_cluster=6, eus_per_cluster=8, fetch_width=8),
        CoreConfig(fetch_width=4, clusters=3, bws_per_cluster=2, eus_per_cluster=2,
                   hb_size=5, grf_segments=18),
    ]
    states = []
    for cfg in configs:
        prog = parse_program(prog_src)
        core, _, _ = run_block(prog, cfg)
        assert_matches_oracle(prog, core.arch_state())
        states.append(core.arch_state().globals_)
    assert all(s == states[0] for s in states)


def test_rename_accesses_equal_global_operand_count():
    # Straight-line program: no replays, so ledger equality is exact.
    src = """
head
    add g1, g2, 1
    add r1, g1, 2
    add g3, r1, g1
    mov r2, r1
    sw  g3, 0(g2)
head
    ret
"""
    prog = parse_program(src)
    core, stats, _ = run_block(prog, WALK_CFG)
    n_global = 0
    n_local = 0
    for blk in prog.blocks:
        for ins in blk.body:
            for r in ins.operand_regs():
                if r.scope == GLOBAL:
                    n_global += 1
                else:
                    n_local += 1
    assert stats.rename_accesses == n_global == core.ledger.counts["rename"]
    assert stats.rename_skipped == n_local


def test_brob_accesses_per_block_are_size_plus_two():
    src = "head\n" + "    add g1, g1, 1\n" * 5 + "head\n    add g2, g2, 1\nhead\n    ret\n"
    prog = parse_program(src)
    core, stats, _ = run_block(prog, WALK_CFG)
    sizes = [b.blk_size for b in prog.blocks]
    assert core.ledger.counts["brob"] == sum(s + 2 for s in sizes)
    assert stats.blocks_committed == len(sizes)


@pytest.mark.parametrize("segments", [1, 3, 9, 18])
def test_grf_charge_follows_segment_rule(segments):
    prog = parse_program(dowhile(4))
    cfg = WALK_CFG.replace(grf_segments=segments)
    core, _, _ = run_block(prog, cfg)
    per_access = core.ledger.units["grf"].access_pj
    assert per_access == grf_segment_access_pj(core.ledger.params, segments)
    n = core.ledger.counts["grf"]
    assert core.ledger.dynamic_pj["grf"] == pytest.approx(per_access * n)


def test_bpu_lookups_once_per_control_block():
    # Straight-line: 3 fall-through blocks and a ret block.
    src = (
        "head\n" + "    add g1, g1, 1\n" * 4
        + "head\n" + "    add g2, g2, 1\n" * 3
        + "head\n    add g3, g3, 1\nhead\n    ret\n"
    )
    prog = parse_program(src)
    core, stats, _ = run_block(prog, WALK_CFG)
    assert stats.bpu_lookups == 1  # only the ret block has a control op
    assert stats.blocks_committed == 4


def test_wakeup_compare_bound():
    cfg = WALK_CFG.replace(bws_per_cluster=3, hb_size=3)
    prog = random_program(3)
    core, stats, trace = run_block(prog, cfg)
    global_writes = sum(
        1 for blk in prog.blocks for i in blk.body
        if i.dest is not None and i.dest.scope == GLOBAL
    )
    bound = cfg.total_bws * cfg.hb_size
    issues = len(events(trace, "issue"))
    assert stats.wakeup_compares <= issues * bound


def test_two_windows_issue_the_same_cycle():
    src = """
head
    add g1, g1, 1
    add g2, g2, 1
    add g3, g3, 1
head
    add g4, g4, 1
    add g5, g5, 1
    add g6, g6, 1
head
    ret
"""
    prog = parse_program(src)
    _, _, trace = run_block(prog, WALK_CFG)
    by_cycle = {}
    for e in events(trace, "issue"):
        by_cycle.setdefault(e["cycle"], set()).add(e["sn"])
    assert any(len(sns) == 2 for sns in by_cycle.values())


def test_three_ready_windows_two_eus_pick_oldest():
    src = "\n".join(
        ["head\n    add g%d, g%d, 1\n    add g%d, g%d, 2" % (i, i, i + 3, i + 3) for i in (1, 2, 3)]
        + ["head", "    ret"]
    )
    prog = parse_program(src)
    cfg = WALK_CFG.replace(bws_per_cluster=3, eus_per_cluster=2)
    _, _, trace = run_block(prog, cfg)
    by_cycle = {}
    for e in events(trace, "issue"):
        by_cycle.setdefault(e["cycle"], []).append(e["sn"])
    contended = next(sns for sns in by_cycle.values() if len(sns) == 2)
    assert sorted(contended) == contended  # oldest blocks first


def test_memory_squash_names_the_loads_block():
    prog = parse_program(kernel_source("store_load_conflict"))
    core, stats, trace = run_block(prog, WALK_CFG)
    assert stats.memory_squashes >= 1
    sq = next(e for e in events(trace, "squash") if e["kind"] == "memory")
    # Restart at the start of the same code block that held the load.
    assert prog.slots[sq["restart"]].op == "head"
    assert_matches_oracle(prog, core.arch_state())


def test_wasted_squash_drops_when_loads_are_hoisted():
    # The conflicting load sits under an ALU chain; hoisting pulls it to the
    # block start so squashed work older than the load disappears.
    src = """
.reg g9 16
.reg g10 512
.mem 512 1024
loop:
    lw  r1, 0(g10)
    add r2, r1, 0
    sw  g7, 0(r2)
head
    add g5, g5, 1
    add g6, g6, g5
    lw  g4, 1024(g0)
    add g7, g4, 1
    add g8, g8, 1
    bne g8, g9, loop
head
    ret
"""
    wasted = {}
    for sched in (False, True):
        prog = compile_program(parse_program(src), schedule=sched)
        core, stats, _ = run_block(prog, WALK_CFG)
        assert stats.memory_squashes > 0
        wasted[sched] = stats.wasted_squash_ops
        assert_matches_oracle(prog, core.arch_state())
    assert wasted[True] < wasted[False]


def test_post_run_rename_state_is_nonspeculative():
    for seed in range(6):
        prog = random_program(seed)
        core, _, _ = run_block(prog, WALK_CFG)
        assert core.spec_map == core.committed_map
        arch_regs = set(core.committed_map)
        assert len(arch_regs) == len(core.committed_map)  # injective
        free = {p for fl in core.seg_free for p in fl}
        assert not (free & arch_regs)
        assert len(free) + len(arch_regs) == core.cfg.n_phys_regs


def test_no_free_window_stalls_allocation():
    cfg = WALK_CFG.replace(bws_per_cluster=1)
    prog = parse_program(dowhile(6))
    core, stats, trace = run_block(prog, cfg)
    allocs = events(trace, "alloc_bw")
    avails = {e["from_cycle"] for e in events(trace, "bw_available")}
    # With one window, every allocation after the first waits for a release.
    for e in allocs[1:]:
        assert any(c <= e["cycle"] for c in avails)
    assert_matches_oracle(prog, core.arch_state())


def test_two_iterations_in_flight_use_distinct_windows():
    prog = parse_program(dowhile(12))
    core, _, trace = run_block(prog, WALK_CFG)
    allocs = {e["sn"]: e for e in events(trace, "alloc_bw")}
    commits = {e["sn"]: e["cycle"] for e in events(trace, "commit_block")}
    overlapping = [
        (a, b) for a in allocs.values() for b in allocs.values()
        if a["sn"] < b["sn"] and b["cycle"] < commits.get(a["sn"], 1 << 30)
    ]
    assert overlapping, "expected concurrent block lifetimes"
    assert any(a["bw"] != b["bw"] for a, b in overlapping)
    sns = sorted(allocs)
    assert sns == sorted(commits)  # created in fetch order, committed once


def test_squash_drain_first_flag_still_correct():
    prog = parse_program(kernel_source("branchy_loop"))
    base, _, _ = run_block(parse_program(kernel_source("branchy_loop")), WALK_CFG)
    core, stats, _ = run_block(prog, WALK_CFG.replace(squash_drain_first=True))
    assert_matches_oracle(prog, core.arch_state())
    assert stats.cycles >= base.stats.cycles  # draining first cannot be faster


def test_oversized_block_rejected():
    lines = ["a:"] + ["    add g1, g1, 1"] * 40
    prog = parse_program("\n".join(lines), partition=False)
    with pytest.raises(SimError, match="partition"):
        BlockCore(prog, WALK_CFG)


def test_config_range_validation():
    with pytest.raises(ConfigError):
        CoreConfig(fetch_width=9)
    with pytest.raises(ConfigError):
        CoreConfig(clusters=4)
    with pytest.raises(ConfigError):
        CoreConfig(hb_size=6)
    with pytest.raises(ConfigError):
        CoreConfig(grf_segments=19)
