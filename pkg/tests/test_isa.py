from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from blocksim.isa import (
    AsmError,
    GLOBAL,
    LOCAL,
    Reg,
    emit_program,
    parse_program,
    programs_equal,
)
from blocksim.randprog import random_source

DOWHILE_BLOCK = """
loop:
    add g5, g5, g4
    lw  g4, 0(g2)
    add r1, g5, 100
    sw  r1, 4096(g2)
    add g2, g2, 8
    bne g2, g3, loop
"""


def test_dowhile_parses_to_one_block():
    p = parse_program(DOWHILE_BLOCK)
    assert len(p.blocks) == 1
    blk = p.blocks[0]
    assert blk.blk_size == 6
    assert blk.head.meta.has_ctrl
    assert blk.head.meta.ctrl_offset == 6
    assert blk.head.meta.fall_through_offset == 7
    assert [i.op for i in blk.body] == ["add", "lw", "add", "sw", "add", "bne"]


def test_empty_block_is_an_error():
    with pytest.raises(AsmError, match="empty block"):
        parse_program("head\nhead\n    ret\n")


def test_forty_adds_partition_into_32_and_8():
    lines = ["big:"] + ["    add g1, g1, 1"] * 40
    p = parse_program("\n".join(lines))
    assert [b.blk_size for b in p.blocks] == [32, 8]
    assert all(not b.head.meta.has_ctrl for b in p.blocks)


def test_control_op_must_be_last():
    with pytest.raises(AsmError, match="not last"):
        parse_program("a:\n    add g1, g1, 1\n    bne g1, g2, a\n    add g3, g3, 1\n")


def test_roundtrip_dowhile():
    p = parse_program(DOWHILE_BLOCK)
    q = parse_program(emit_program(p))
    assert programs_equal(p, q)


def test_two_anonymous_blocks_emit_two_head_lines():
    p = parse_program("head\n    add g1, g1, 1\nhead\n    add g2, g2, 1\n")
    text = emit_program(p)
    assert sum(1 for ln in text.splitlines() if ln.strip() == "head") == 2


def test_hasctrl_bit_set_for_bne_block():
    p = parse_program(DOWHILE_BLOCK)
    q = parse_program(emit_program(p))
    assert q.blocks[0].head.meta.has_ctrl


def test_register_prefixes_and_ranges():
    p = parse_program("a:\n    add r3, g63, 1\n    ret\n")
    ins = p.blocks[0].body[0]
    assert ins.dest == Reg(LOCAL, 3) and ins.dest.rrf == 0
    assert ins.srcs[0] == Reg(GLOBAL, 63) and ins.srcs[0].rrf == 1
    with pytest.raises(AsmError, match="out of range"):
        parse_program("a:\n    add g64, g1, 1\n    ret\n")
    with pytest.raises(AsmError, match="out of range"):
        parse_program("a:\n    add r20, g1, 1\n    ret\n")


def test_mem_directive_aligns_addresses():
    p = parse_program(".mem 13 7\nx:\n    ret\n")
    assert p.mem_init == {8: 7}


def test_layout_invariants_on_random_programs():
    for seed in range(10):
        p = parse_program(random_source(seed))
        seqs = [ins.seq_id for ins in p.slots]
        assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
        for blk in p.blocks:
            assert blk.head.meta.fall_through_offset == 1 + blk.blk_size
            if not blk.head.meta.has_ctrl:
                assert not any(i.is_ctrl for i in blk.body)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_roundtrip_random_programs(seed):
    p = parse_program(random_source(seed))
    q = parse_program(emit_program(p))
    assert programs_equal(p, q)
    # A second round trip must be a fixpoint.
    assert emit_program(q) == emit_program(p)


def test_undefined_label_is_an_error():
    with pytest.raises(AsmError, match="undefined label"):
        parse_program("a:\n    jmp nowhere\n")
