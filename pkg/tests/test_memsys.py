from __future__ import annotations

import random

from blocksim.config import CoreConfig
from blocksim.energy import EnergyLedger
from blocksim.memsys import Lsu


def make_lsu(mem=None, speculative=True):
    return Lsu(CoreConfig(), EnergyLedger(), mem or {}, speculative=speculative)


def test_store_to_load_forwarding_at_hit_latency():
    lsu = make_lsu({64: 5})
    lsu.execute_store((1, 0), 64, 99)
    val, lat = lsu.execute_load((2, 0), 64)
    assert val == 99 and lat == 4


def test_cold_load_walks_the_whole_hierarchy():
    lsu = make_lsu()
    _, lat = lsu.execute_load((1, 0), 1 << 20)
    assert lat == 4 + 12 + 40 + 100


def test_second_pass_over_l1_sized_array_hits():
    lsu = make_lsu()
    cfg = CoreConfig()
    step = cfg.line_bytes
    lines = cfg.l1_kb * 1024 // cfg.line_bytes
    for k in range(lines):
        lsu.execute_load((k + 1, 0), k * step)
    lsu.loads.clear()
    before = dict(lsu.cache.hits)
    for k in range(lines):
        _, lat = lsu.execute_load((lines + k + 1, 0), k * step)
        assert lat == cfg.l1_latency
    assert lsu.cache.hits["dcache_l1"] - before["dcache_l1"] == lines


def test_preset_memory_starts_resident():
    lsu = make_lsu({128: 7})
    val, lat = lsu.execute_load((1, 0), 128)
    assert (val, lat) == (7, 4)


def test_conflict_detection_matches_brute_force():
    # Ops carry program-order keys but execute in a random order; every store
    # must name the oldest younger load already executed at its address.
    rng = random.Random(7)
    for _ in range(200):
        lsu = make_lsu()
        n = rng.randint(4, 14)
        ops = []
        for sn in range(1, n + 1):
            kind = "ld" if rng.random() < 0.5 else "st"
            ops.append((kind, (sn, 0), rng.choice((0, 8, 16))))
        issued = []
        order = list(range(n))
        rng.shuffle(order)
        for i in order:
            kind, key, addr = ops[i]
            if kind == "ld":
                lsu.execute_load(key, addr)
            else:
                conflict = lsu.execute_store(key, addr, 1)
                victims = [
                    k for kk, k, a in issued
                    if kk == "ld" and a == addr and k > key
                ]
                want = min(victims)[0] if victims else None
                got = conflict.target_block_sn if conflict else None
                assert got == want, (issued, key, addr)
            issued.append(ops[i])


def test_retire_marker_advances_past_the_blocks_stores():
    lsu = make_lsu()
    lsu.execute_store((1, 0), 0, 10)
    lsu.execute_store((1, 2), 8, 11)
    lsu.execute_store((2, 0), 16, 12)
    assert lsu.retire_stores(1) == 2
    assert lsu.mem[0] == 10 and lsu.mem[8] == 11 and 16 not in lsu.mem
    assert [st.key for st in lsu.stores] == [(2, 0)]
    assert lsu.retire_stores(2) == 1
    assert lsu.retire_stores(3) == 0  # a block with no stores moves nothing


def test_flush_drops_only_younger_entries():
    lsu = make_lsu()
    lsu.execute_store((1, 0), 0, 1)
    lsu.execute_store((3, 0), 8, 3)
    lsu.execute_load((2, 0), 16)
    lsu.execute_load((4, 0), 24)
    lsu.flush_from(3)
    assert [st.key for st in lsu.stores] == [(1, 0)]
    assert [ld.key for ld in lsu.loads] == [(2, 0)]
    lsu.retire_stores(1)
    assert lsu.drained_block_sns == [1]


def test_forwarding_picks_the_youngest_older_store():
    lsu = make_lsu()
    lsu.execute_store((1, 0), 64, 111)
    lsu.execute_store((3, 0), 64, 333)
    val, _ = lsu.execute_load((4, 0), 64)
    assert val == 333
    val, _ = lsu.execute_load((2, 0), 64)
    assert val == 111
