"""Fixed-latency cache hierarchy and the sequence-tagged load/store unit.

Queue entries are ordered by (block sequence number, position in block).
Stores stay buffered and invisible until their block commits; loads record
themselves for later conflict checks. A store that finds an already-executed
younger load at an overlapping address raises a memory-order conflict naming
the load's block.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field

from .config import CoreConfig
from .energy import EnergyLedger

OrderKey = tuple[int, int]


class Cache:
    __slots__ = ("name", "n_sets", "assoc", "sets")

    def __init__(self, name: str, size_kb: int, assoc: int, line_bytes: int):
        self.name = name
        self.assoc = assoc
        self.n_sets = max(1, (size_kb * 1024) // (line_bytes * assoc))
        self.sets: dict[int, list[int]] = {}

    def lookup(self, line: int) -> bool:
        s = self.sets.get(line % self.n_sets)
        if s is None:
            return False
        tag = line // self.n_sets
        if tag in s:
            s.remove(tag)
            s.append(tag)  # LRU refresh
            return True
        return False

    def fill(self, line: int) -> None:
        idx = line % self.n_sets
        s = self.sets.setdefault(idx, [])
        tag = line // self.n_sets
        if tag in s:
            s.remove(tag)
        s.append(tag)
        if len(s) > self.assoc:
            s.pop(0)


class CacheModel:
    """Inclusive L1/L2/L3 with additive miss latencies and flat access energy."""

    def __init__(self, cfg: CoreConfig, ledger: EnergyLedger):
        self.ledger = ledger
        p = ledger.params
        self.levels = [
            (Cache("dcache_l1", cfg.l1_kb, cfg.l1_assoc, cfg.line_bytes), cfg.l1_latency, p.l1_pj),
            (Cache("dcache_l2", cfg.l2_kb, cfg.l2_assoc, cfg.line_bytes), cfg.l2_latency, p.l2_pj),
            (Cache("dcache_l3", cfg.l3_kb, cfg.l3_assoc, cfg.line_bytes), cfg.l3_latency, p.l3_pj),
        ]
        self.mem_latency = cfg.mem_latency
        self.line_bytes = cfg.line_bytes
        self.hits = {"dcache_l1": 0, "dcache_l2": 0, "dcache_l3": 0, "dram": 0}
        for cache, _, pj in self.levels:
            ledger.register_flat(cache.name, pj, self._leak_for(cache.name))
        ledger.register_flat("dram", p.mem_pj, 0.0)

    def _leak_for(self, name: str) -> float:
        p = self.ledger.params
        return {"dcache_l1": p.l1_leak_pj_cycle, "dcache_l2": p.l2_leak_pj_cycle,
                "dcache_l3": p.l3_leak_pj_cycle}[name]

    def warm(self, addr: int) -> None:
        """Preload a line into every level without charging the ledger."""
        line = addr // self.line_bytes
        for cache, _, _ in self.levels:
            cache.fill(line)

    def access(self, addr: int) -> int:
        """Walks the hierarchy; returns total latency and fills inclusively."""
        line = addr // self.line_bytes
        latency = 0
        hit_at = None
        for i, (cache, lat, _pj) in enumerate(self.levels):
            self.ledger.charge(cache.name)
            latency += lat
            if cache.lookup(line):
                hit_at = i
                break
        if hit_at is None:
            self.ledger.charge("dram")
            latency += self.mem_latency
            self.hits["dram"] += 1
            hit_at = len(self.levels)
        else:
            self.hits[self.levels[hit_at][0].name] += 1
        for cache, _, _ in self.levels[:hit_at]:
            cache.fill(line)
        return latency


@dataclass
class LoadEntry:
    key: OrderKey
    addr: int

    def __lt__(self, other):
        return self.key < other.key


@dataclass
class StoreEntry:
    key: OrderKey
    addr: int
    data: int

    def __lt__(self, other):
        return self.key < other.key


@dataclass
class MemConflict:
    target_block_sn: int
    load_key: OrderKey
    store_key: OrderKey


class Lsu:
    """Load/store queues over a committed-memory image.

    speculative=True lets loads run ahead of unresolved older stores and
    enables conflict detection; the conservative mode (baseline out-of-order
    core) gates loads in the scheduler instead, so conflicts cannot happen.
    """

    def __init__(self, cfg: CoreConfig, ledger: EnergyLedger, mem_init: dict[int, int],
                 speculative: bool = True):
        self.ledger = ledger
        self.speculative = speculative
        self.lq_cap = cfg.lq_entries
        self.sq_cap = cfg.sq_entries
        self.loads: list[LoadEntry] = []
        self.stores: list[StoreEntry] = []
        self.mem: dict[int, int] = dict(mem_init)
        self.cache = CacheModel(cfg, ledger)
        # Preset data starts cache-resident: loads of initialized memory see
        # hit latency from the first access.
        for addr in mem_init:
            self.cache.warm(addr)
        self.l1_latency = cfg.l1_latency
        self.drained_block_sns: list[int] = []  # audit: who reached the cache model
        ledger.register_table("lq", cfg.lq_entries, 90, 2, 2)
        ledger.register_table("sq", cfg.sq_entries, 144, 2, 2)

    def lq_full(self) -> bool:
        return len(self.loads) >= self.lq_cap

    def sq_full(self) -> bool:
        return len(self.stores) >= self.sq_cap

    def execute_load(self, key: OrderKey, addr: int) -> tuple[int, int]:
        """Returns (value, latency); records the load for conflict checks."""
        self.ledger.charge("lq")  # insert
        self.ledger.charge_cam("sq_search", len(self.stores), 64)
        best: StoreEntry | None = None
        for st in self.stores:
            if st.key < key and st.addr == addr and (best is None or best.key < st.key):
                best = st
        insort(self.loads, LoadEntry(key, addr))
        if best is not None:
            return best.data, self.l1_latency
        return self.mem.get(addr, 0), self.cache.access(addr)

    def execute_store(self, key: OrderKey, addr: int, data: int) -> MemConflict | None:
        """Buffers the store; reports the oldest younger executed load overlap."""
        self.ledger.charge("sq")  # insert
        self.ledger.charge_cam("lq_search", len(self.loads), 64)
        insort(self.stores, StoreEntry(key, addr, data))
        if not self.speculative:
            return None
        victim: LoadEntry | None = None
        for ld in self.loads:
            if ld.key > key and ld.addr == addr and (victim is None or ld.key < victim.key):
                victim = ld
        if victim is not None:
            assert victim.key[0] != key[0], "same-block memory order violated"
            return MemConflict(victim.key[0], victim.key, key)
        return None

    def retire_stores(self, block_sn: int) -> int:
        """Drains the committing block's stores, oldest first."""
        n = 0
        while self.stores and self.stores[0].key[0] == block_sn:
            st = self.stores.pop(0)
            self.mem[st.addr] = st.data
            self.cache.access(st.addr)
            self.drained_block_sns.append(block_sn)
            self.ledger.charge("sq")
            n += 1
        assert all(st.key[0] > block_sn for st in self.stores), "store queue out of order"
        return n

    def retire_loads(self, block_sn: int) -> None:
        self.loads = [ld for ld in self.loads if ld.key[0] != block_sn]

    def flush_from(self, block_sn: int) -> None:
        self.loads = [ld for ld in self.loads if ld.key[0] < block_sn]
        self.stores = [st for st in self.stores if st.key[0] < block_sn]
