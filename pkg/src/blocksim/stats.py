"""Run statistics: counters plus the energy rollup, JSON-friendly."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .energy import EnergyLedger

CACHE_UNITS = ("icache", "dcache_l1", "dcache_l2", "dcache_l3", "dram")


@dataclass
class RunStats:
    core: str
    cycles: int
    instructions: int
    blocks_committed: int = 0
    # Branch prediction.
    bpu_lookups: int = 0
    bpu_hits: int = 0
    bpu_mispredicts: int = 0
    fetch_groups: int = 0
    fetch_stall_cycles: int = 0
    # Rename.
    rename_accesses: int = 0
    rename_skipped: int = 0
    # Squashes.
    control_squashes: int = 0
    memory_squashes: int = 0
    wasted_squash_ops: int = 0
    # Memory system.
    cache_hits: dict = field(default_factory=dict)
    # Wakeup CAM activity.
    wakeup_compares: int = 0
    # Energy rollup.
    energy_total_pj: float = 0.0
    energy_dynamic_pj: float = 0.0
    energy_leak_pj: float = 0.0
    energy_by_unit: dict = field(default_factory=dict)
    accesses_by_unit: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    _leak_by_unit: dict = field(default_factory=dict, repr=False)

    @property
    def ipc(self) -> float:
        return self.instructions / self.cycles if self.cycles else 0.0

    @property
    def epc(self) -> float:
        return self.energy_total_pj / self.cycles if self.cycles else 0.0

    def core_energy_pj(self) -> float:
        """Total minus cache and memory units (the core-only comparison)."""
        cache = sum(self.energy_by_unit.get(u, 0.0) for u in CACHE_UNITS)
        cache += sum(self.leak_by_unit().get(u, 0.0) for u in CACHE_UNITS)
        return self.energy_total_pj - cache

    def leak_by_unit(self) -> dict:
        return self._leak_by_unit

    def finalize_energy(self, ledger: EnergyLedger) -> None:
        self.energy_dynamic_pj = ledger.dynamic_total()
        self.energy_leak_pj = ledger.leak_total()
        self.energy_total_pj = ledger.total()
        self.energy_by_unit = dict(ledger.dynamic_pj)
        self.accesses_by_unit = dict(ledger.counts)
        self._leak_by_unit = {
            name: u.leak_pj_cycle * ledger.cycles for name, u in ledger.units.items()
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["leak_by_unit"] = d.pop("_leak_by_unit")
        d["ipc"] = self.ipc
        d["epc_pj"] = self.epc
        d["core_energy_pj"] = self.core_energy_pj()
        return d


@dataclass
class ArchState:
    """Final architectural state a core reports, for oracle comparison."""

    globals_: list[int]
    memory: dict[int, int]

    def global_values(self, indices) -> dict[int, int]:
        return {i: self.globals_[i] for i in indices}
