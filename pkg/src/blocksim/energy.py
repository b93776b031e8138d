"""Analytical per-access dynamic energy and per-cycle leakage accounting.

Tables are costed with a closed form instead of circuit simulation:

    access_pj = ram_pj_per_bit * width * (entries / 16) * ((rports + wports) / 4) ** port_exp

The entry term is linear (a 160-entry table costs exactly 10x a 16-entry one)
and the port exponent defaults to 0.6, which pins a 20-entry 2R/2W local file
at ~25x below a 256-entry 8R/4W unified file. CAM searches add a per-tag-bit
compare term per entry scanned. Wires cost wire_pj_per_bit_mm per bit-mm,
charged at the 0.5 activity factor. A segmented global file costs the unified
access energy divided by the segment count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

REF_ENTRIES = 16
REF_PORTS = 4


@dataclass
class EnergyParams:
    ram_pj_per_bit: float = 0.0625
    port_exp: float = 0.6
    cam_pj_per_tag_bit: float = 0.05
    ff_pj_per_instr_stage: float = 0.5
    wire_pj_per_bit_mm: float = 0.08
    wire_activity: float = 0.5
    wire_mm_local: float = 0.5
    wire_mm_cross: float = 2.0
    leak_pj_per_bit_cycle: float = 0.000005
    # Execution units, per operation.
    eu_alu_pj: float = 2.0
    eu_mul_pj: float = 6.0
    eu_mem_pj: float = 2.5
    eu_branch_pj: float = 1.5
    # Banked or set-indexed structures carry flat calibrated access values:
    # the entry-linear law applies to tables read as whole arrays.
    bpu_dir_pj: float = 8.0
    btb_pj: float = 30.0
    icache_pj: float = 40.0
    l1_pj: float = 20.0
    l2_pj: float = 80.0
    l3_pj: float = 300.0
    mem_pj: float = 1200.0
    icache_leak_pj_cycle: float = 0.5
    l1_leak_pj_cycle: float = 0.5
    l2_leak_pj_cycle: float = 1.0
    l3_leak_pj_cycle: float = 1.5

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            for fld in fields(self):
                f.write(f"{fld.name} = {getattr(self, fld.name)!r}\n")

    @classmethod
    def load(cls, path: str) -> "EnergyParams":
        values = {}
        names = {fld.name for fld in fields(cls)}
        with open(path) as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, val = line.partition("=")
                key = key.strip()
                if key not in names:
                    raise ValueError(f"{path}:{lineno}: unknown energy parameter {key!r}")
                values[key] = float(val.strip())
        return cls(**values)


def access_energy(
    params: EnergyParams,
    entries: float,
    width: int,
    read_ports: int = 2,
    write_ports: int = 2,
    kind: str = "ram",
    tag_bits: int | None = None,
) -> float:
    """Per-access energy (pJ) of a table under the scaling law.

    kind "cam" adds one compare across all entries per access; sparser CAM
    scans should be charged through EnergyLedger.charge_cam instead.
    """
    if entries <= 0:
        raise ValueError("zero-entry table")
    ports = read_ports + write_ports
    pj = (
        params.ram_pj_per_bit
        * width
        * (entries / REF_ENTRIES)
        * (ports / REF_PORTS) ** params.port_exp
    )
    if kind == "cam":
        pj += entries * (tag_bits if tag_bits is not None else width) * params.cam_pj_per_tag_bit
    return pj


def wire_energy(params: EnergyParams, bits: int, mm: float) -> float:
    """Energy (pJ) to drive `bits` over `mm`, at the configured activity."""
    return bits * mm * params.wire_pj_per_bit_mm * params.wire_activity


@dataclass
class _Unit:
    access_pj: float
    leak_pj_cycle: float


@dataclass
class EnergyLedger:
    """Per-unit accumulators: dynamic picojoules plus per-cycle leakage."""

    params: EnergyParams = field(default_factory=EnergyParams)
    units: dict[str, _Unit] = field(default_factory=dict)
    dynamic_pj: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    cycles: int = 0
    _leak_per_cycle: float = 0.0

    def register_table(
        self,
        name: str,
        entries: float,
        width: int,
        read_ports: int = 2,
        write_ports: int = 2,
        kind: str = "ram",
        tag_bits: int | None = None,
        scale: float = 1.0,
    ) -> None:
        pj = access_energy(self.params, entries, width, read_ports, write_ports, kind, tag_bits)
        leak = entries * width * self.params.leak_pj_per_bit_cycle
        self.register_flat(name, pj * scale if scale != 1.0 else pj, leak)

    def register_flat(self, name: str, access_pj: float, leak_pj_cycle: float = 0.0) -> None:
        if name in self.units:
            raise ValueError(f"unit {name!r} already registered")
        self.units[name] = _Unit(access_pj, leak_pj_cycle)
        self.dynamic_pj[name] = 0.0
        self.counts[name] = 0
        self._leak_per_cycle += leak_pj_cycle

    def charge(self, name: str, n: int = 1) -> None:
        u = self.units.get(name)
        if u is None:
            raise KeyError(f"unregistered unit {name!r}")
        self.dynamic_pj[name] += u.access_pj * n
        self.counts[name] += n

    def charge_pj(self, name: str, pj: float, n: int = 1) -> None:
        """Direct energy deposit (wires, compare scans); counts the events."""
        if name not in self.units:
            self.register_flat(name, 0.0)
        self.dynamic_pj[name] += pj
        self.counts[name] += n

    def charge_cam(self, name: str, entries_scanned: int, tag_bits: int) -> None:
        pj = entries_scanned * tag_bits * self.params.cam_pj_per_tag_bit
        self.charge_pj(name, pj, entries_scanned)

    def charge_wire(self, name: str, bits: int, mm: float, n: int = 1) -> None:
        self.charge_pj(name, wire_energy(self.params, bits, mm) * n, n)

    def tick(self, cycles: int = 1) -> None:
        self.cycles += cycles

    # --- reporting ---

    def dynamic_total(self) -> float:
        return sum(self.dynamic_pj.values())

    def leak_per_cycle(self) -> float:
        return self._leak_per_cycle

    def leak_total(self) -> float:
        return self.cycles * self._leak_per_cycle

    def total(self) -> float:
        return self.dynamic_total() + self.cycles * self._leak_per_cycle

    def report_rows(self) -> list[tuple[str, int, float, float]]:
        rows = []
        for name in self.dynamic_pj:
            leak = self.units[name].leak_pj_cycle * self.cycles
            rows.append((name, self.counts[name], self.dynamic_pj[name], leak))
        return rows

    def write_csv(self, path: str) -> None:
        with open(path, "w") as f:
            f.write("unit,accesses,dynamic_pj,leakage_pj\n")
            for name, n, dyn, leak in self.report_rows():
                f.write(f"{name},{n},{dyn!r},{leak!r}\n")


def grf_segment_access_pj(params: EnergyParams, segments: int) -> float:
    """Segmented global-file access: unified 256-entry 8R/4W energy over S."""
    unified = access_energy(params, 256, 64, 8, 4)
    return unified / segments


def eu_energy_pj(params: EnergyParams, op: str) -> float:
    if op == "mul":
        return params.eu_mul_pj
    if op in ("lw", "sw"):
        return params.eu_mem_pj
    if op in ("beq", "bne", "blt", "jmp", "call", "ret"):
        return params.eu_branch_pj
    return params.eu_alu_pj


def ulp_equal(a: float, b: float, ulps: int = 1) -> bool:
    if a == b:
        return True
    return abs(a - b) <= ulps * math.ulp(max(abs(a), abs(b)))
