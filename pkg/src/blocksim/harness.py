"""Experiment driver: single runs, normalized metrics, and sweep reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .blockcore import BlockCore
from .compiler import lower_for_baseline
from .config import CoreConfig
from .energy import EnergyLedger, EnergyParams
from .inocore import InOrderCore
from .isa import Program
from .kernels import KERNELS, kernel_program
from .ooocore import OooCore
from .stats import ArchState, RunStats

CORES = ("cgooo", "ooo", "ino")


def make_core(program: Program, cfg: CoreConfig, core: str,
              params: EnergyParams | None = None, trace: list | None = None):
    ledger = EnergyLedger(params) if params is not None else EnergyLedger()
    if core == "cgooo":
        if program.bare:
            raise ValueError("the block core needs the compiled (headed) program form")
        return BlockCore(program, cfg, ledger, trace)
    bare = program if program.bare else lower_for_baseline(program)
    if core == "ooo":
        return OooCore(bare, cfg, ledger, trace)
    if core == "ino":
        return InOrderCore(bare, cfg, ledger, trace)
    raise ValueError(f"unknown core {core!r}; expected one of {CORES}")


def run_experiment(program: Program, cfg: CoreConfig, core: str,
                   params: EnergyParams | None = None, trace: list | None = None,
                   max_cycles: int = 2_000_000) -> tuple[RunStats, ArchState]:
    sim = make_core(program, cfg, core, params, trace)
    stats = sim.run(max_cycles=max_cycles)
    return stats, sim.arch_state()


SWEEP_FIELDS = [
    "program", "core", "fetch_width", "clusters", "bws_per_cluster",
    "eus_per_cluster", "hb_size", "grf_segments", "cycles", "instructions",
    "ipc", "epc_pj", "energy_pj", "core_energy_pj", "bpu_lookups",
    "bpu_mispredicts", "control_squashes", "memory_squashes",
    "ipc_norm_ooo", "epc_norm_ooo", "ed_inv_norm_ooo",
]


@dataclass
class SweepRow:
    program: str
    cfg: CoreConfig
    core: str
    stats: RunStats

    def record(self, paired_ooo: RunStats) -> dict:
        s = self.stats
        ipc_rel = s.ipc / paired_ooo.ipc if paired_ooo.ipc else 0.0
        epc_rel = s.epc / paired_ooo.epc if paired_ooo.epc else 0.0
        return {
            "program": self.program,
            "core": self.core,
            "fetch_width": self.cfg.fetch_width,
            "clusters": self.cfg.clusters,
            "bws_per_cluster": self.cfg.bws_per_cluster,
            "eus_per_cluster": self.cfg.eus_per_cluster,
            "hb_size": self.cfg.hb_size,
            "grf_segments": self.cfg.grf_segments,
            "cycles": s.cycles,
            "instructions": s.instructions,
            "ipc": s.ipc,
            "epc_pj": s.epc,
            "energy_pj": s.energy_total_pj,
            "core_energy_pj": s.core_energy_pj(),
            "bpu_lookups": s.bpu_lookups,
            "bpu_mispredicts": s.bpu_mispredicts,
            "control_squashes": s.control_squashes,
            "memory_squashes": s.memory_squashes,
            "ipc_norm_ooo": ipc_rel,
            "epc_norm_ooo": epc_rel,
            "ed_inv_norm_ooo": (ipc_rel * ipc_rel / epc_rel) if epc_rel else 0.0,
        }


def sweep(programs: dict[str, Program], configs: list[CoreConfig],
          cores: tuple[str, ...] = CORES,
          params: EnergyParams | None = None) -> list[dict]:
    """Cross product of programs x configs x cores, normalized to the paired
    out-of-order run (same program, same config)."""
    rows = []
    for name, prog in programs.items():
        bare = lower_for_baseline(prog)
        for cfg in configs:
            paired, _ = run_experiment(bare, cfg, "ooo", params)
            for core in cores:
                if core == "ooo":
                    stats = paired
                else:
                    p = prog if core == "cgooo" else bare
                    stats, _ = run_experiment(p, cfg, core, params)
                rows.append(SweepRow(name, cfg, core, stats).record(paired))
    return rows


def write_sweep_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)


def kernel_suite(**overrides) -> dict[str, Program]:
    return {name: kernel_program(name) for name in KERNELS}
