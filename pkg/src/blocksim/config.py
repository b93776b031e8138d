"""Core configuration knobs shared by the three cores, with range validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CoreConfig:
    fetch_width: int = 4

    # Block core geometry. Totals are per-cluster counts times clusters.
    clusters: int = 1
    bws_per_cluster: int = 4
    eus_per_cluster: int = 4
    hb_size: int = 4
    iq_size: int = 10
    grf_segments: int = 4
    brob_entries: int = 16
    lrf_size: int = 20
    block_commit_width: int = 2
    block_pc_buffer: int = 8
    squash_drain_first: bool = False

    # Register files.
    n_arch_regs: int = 64
    n_phys_regs: int = 256
    ino_rf_entries: int = 70

    # Baseline out-of-order core.
    ooo_window: int = 128
    rob_entries: int = 160

    # Baseline in-order core.
    ino_iq: int = 8

    # Shared memory system.
    lq_entries: int = 64
    sq_entries: int = 32
    l1_kb: int = 32
    l1_assoc: int = 8
    l1_latency: int = 4
    l2_kb: int = 256
    l2_assoc: int = 8
    l2_latency: int = 12
    l3_kb: int = 4096
    l3_assoc: int = 8
    l3_latency: int = 40
    mem_latency: int = 100
    line_bytes: int = 64

    # Shared branch prediction unit.
    gshare_entries: int = 8192
    bimodal_entries: int = 8192
    meta_entries: int = 8192
    ghist_bits: int = 13
    btb_entries: int = 4096
    btb_assoc: int = 8
    btb_tag_bits: int = 16
    ras_depth: int = 16

    def __post_init__(self):
        checks = [
            ("fetch_width", 1, 8),
            ("clusters", 1, 3),
            ("bws_per_cluster", 1, 6),
            ("eus_per_cluster", 1, 8),
            ("hb_size", 1, 5),
            ("grf_segments", 1, 18),
            ("iq_size", 1, 64),
            ("brob_entries", 1, 256),
            ("block_pc_buffer", 2, 64),
            ("block_commit_width", 1, 8),
        ]
        for name, lo, hi in checks:
            v = getattr(self, name)
            if not (lo <= v <= hi):
                raise ConfigError(f"{name}={v} outside [{lo}, {hi}]")
        if self.grf_segments > self.n_phys_regs:
            raise ConfigError("more segments than physical registers")

    @property
    def total_bws(self) -> int:
        return self.clusters * self.bws_per_cluster

    def replace(self, **kw) -> "CoreConfig":
        d = asdict(self)
        d.update(kw)
        return CoreConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path: str) -> "CoreConfig":
        """Read a key = value config file; unknown keys are errors."""
        names = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path) as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if not sep or key not in names:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _coerce(val)
        return cls(**values)


def _coerce(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    return int(val, 0)


def parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, val = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not key=value")
        out[key.strip()] = _coerce(val.strip())
    return out
