from __future__ import annotations

import pytest

from blocksim.blockcore import BlockCore
from blocksim.compiler import lower_for_baseline
from blocksim.config import CoreConfig
from blocksim.harness import run_experiment
from blocksim.inocore import InOrderCore
from blocksim.isa import parse_program
from blocksim.ooocore import OooCore
from blocksim.oracle import run_functional


@pytest.fixture
def small_cfg():
    return CoreConfig(fetch_width=2, clusters=1, bws_per_cluster=4, eus_per_cluster=2, hb_size=3)


def nonzero(mem):
    return {a: v for a, v in mem.items() if v != 0}


def assert_matches_oracle(program, state, used=None):
    fs = run_functional(program)
    used = sorted(program.used_globals()) if used is None else used
    got = {i: state.globals_[i] for i in used}
    want = {i: fs.globals_[i] for i in used}
    assert got == want, f"register divergence: {_diff(got, want)}"
    assert nonzero(state.memory) == nonzero(fs.memory)


def _diff(got, want):
    return {k: (got[k], want[k]) for k in got if got[k] != want[k]}


def tri_run(program, cfg, max_cycles=300_000):
    """Run all three cores and assert final state equals the oracle."""
    out = {}
    for core in ("cgooo", "ooo", "ino"):
        stats, state = run_experiment(program, cfg, core, max_cycles=max_cycles)
        assert_matches_oracle(program, state)
        out[core] = stats
    return out
