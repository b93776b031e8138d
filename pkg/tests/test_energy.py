from __future__ import annotations

import math

import pytest

from blocksim.energy import (
    EnergyLedger,
    EnergyParams,
    access_energy,
    grf_segment_access_pj,
    ulp_equal,
    wire_energy,
)

P = EnergyParams()


def test_reorder_buffer_entry_ratio_is_exactly_ten():
    big = access_energy(P, 160, 88, 2, 2)
    small = access_energy(P, 16, 88, 2, 2)
    assert math.isclose(big / small, 10.0, rel_tol=1e-12)


def test_local_file_vs_unified_file_lands_near_25x():
    lrf = access_energy(P, 20, 64, 2, 2)
    unified = access_energy(P, 256, 64, 8, 4)
    ratio = unified / lrf
    assert 25 * 0.8 <= ratio <= 25 * 1.2


@pytest.mark.parametrize("segments", [1, 3, 9, 18])
def test_segmented_global_file_divides_exactly(segments):
    unified = access_energy(P, 256, 64, 8, 4)
    assert grf_segment_access_pj(P, segments) == unified / segments


def test_width_scaling_is_linear():
    assert math.isclose(
        access_energy(P, 64, 128, 2, 2) / access_energy(P, 64, 64, 2, 2),
        2.0,
        rel_tol=1e-12,
    )


def test_wire_constants():
    assert math.isclose(wire_energy(P, 64, 2.0), 5.12, rel_tol=1e-12)


def test_zero_entry_table_rejected():
    with pytest.raises(ValueError):
        access_energy(P, 0, 64)


def test_ledger_zero_accesses_and_idle_leakage():
    led = EnergyLedger()
    led.register_flat("unit_a", 3.0, 0.25)
    led.register_flat("unit_b", 5.0, 0.5)
    led.tick(1000)
    assert led.dynamic_total() == 0.0
    assert led.total() == 1000 * (0.25 + 0.5)


def test_ledger_conservation_to_one_ulp():
    led = EnergyLedger()
    led.register_flat("a", 1.37, 0.013)
    led.register_flat("b", 0.0071, 0.0007)
    for i in range(997):
        led.charge("a", i % 3)
        led.charge_pj("b", 0.0041 * (i % 5))
        led.tick()
    total = led.total()
    recomputed = sum(led.dynamic_pj.values()) + led.cycles * led.leak_per_cycle()
    assert ulp_equal(total, recomputed)


def test_unknown_unit_raises_and_counts_track():
    led = EnergyLedger()
    led.register_flat("x", 2.0)
    led.charge("x", 3)
    assert led.counts["x"] == 3 and led.dynamic_pj["x"] == 6.0
    with pytest.raises(KeyError):
        led.charge("nope")


def test_params_file_roundtrip(tmp_path):
    path = tmp_path / "energy.params"
    p = EnergyParams(ram_pj_per_bit=0.125, eu_mul_pj=9.0)
    p.save(str(path))
    q = EnergyParams.load(str(path))
    assert q == p
    path.write_text("no_such_knob = 1\n")
    with pytest.raises(ValueError):
        EnergyParams.load(str(path))


def test_unit_csv_report(tmp_path):
    led = EnergyLedger()
    led.register_flat("a", 2.0, 0.1)
    led.charge("a", 4)
    led.tick(10)
    out = tmp_path / "units.csv"
    led.write_csv(str(out))
    lines = out.read_text().splitlines()
    assert lines[0] == "unit,accesses,dynamic_pj,leakage_pj"
    assert lines[1].startswith("a,4,8.0,")
