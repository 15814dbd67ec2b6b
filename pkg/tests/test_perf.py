import math

import pytest
from hypothesis import given, strategies as st

from mtj_gxnor.errors import EmptyResultError, ParameterError
from mtj_gxnor.perf import (ARRAY_64, ARRAY_128, BIT_STREAM_PRESET, AssumptionSet,
                            PowerProfile, UpdateConvention, assumptions_from_dict,
                            feedforward_efficiency, profile_from_dict, profile_to_dict,
                            system_efficiency, tiles, tops_per_watt, update_efficiency,
                            update_ops)


def oracle_tops(ops, watts, seconds):
    return ops / watts / seconds / 1e12


def test_feedforward_128_matches_table():
    # 128 rows x (128 GXNOR + 128 accumulate), 28.5 mW over 0.5 ns
    expected = oracle_tops(128 * 256, 28.5e-3, 0.5e-9)
    assert feedforward_efficiency(ARRAY_128) == pytest.approx(expected, rel=1e-12)
    assert feedforward_efficiency(ARRAY_128) == pytest.approx(2299, rel=0.01)


def test_feedforward_64_from_formula():
    expected = oracle_tops(64 * 128, 7.31e-3, 0.5e-9)
    assert feedforward_efficiency(ARRAY_64) == pytest.approx(expected, rel=1e-12)
    assert feedforward_efficiency(ARRAY_64) == pytest.approx(2241.31, rel=1e-5)


def test_doubling_power_halves_efficiency():
    double = PowerProfile(read_power=2 * ARRAY_128.read_power)
    assert feedforward_efficiency(double) == pytest.approx(
        feedforward_efficiency(ARRAY_128) / 2, rel=1e-12)


def test_update_conventions():
    per_mtj = update_efficiency(ARRAY_128, UpdateConvention.PER_MTJ)
    per_syn = update_efficiency(ARRAY_128, UpdateConvention.PER_SYNAPSE)
    assert per_mtj == pytest.approx(oracle_tops(256, 3.25e-3, 2e-9), rel=1e-12)
    assert per_mtj == pytest.approx(39.38, abs=0.01)
    assert per_syn == pytest.approx(per_mtj / 2, rel=1e-12)


def test_column_serial_update_is_flat():
    assert update_efficiency(ARRAY_128, "per_mtj", columns=128) == pytest.approx(
        update_efficiency(ARRAY_128, "per_mtj", columns=1), rel=1e-12)


def test_zero_ops_is_an_error():
    with pytest.raises(EmptyResultError):
        tops_per_watt(0, 1.0, 1.0)
    empty = PowerProfile(rows=0)
    with pytest.raises(EmptyResultError):
        update_efficiency(empty)
    assert update_ops(empty) == 0


def test_zero_power_or_time_is_an_error():
    with pytest.raises(ZeroDivisionError):
        tops_per_watt(10, 0.0, 1.0)
    with pytest.raises(ZeroDivisionError):
        tops_per_watt(10, 1.0, 0.0)


def test_negative_power_rejected():
    with pytest.raises(ParameterError):
        PowerProfile(read_power=-1.0)


def test_system_without_converters_equals_array_figures():
    a = AssumptionSet(include_converters=False)
    rep = system_efficiency(ARRAY_128, a)
    ff, up, _ = rep.phases
    assert ff.tops_per_watt == pytest.approx(feedforward_efficiency(ARRAY_128), rel=1e-12)
    assert up.tops_per_watt == pytest.approx(update_efficiency(ARRAY_128), rel=1e-12)


def test_converters_only_lower_efficiency():
    bare = system_efficiency(ARRAY_128, AssumptionSet(include_converters=False))
    full = system_efficiency(ARRAY_128, AssumptionSet())
    for b, f in zip(bare.phases, full.phases):
        assert f.tops_per_watt < b.tops_per_watt
        assert f.energy == pytest.approx(f.power * f.time)


def test_default_system_figures():
    # per-unit converter power, converters on for each whole phase
    ff, up, inv = system_efficiency().phases
    assert ff.power == pytest.approx(28.5e-3 + 8 * 16e-3 + 256 * 1e-3)
    assert ff.tops_per_watt == pytest.approx(oracle_tops(32768, 0.4125, 0.5e-9), rel=1e-12)
    assert up.power == pytest.approx(3.25e-3 + 256 * 5.52e-3)


def test_bit_stream_preset_reproduces_inverse_read_figure():
    inv = system_efficiency(ARRAY_128, BIT_STREAM_PRESET).phases[2]
    # 128 outputs through 8 ADCs at 1.28 GS/s is 12.5 ns per bit cycle
    assert inv.time == pytest.approx(8 * 12.5e-9)
    assert inv.tops_per_watt == pytest.approx(1.43, rel=0.01)


def test_report_table_and_dict():
    rep = system_efficiency()
    text = rep.table()
    assert "feedforward" in text and "inverse_read" in text and "published" in text
    d = rep.as_dict()
    assert [p["phase"] for p in d["phases"]] == ["feedforward", "update", "inverse_read"]


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_scale_invariance(k_power, k_time):
    base = PowerProfile()
    scaled = PowerProfile(read_power=base.read_power * k_power, t_rd=base.t_rd * k_time)
    assert feedforward_efficiency(scaled) == pytest.approx(
        feedforward_efficiency(base) / (k_power * k_time), rel=1e-9)


@given(st.integers(1, 1000), st.integers(1, 1000))
def test_tiles_cover_matrix(rows, cols):
    n = tiles(rows, cols, ARRAY_128)
    assert n * 128 * 128 >= rows * cols
    assert n == math.ceil(rows / 128) * math.ceil(cols / 128)


def test_profile_round_trip():
    back = profile_from_dict(profile_to_dict(ARRAY_64))
    assert back.rows == 64 and back.read_power == pytest.approx(ARRAY_64.read_power)
    assert [c.name for c in back.converters] == [c.name for c in ARRAY_64.converters]
    assert back.converters[0].power == pytest.approx(16e-3)


def test_assumptions_reject_unknown_keys():
    from mtj_gxnor.errors import ConfigError
    with pytest.raises(ConfigError):
        assumptions_from_dict({"bogus": 1})
    assert assumptions_from_dict({"bit_cycles": 4}).bit_cycles == 4
