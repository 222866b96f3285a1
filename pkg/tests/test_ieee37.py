import math

from dsrmilp.ieee37 import ASSUMPTIONS, SPOT_LOADS, build_ieee37


def _bus(f, name):
    return f.bus_by_name(name)


def test_packaged_file_matches_builder(ieee37):
    assert ieee37 == build_ieee37()


def test_size_and_classes(ieee37):
    ieee_buses = [b for b in ieee37.buses if b.kind != "root" and not b.name.endswith("pv")]
    assert len(ieee_buses) == 36
    assert ieee37.buses[0].name == "799"
    assert len(ieee37.switches) == 5
    assert len(ieee37.regulators) == 1
    assert sum(not ieee37.edges[k].normally_closed for k in ieee37.switches) == 2


def test_black_start_units(ieee37):
    assert _bus(ieee37, "705").kind == "gen_black_start"
    assert _bus(ieee37, "705").rating == 459.3
    assert _bus(ieee37, "710").rating == 918.5
    lead = min(ieee37.black_start, key=ieee37.rank_key)
    assert ieee37.buses[lead].name == "710"
    for b in (ieee37.buses[i] for i in ieee37.black_start):
        assert math.isclose(b.q_max, 0.484 * b.rating)
        assert b.p_max == b.rating


def test_solar_units_are_half_the_host_load(ieee37):
    for host in ("718", "730", "738"):
        pv = _bus(ieee37, f"{host}pv")
        assert pv.kind == "gen_non_black_start"
        assert math.isclose(pv.p_max, 0.5 * SPOT_LOADS[host][0])
        assert pv.q_min == pv.q_max == 0.0


def test_elastic_loads(ieee37):
    for name in ("701", "722", "737", "738"):
        b = _bus(ieee37, name)
        assert b.kind == "load_elastic"
        assert math.isclose(b.p_max, b.p_min / 2)
    fixed = [b for b in ieee37.buses if b.kind == "load_fixed"]
    assert fixed and all(b.p_min == b.p_max for b in fixed)


def test_voltage_window_and_penalty(ieee37):
    for b in ieee37.buses[1:]:
        assert math.isclose(b.v_min, 0.97 ** 2)
        assert math.isclose(b.v_max, 1.03 ** 2)
    assert ieee37.v0 == 1.0
    assert ieee37.lam == 1e-3


def test_assumptions_are_documented():
    assert len(ASSUMPTIONS) >= 4
