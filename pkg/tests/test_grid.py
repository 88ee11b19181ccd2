import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from gridrestore.grid import (
    Configuration,
    ConfigurationError,
    FaultSet,
    GridError,
    GridParseError,
    apply_fault,
    is_radial,
    parse_faults,
    parse_grid,
    serialize_grid,
    validate,
)

from _util import energized_graph, meshed_grid, random_config


def test_parse_small(small):
    assert [b.id for b in small.buses] == ["s", "a", "b", "c", "d", "e"]
    assert small.slack_ids == ("s",)
    assert small.bus("c").weight == 2.0
    assert small.bus("d").dg.p_max == 40
    assert small.tie_indices == (5,)
    assert not small.branches[small.find_branch("d", "s")].has_switch
    assert small.total_p_load == 80


def test_branch_lookup_either_direction(small):
    assert small.branch_by_name("a-b") == small.branch_by_name("b-a") == 1
    with pytest.raises(GridError):
        small.branch_by_name("a-e")
    with pytest.raises(GridError):
        small.branch_by_name("ab")


def test_slack_without_record_gets_large_cap(small):
    lim = small.source_limits(small.bus("s"))
    assert lim.p_max == pytest.approx(10 * 80)
    assert small.source_limits(small.bus("a")) is None


@pytest.mark.parametrize("text, line, col", [
    ("vlimits umin=0.9 umax=1.1 u0=1\nbus a pl=x ql=0 slack\n", 2, 10),
    ("vlimits umin=0.9 umax=1.1 u0=1\nbus a pl=1 ql=0 slack\nwire a b\n", 3, 1),
    ("vlimits umin=0.9 umax=1.1 u0=1\nbus a pl=1 ql=0 slack\nbranch a z r=1 x=1 smax=1\n", 3, 10),
    ("vlimits umin=0.9 umax=1.1 u0=1\nbus a pl=1 slack\n", 2, 1),
    ("vlimits umin=0.9 umax=1.1 u0=1\nbus a pl=1 ql=0 slack\nbus a pl=1 ql=0\n", 3, 5),
])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(GridParseError) as info:
        parse_grid(text)
    assert (info.value.line, info.value.column) == (line, col)


def test_missing_vlimits():
    with pytest.raises(GridParseError):
        parse_grid("bus a pl=1 ql=0 slack\n")


def test_meshed_normal_topology_rejected():
    text = """vlimits umin=0.9 umax=1.1 u0=1
bus a pl=0 ql=0 slack
bus b pl=1 ql=0
bus c pl=1 ql=0
branch a b r=1 x=1 smax=9
branch b c r=1 x=1 smax=9
branch c a r=1 x=1 smax=9
"""
    with pytest.raises(GridError, match="not radial"):
        parse_grid(text)


def test_round_trip_bundled(ieee37, four_feeder):
    for g in (ieee37, four_feeder):
        assert parse_grid(serialize_grid(g)) == g


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip_random(seed):
    rng = random.Random(seed)
    g = meshed_grid(rng, rng.randint(2, 15), rng.randint(0, 5), integer=False)
    assert parse_grid(serialize_grid(g)) == g
    assert validate(g) == []


def test_faults(small):
    fs = parse_faults(small, "a-b, c-a")
    assert fs.names(small) == ["a-b", "a-c"]
    with pytest.raises(ConfigurationError):
        parse_faults(small, "b-e")
    with pytest.raises(GridError):
        parse_faults(small, "a-z")
    base = apply_fault(small, fs)
    assert base.closed_ties == frozenset() and base.opened_sections == frozenset()
    assert not base.is_energized(small, small.branch_by_name("a-b"))


def test_configuration_check(small):
    tie = small.branch_by_name("b-e")
    Configuration(closed_ties={tie}).check(small)
    with pytest.raises(ConfigurationError):
        Configuration(closed_ties={0}).check(small)
    with pytest.raises(ConfigurationError):
        Configuration(opened_sections={tie}).check(small)
    with pytest.raises(ConfigurationError):
        Configuration(opened_sections={small.branch_by_name("s-d")}).check(small)


def test_is_radial_small(small):
    tie = small.branch_by_name("b-e")
    assert is_radial(small, Configuration())
    assert not is_radial(small, Configuration(closed_ties={tie}))
    assert is_radial(small, Configuration(closed_ties={tie}, opened_sections={small.branch_by_name("a-b")}))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_is_radial_matches_networkx(seed):
    rng = random.Random(seed)
    g = meshed_grid(rng, rng.randint(2, 14), rng.randint(0, 5))
    cfg = random_config(rng, g)
    assert is_radial(g, cfg) == nx.is_forest(energized_graph(g, cfg))
