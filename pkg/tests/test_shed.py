import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from gridrestore.distflow import tree_power_flow
from gridrestore.grid import Configuration, FaultSet, is_radial, parse_faults, parse_grid
from gridrestore.islanding import connected_components
from gridrestore.oracle import brute_force_shed_set, random_tree_grid
from gridrestore.shed import (
    FlowRelief,
    NoFeasibleShed,
    RadialityError,
    all_shed,
    enforce_radiality,
    select_shed_buses,
    terminal_nodes,
)

from _util import energized_graph, meshed_grid, random_config

FEEDER = """\
vlimits umin=0.9 umax=1.1 u0=1
bus s pl=0 ql=0 dg pmin=0 pmax=50 qmin=-50 qmax=50
bus a pl=10 ql=2
bus b pl=30 ql=6 w=3
bus c pl=25 ql=5
bus d pl=12 ql=0
branch s a r=0.01 x=0.01 smax=500
branch a b r=0.01 x=0.01 smax=500
branch a c r=0.01 x=0.01 smax=500
branch c d r=0.01 x=0.01 smax=500
"""


def island(grid):
    return connected_components(grid, Configuration())[0]


def test_terminals():
    g = parse_grid(FEEDER)
    assert terminal_nodes(island(g)) == frozenset({"b", "d"})


def test_cheapest_cover_by_impact():
    g = parse_grid(FEEDER)
    comp = island(g)
    # deficit 27: b alone (impact 90), c+d (37), d alone too small
    ss = select_shed_buses(comp, 27.0, g)
    assert set(ss.buses) == {"c", "d"}
    assert ss.impact_total == 37 and ss.p_shed_total == 37
    assert ss.switches_to_open == frozenset({g.branch_by_name("a-c")})
    assert ss.buses[0] == "d"  # terminal end first
    assert select_shed_buses(comp, 12.0, g).buses == ("d",)
    assert select_shed_buses(comp, 0.0, g).buses == ()


def test_unswitchable_branch_blocks_cut():
    g = parse_grid(FEEDER.replace("branch c d r=0.01 x=0.01 smax=500", "branch c d r=0.01 x=0.01 smax=500 noswitch"))
    ss = select_shed_buses(island(g), 12.0, g)
    assert set(ss.buses) == {"c", "d"}


def test_reactive_deficit_must_be_covered():
    g = parse_grid(FEEDER)
    ss = select_shed_buses(island(g), 5.0, g, deficit_q=6.0)
    assert ss.q_shed_total >= 6.0
    assert set(ss.buses) == {"b"}


def test_flow_relief_requirement():
    g = parse_grid(FEEDER)
    comp = island(g)
    k = g.branch_by_name("a-c")
    # a-c carries 37 kW; keep it under 20 while shedding nothing for balance
    ss = select_shed_buses(comp, 0.0, g, relief=[FlowRelief(k, 37.0, 5.0, 26.0)])
    assert ss.buses == ("d",)
    with pytest.raises(NoFeasibleShed):
        select_shed_buses(comp, 0.0, g, relief=[FlowRelief(k, 37.0, 5.0, -1.0)])


def test_infeasible_and_sourceless():
    g = parse_grid(FEEDER)
    with pytest.raises(NoFeasibleShed):
        select_shed_buses(island(g), 100.0, g)
    dead = parse_grid(FEEDER.replace(" dg pmin=0 pmax=50 qmin=-50 qmax=50", ""))
    with pytest.raises(ValueError):
        select_shed_buses(island(dead), 5.0, dead)
    ss = all_shed(island(dead), dead)
    assert ss.p_shed_total == 77 and ss.switches_to_open == frozenset()


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_oracle(seed):
    rng = random.Random(seed)
    g = random_tree_grid(rng, rng.randint(2, 11), switch_prob=0.8, dg_prob=0.15)
    comp = island(g)
    deficit = float(rng.randint(0, int(comp.total_p_load) + 1))
    try:
        want = brute_force_shed_set(comp, deficit, g)
    except ValueError:
        with pytest.raises(NoFeasibleShed):
            select_shed_buses(comp, deficit, g)
        return
    got = select_shed_buses(comp, deficit, g)
    assert got.impact_total == want.impact_total
    assert got.p_shed_total == want.p_shed_total
    assert got.exact


def test_frontier_cap_marks_inexact():
    rng = random.Random(5)
    g = random_tree_grid(rng, 60, integer=False)
    comp = island(g)
    ss = select_shed_buses(comp, comp.total_p_load / 2, g, frontier_cap=3)
    assert not ss.exact
    assert ss.p_shed_total >= comp.total_p_load / 2 - 1e-6


def test_enforce_radiality_small(small):
    tie = small.branch_by_name("b-e")
    cfg = Configuration(closed_ties={tie}, faults=parse_faults(small, "s-a"))
    assert enforce_radiality(small, cfg) == frozenset()
    loop = Configuration(closed_ties={tie})
    opened = enforce_radiality(small, loop)
    assert len(opened) == 1 and tie not in opened
    assert is_radial(small, loop.with_switching(open=opened))


def test_substations_may_not_be_joined():
    text = """vlimits umin=0.9 umax=1.1 u0=1
bus s1 pl=0 ql=0 slack
bus s2 pl=0 ql=0 slack
bus a pl=10 ql=0
bus b pl=10 ql=0
branch s1 a r=0.01 x=0.01 smax=99
branch s2 b r=0.01 x=0.01 smax=99
branch a b r=0.01 x=0.01 smax=99 tie
"""
    g = parse_grid(text)
    cfg = Configuration(closed_ties={2})
    opened = enforce_radiality(g, cfg)
    assert len(opened) == 1 and 2 not in opened


def test_tie_closing_loop_is_reopened_when_nothing_else_switches():
    text = """vlimits umin=0.9 umax=1.1 u0=1
bus s pl=0 ql=0 slack
bus a pl=10 ql=0
bus b pl=10 ql=0
branch s a r=0.01 x=0.01 smax=99 noswitch
branch a b r=0.01 x=0.01 smax=99 noswitch
branch s b r=0.01 x=0.01 smax=99 tie
"""
    g = parse_grid(text)
    assert enforce_radiality(g, Configuration(closed_ties={2})) == frozenset({2})


def test_unswitchable_path_between_substations_raises():
    text = """vlimits umin=0.9 umax=1.1 u0=1
bus s1 pl=0 ql=0 slack
bus s2 pl=0 ql=0 slack
bus a pl=10 ql=0
branch s1 a r=0.01 x=0.01 smax=99 noswitch
branch s2 a r=0.01 x=0.01 smax=99 noswitch
"""
    g = parse_grid(text)
    with pytest.raises(RadialityError):
        enforce_radiality(g, Configuration())


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_enforce_radiality_gives_forest(seed):
    rng = random.Random(seed)
    g = meshed_grid(rng, rng.randint(2, 14), rng.randint(0, 5))
    cfg = random_config(rng, g)
    try:
        opened = enforce_radiality(g, cfg)
    except RadialityError:
        return
    after = Configuration(cfg.closed_ties - opened, cfg.opened_sections | {k for k in opened if not g.branches[k].is_tie},
                          cfg.faults)
    graph = energized_graph(g, after)
    assert nx.is_forest(graph)
    # minimal: every opened branch reconnects two trees of the result
    assert len(opened) == len(cfg.energized(g)) - len(after.energized(g))
    assert nx.number_connected_components(graph) == nx.number_connected_components(energized_graph(g, cfg))
