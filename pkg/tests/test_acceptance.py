"""One test per acceptance criterion; each records a single PASS/FAIL line."""
import random
import time

import networkx as nx

from gridrestore.distflow import FLOW_LIMIT, InsufficientCapacity, tree_power_flow
from gridrestore.grid import Configuration, is_radial
from gridrestore.islanding import AuxGraph, build_auxiliary_graph, connected_components, merged_balance
from gridrestore.oracle import brute_force_min_shed, brute_force_shed_set, random_aux, random_tree_grid
from gridrestore.runner import check_expectations, load_scenario, restore, run_scenario
from gridrestore.search import enumerate_configs, estimate_min_shed
from gridrestore.shed import NoFeasibleShed, RadialityError, enforce_radiality, select_shed_buses
from gridrestore import kernels

from _util import energized_graph, meshed_grid, random_config
from conftest import SCENARIOS, VERDICTS


def verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    print(line)
    VERDICTS.append(line)
    assert ok, line


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t


def key(configs):
    return sorted(sorted(c) for c in configs)


def test_ieee37_single_fault_713_704(ieee37):
    plan, dt = timed(restore, ieee37, "713-704")
    ok = plan.close_sequence == ["713-724"] and plan.open_sequence == [] and plan.shed_after == 0 and dt < 1.0
    verdict("1 ieee37 fault 713-704", ok,
            f"close={plan.close_sequence} open={plan.open_sequence} shed={plan.shed_after:.3f} kW time={dt:.3f}s")


def test_ieee37_single_fault_730_709(ieee37):
    plan = restore(ieee37, "730-709")
    feeder_744 = "727-744"
    rejected = [vs for c, vs in plan.rejected if c == ["735-728"]]
    flagged = bool(rejected) and any(v.kind == FLOW_LIMIT and v.entity == feeder_744 for v in rejected[0])
    ok = plan.close_sequence == ["708-718"] and plan.open_sequence == [] and plan.shed_after == 0 and flagged
    verdict("2 ieee37 fault 730-709", ok,
            f"close={plan.close_sequence} open={plan.open_sequence} shed={plan.shed_after:.3f} kW "
            f"735-728 rejected at {feeder_744}: {flagged}")


def test_ieee37_double_fault(ieee37):
    plan, dt = timed(restore, ieee37, "730-709,702-713")
    ok = (set(plan.close_sequence) == {"708-718", "735-728"}
          and set(plan.open_sequence) == {"720-707", "703-730", "711-740"}
          and set(plan.shed_bus_ids()) == {"730", "740", "722", "707", "724"}
          and abs(plan.shed_after - 2100.0) <= 0.05 * 2100.0
          and dt < 5.0)
    verdict("3 ieee37 faults 730-709,702-713", ok,
            f"close={plan.close_sequence} open={plan.open_sequence} shed={sorted(plan.shed_bus_ids())} "
            f"{plan.shed_after:.1f} kW time={dt:.3f}s")


def test_ieee37_reduction_percentages(ieee37):
    targets = {"ieee37-s1": 99.45, "ieee37-s2": 99.45, "ieee37-s3": 63.02, "ieee37-s4": 46.73}
    got = {}
    for path in sorted(SCENARIOS.glob("ieee37_*.scn")):
        sc = load_scenario(path)
        got[sc.name] = run_scenario(sc, ieee37).reduction_pct
    ok = set(got) == set(targets) and all(abs(got[n] - t) <= 2.0 for n, t in targets.items())
    verdict("4 ieee37 reductions", ok, ", ".join(f"{n} {got.get(n, float('nan')):.2f} vs {t}"
                                                 for n, t in targets.items()))


def test_four_feeder_single_faults(four_feeder):
    limits = {"four-feeder-s1": (2, 2), "four-feeder-s2": (4, 3)}
    parts, ok = [], len(four_feeder.buses) >= 1068
    for path in sorted(SCENARIOS.glob("four_feeder_*_single.scn")):
        sc = load_scenario(path)
        plan, dt = timed(run_scenario, sc, four_feeder)
        max_close, max_open = limits[sc.name]
        good = (plan.reduction_pct >= 90.0 and len(plan.close_sequence) <= max_close
                and len(plan.open_sequence) <= max_open and dt < 60.0
                and not check_expectations(four_feeder, sc, plan))
        ok = ok and good
        parts.append(f"{sc.name} restored {plan.reduction_pct:.2f}% close={len(plan.close_sequence)} "
                     f"open={len(plan.open_sequence)} time={dt:.2f}s")
    ok = ok and len(parts) == 2
    verdict("5 four-feeder single faults", ok, "; ".join(parts))


def test_search_matches_oracle():
    rng = random.Random(20240601)
    agree = 0
    for _ in range(200):
        aux = random_aux(rng, max_nodes=10, max_ties=12)
        res = enumerate_configs(aux, estimate_min_shed(aux).p, prune=True)
        want = brute_force_min_shed(aux)
        if res.min_shed_p == want.min_shed and key(res.optimal_configs) == key(want.all_optimal_subsets):
            agree += 1
    verdict("6 search vs brute force", agree == 200, f"{agree}/200 instances identical")


def test_shed_selection_matches_oracle():
    rng = random.Random(777)
    agree = 0
    for _ in range(200):
        g = random_tree_grid(rng, rng.randint(2, 12))
        comp = connected_components(g, Configuration())[0]
        deficit = float(rng.randint(0, int(comp.total_p_load)))
        if select_shed_buses(comp, deficit, g).impact_total == brute_force_shed_set(comp, deficit, g).impact_total:
            agree += 1
    verdict("7 shed selection vs brute force", agree == 200, f"{agree}/200 instances identical")


def _residual_check(grid, config):
    worst = 0.0
    try:
        opened = enforce_radiality(grid, config)
    except RadialityError:
        return worst
    ties = {k for k in opened if grid.branches[k].is_tie}
    radial = Configuration(config.closed_ties - ties, config.opened_sections | (opened - ties), config.faults)
    scale = max(grid.total_p_load, grid.total_q_load, 1.0)
    for comp in connected_components(grid, radial):
        if not comp.has_source:
            continue
        dp, dq = max(0.0, -comp.p_balance), max(0.0, -comp.q_balance)
        try:
            ss = select_shed_buses(comp, dp, grid, deficit_q=dq)
            sol = tree_power_flow(grid, comp, {b: grid.bus(b).p_load for b in ss.buses})
        except (NoFeasibleShed, InsufficientCapacity):
            continue
        for p, q in sol.residuals(grid).values():
            worst = max(worst, abs(p) / scale, abs(q) / scale)
    return worst


def test_invariants():
    rng = random.Random(4242)
    residual_bad = radial_bad = mono_bad = perm_bad = 0
    worst = 0.0
    for _ in range(500):
        grid = meshed_grid(rng, rng.randint(2, 16), rng.randint(0, 6), dg_prob=0.25, integer=rng.random() < 0.5)
        config = random_config(rng, grid)

        r = _residual_check(grid, config)
        worst = max(worst, r)
        residual_bad += r >= 1e-9

        radial_bad += is_radial(grid, config) != nx.is_forest(energized_graph(grid, config))

        aux = build_auxiliary_graph(grid, Configuration(faults=config.faults))
        ties = [e.tie_index for e in aux.edges]
        closed = {t for t in ties if rng.random() < 0.7}
        base_shed = merged_balance(aux, closed).shed_p
        mono_bad += any(merged_balance(aux, closed - {t}).shed_p < base_shed - 1e-9 for t in closed)

        ref = estimate_min_shed(aux).p
        res = enumerate_configs(aux, ref)
        perm = list(range(len(aux.edges)))
        rng.shuffle(perm)
        shuffled = AuxGraph.from_balances(aux.balances_p, [(aux.edges[i].node_a, aux.edges[i].node_b) for i in perm],
                                          aux.balances_q)
        res2 = enumerate_configs(shuffled, ref)
        mapped = [frozenset(aux.edges[perm[j]].tie_index for j in c) for c in res2.optimal_configs]
        perm_bad += key(mapped) != key(res.optimal_configs) or res.min_shed_p != res2.min_shed_p

    ok = residual_bad == radial_bad == mono_bad == perm_bad == 0
    verdict("8 invariant suite", ok,
            f"500 samples: residual>{1e-9:g} {residual_bad} (max {worst:.1e}), radiality mismatches {radial_bad}, "
            f"monotonicity violations {mono_bad}, permutation mismatches {perm_bad}")


def test_complexity_instrumentation(ieee37):
    rng = random.Random(15)
    full_ok = True
    backends = ["python"] + (["cython"] if kernels.compiled_kernels is not None else [])
    for m in range(16):
        n = rng.randint(2, 10)
        edges = []
        while len(edges) < m:
            a, b = rng.randrange(n), rng.randrange(n)
            if a != b:
                edges.append((a, b))
        aux = AuxGraph.from_balances([rng.randint(-60, 40) for _ in range(n)], edges)
        for backend in backends:
            res = enumerate_configs(aux, estimate_min_shed(aux).p, prune=False, backend=backend)
            full_ok = full_ok and res.explored == 2 ** m
    explored = {}
    for path in sorted(SCENARIOS.glob("ieee37_*.scn")):
        sc = load_scenario(path)
        explored[sc.name] = run_scenario(sc, ieee37, prune=True).search_stats["explored"]
    ok = full_ok and all(v <= 200 for v in explored.values())
    verdict("9 complexity instrumentation", ok,
            f"unpruned visits == 2^m for m=0..15 on {'+'.join(backends)}: {full_ok}; pruned explored {explored}")
