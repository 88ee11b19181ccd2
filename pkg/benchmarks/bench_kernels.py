"""Time the compiled and pure-Python search kernels on the same random instances.

    python benchmarks/bench_kernels.py --ties 8 12 16 18 --repeat 3
"""
import argparse
import random
import statistics
import time

from gridrestore import kernels
from gridrestore.islanding import AuxGraph
from gridrestore.search import enumerate_configs, estimate_min_shed


def instance(rng, n_nodes, m):
    edges = []
    while len(edges) < m:
        a, b = rng.randrange(n_nodes), rng.randrange(n_nodes)
        if a != b:
            edges.append((a, b))
    return AuxGraph.from_balances([rng.randint(-60, 40) for _ in range(n_nodes)], edges)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ties", type=int, nargs="+", default=[8, 12, 14, 16, 18])
    ap.add_argument("--nodes", type=int, default=10)
    ap.add_argument("--instances", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-prune", action="store_true", help="time the full 2^m enumeration")
    args = ap.parse_args(argv)

    if kernels.compiled_kernels is None:
        print("compiled kernel not built; only the Python kernel is timed")
    backends = ["python"] + (["cython"] if kernels.compiled_kernels is not None else [])
    rng = random.Random(args.seed)
    print(f"{'ties':>4} {'explored':>9} " + " ".join(f"{b + ' (ms)':>14}" for b in backends) + f" {'speedup':>8}")
    for m in args.ties:
        cols = {b: [] for b in backends}
        explored = []
        for _ in range(args.instances):
            aux = instance(rng, args.nodes, m)
            ref = estimate_min_shed(aux).p
            answers = []
            for b in backends:
                dt, res = best_of(lambda: enumerate_configs(aux, ref, prune=not args.no_prune, backend=b),
                                  args.repeat)
                cols[b].append(dt)
                answers.append(sorted(map(sorted, res.optimal_configs)))
            assert all(a == answers[0] for a in answers), "backends disagree"
            explored.append(res.explored)
        ms = {b: 1000 * statistics.median(v) for b, v in cols.items()}
        speed = f"{ms['python'] / ms['cython']:8.1f}x" if "cython" in ms and ms["cython"] > 0 else f"{'-':>8}"
        print(f"{m:>4} {int(statistics.median(explored)):>9} " + " ".join(f"{ms[b]:>14.2f}" for b in backends)
              + f" {speed}")


if __name__ == "__main__":
    main()
