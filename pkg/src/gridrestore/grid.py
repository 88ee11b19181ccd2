"""Grid data model, grid-file format, validation, faults and the radiality test."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "Generator",
    "Bus",
    "Branch",
    "Grid",
    "FaultSet",
    "Configuration",
    "GridError",
    "GridParseError",
    "ConfigurationError",
    "parse_grid",
    "load_grid",
    "serialize_grid",
    "parse_faults",
    "validate",
    "is_radial",
    "apply_fault",
]

NORMAL = "normal"
TIE = "tie"

# slack buses without an explicit generator record get this multiple of total demand
SLACK_CAP_FACTOR = 10.0

_ID_RE = re.compile(r"^[^\s,=#-]+$")


class GridError(ValueError):
    """Structural problem with a grid (unknown bus, duplicate branch, ...)."""


class GridParseError(GridError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{where}{message}")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Generator:
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class Bus:
    id: str
    p_load: float = 0.0
    q_load: float = 0.0
    weight: float = 1.0
    dg: Generator | None = None
    is_slack: bool = False
    u_min: float = 0.81
    u_max: float = 1.21

    @property
    def is_source(self) -> bool:
        return self.is_slack or self.dg is not None


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    s_max: float
    kind: str = NORMAL
    has_switch: bool = True

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"

    @property
    def is_tie(self) -> bool:
        return self.kind == TIE

    @property
    def ends(self) -> tuple[str, str]:
        return self.from_bus, self.to_bus


@dataclass(frozen=True)
class Grid:
    """Immutable bus/branch model.

    Voltages are squared per-unit magnitudes. ``s_base`` (kVA) and ``z_base``
    (ohm) convert flows and impedances to per-unit in the voltage-drop
    relation; both default to 1 so that raw file units are used as-is.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    u_nominal: float = 1.0
    big_m: float = 1e6
    s_base: float = 1.0
    z_base: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        index = {}
        for i, bus in enumerate(self.buses):
            if bus.id in index:
                raise GridError(f"duplicate bus {bus.id!r}")
            index[bus.id] = i
        pairs = {}
        for k, br in enumerate(self.branches):
            for end in br.ends:
                if end not in index:
                    raise GridError(f"branch {br.name} references unknown bus {end!r}")
            if br.from_bus == br.to_bus:
                raise GridError(f"branch {br.name} is a self-loop")
            key = frozenset(br.ends)
            if key in pairs:
                raise GridError(
                    f"duplicate branch {br.name} (same buses as {self.branches[pairs[key]].name})"
                )
            pairs[key] = k
        object.__setattr__(self, "_bus_index", index)
        object.__setattr__(self, "_pair_index", pairs)

    # lookups -----------------------------------------------------------

    def bus_index(self, bus_id: str) -> int:
        try:
            return self._bus_index[bus_id]
        except KeyError:
            raise GridError(f"unknown bus {bus_id!r}") from None

    def bus(self, bus_id: str) -> Bus:
        return self.buses[self.bus_index(bus_id)]

    def has_bus(self, bus_id: str) -> bool:
        return bus_id in self._bus_index

    def find_branch(self, a: str, b: str) -> int:
        """Index of the branch joining ``a`` and ``b`` in either direction."""
        for end in (a, b):
            if end not in self._bus_index:
                raise GridError(f"unknown bus {end!r}")
        try:
            return self._pair_index[frozenset((a, b))]
        except KeyError:
            raise GridError(f"no branch between {a!r} and {b!r}") from None

    def branch_by_name(self, name: str) -> int:
        a, sep, b = name.strip().partition("-")
        if not sep:
            raise GridError(f"branch reference {name!r} is not of the form <from>-<to>")
        return self.find_branch(a.strip(), b.strip())

    @cached_property
    def tie_indices(self) -> tuple[int, ...]:
        return tuple(k for k, br in enumerate(self.branches) if br.is_tie)

    @cached_property
    def slack_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses if b.is_slack)

    @cached_property
    def total_p_load(self) -> float:
        return math.fsum(b.p_load for b in self.buses)

    @cached_property
    def total_q_load(self) -> float:
        return math.fsum(b.q_load for b in self.buses)

    def source_limits(self, bus: Bus) -> Generator | None:
        """Dispatch box of a source bus; slacks without a record get a large cap."""
        if bus.dg is not None:
            return bus.dg
        if bus.is_slack:
            cap_p = SLACK_CAP_FACTOR * self.total_p_load
            cap_q = SLACK_CAP_FACTOR * self.total_q_load
            return Generator(0.0, cap_p, -cap_q, cap_q)
        return None


@dataclass(frozen=True)
class FaultSet:
    faulted: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "faulted", frozenset(self.faulted))

    def __len__(self) -> int:
        return len(self.faulted)

    def names(self, grid: Grid) -> list[str]:
        return sorted(grid.branches[k].name for k in self.faulted)


@dataclass(frozen=True)
class Configuration:
    """Switch state of the grid: closed ties, opened sections, removed faults."""

    closed_ties: frozenset[int] = frozenset()
    opened_sections: frozenset[int] = frozenset()
    faults: FaultSet = field(default_factory=FaultSet)

    def __post_init__(self):
        object.__setattr__(self, "closed_ties", frozenset(self.closed_ties))
        object.__setattr__(self, "opened_sections", frozenset(self.opened_sections))

    def is_energized(self, grid: Grid, k: int) -> bool:
        if k in self.faults.faulted or k in self.opened_sections:
            return False
        return not grid.branches[k].is_tie or k in self.closed_ties

    def energized(self, grid: Grid) -> list[int]:
        return [k for k in range(len(grid.branches)) if self.is_energized(grid, k)]

    def with_switching(self, close: Iterable[int] = (), open: Iterable[int] = ()) -> Configuration:
        return replace(
            self,
            closed_ties=self.closed_ties | frozenset(close),
            opened_sections=self.opened_sections | frozenset(open),
        )

    def check(self, grid: Grid) -> None:
        n = len(grid.branches)
        faulted = self.faults.faulted
        for k in self.closed_ties:
            if not 0 <= k < n or not grid.branches[k].is_tie:
                raise ConfigurationError(f"closed tie {k} is not a tie line")
            if k in faulted:
                raise ConfigurationError(f"closed tie {grid.branches[k].name} is faulted")
        for k in self.opened_sections:
            if not 0 <= k < n or grid.branches[k].is_tie:
                raise ConfigurationError(f"opened section {k} is not a normal branch")
            if not grid.branches[k].has_switch:
                raise ConfigurationError(f"branch {grid.branches[k].name} has no switch")
            if k in faulted:
                raise ConfigurationError(f"opened section {grid.branches[k].name} is faulted")


# ---------------------------------------------------------------------------
# grid file format


def _tokens(line: str):
    for m in re.finditer(r"\S+", line):
        yield m.start() + 1, m.group()


def _number(value: str, lineno: int, col: int) -> float:
    try:
        v = float(value)
    except ValueError:
        raise GridParseError(f"expected a number, got {value!r}", lineno, col) from None
    if not math.isfinite(v):
        raise GridParseError(f"non-finite number {value!r}", lineno, col)
    return v


def _keyvals(toks, lineno, allowed, flags=()):
    vals, seen_flags = {}, []
    for col, tok in toks:
        if tok in flags:
            seen_flags.append((col, tok))
            continue
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise GridParseError(f"unexpected token {tok!r}", lineno, col)
        if key in vals:
            raise GridParseError(f"repeated key {key!r}", lineno, col)
        vals[key] = (_number(value, lineno, col + len(key) + 1), col)
    return vals, seen_flags


def _require(vals, keys, lineno, col):
    missing = [k for k in keys if k not in vals]
    if missing:
        raise GridParseError(f"missing {', '.join(missing)}", lineno, col)


def parse_grid(text: str) -> Grid:
    """Parse grid-file text into a validated :class:`Grid`.

    Raises :class:`GridParseError` for syntax problems and :class:`GridError`
    for structural ones (unknown buses, duplicates, invariant violations).
    """
    vlimits = None
    bus_rows = []
    branch_rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = list(_tokens(line))
        if not toks:
            continue
        col, kw = toks[0]
        if kw == "vlimits":
            if vlimits is not None:
                raise GridParseError("vlimits given more than once", lineno, col)
            vals, _ = _keyvals(toks[1:], lineno, {"umin", "umax", "u0", "bigm", "sbase", "zbase"})
            _require(vals, ("umin", "umax", "u0"), lineno, col)
            vlimits = {k: v for k, (v, _) in vals.items()}
        elif kw == "bus":
            if len(toks) < 2:
                raise GridParseError("bus needs an id", lineno, col)
            bcol, bid = toks[1]
            if not _ID_RE.match(bid):
                raise GridParseError(f"invalid bus id {bid!r}", lineno, bcol)
            rest = toks[2:]
            dg_at = next((i for i, (_, t) in enumerate(rest) if t == "dg"), None)
            main, dg_toks = (rest, None) if dg_at is None else (rest[:dg_at], rest[dg_at + 1:])
            vals, flags = _keyvals(main, lineno, {"pl", "ql", "w"}, flags=("slack",))
            _require(vals, ("pl", "ql"), lineno, col)
            dg = None
            if dg_toks is not None:
                dvals, _ = _keyvals(dg_toks, lineno, {"pmin", "pmax", "qmin", "qmax"})
                _require(dvals, ("pmin", "pmax", "qmin", "qmax"), lineno, rest[dg_at][0])
                dg = Generator(dvals["pmin"][0], dvals["pmax"][0], dvals["qmin"][0], dvals["qmax"][0])
            bus_rows.append(
                (lineno, bid, vals["pl"][0], vals["ql"][0], vals.get("w", (1.0, 0))[0], dg, bool(flags))
            )
        elif kw == "branch":
            if len(toks) < 3:
                raise GridParseError("branch needs two bus ids", lineno, col)
            (fcol, fb), (tcol, tb) = toks[1], toks[2]
            vals, flags = _keyvals(toks[3:], lineno, {"r", "x", "smax"}, flags=("tie", "noswitch"))
            _require(vals, ("r", "x", "smax"), lineno, col)
            names = {t for _, t in flags}
            branch_rows.append(
                (lineno, fcol, tcol, Branch(fb, tb, vals["r"][0], vals["x"][0], vals["smax"][0],
                                            TIE if "tie" in names else NORMAL, "noswitch" not in names))
            )
        else:
            raise GridParseError(f"unknown record {kw!r}", lineno, col)
    if vlimits is None:
        raise GridParseError("missing vlimits record")

    umin, umax = vlimits["umin"], vlimits["umax"]
    buses = [
        Bus(bid, pl, ql, w, dg, slack, umin, umax) for (_, bid, pl, ql, w, dg, slack) in bus_rows
    ]
    known = set()
    for (lineno, bid, *_rest) in bus_rows:
        if bid in known:
            raise GridParseError(f"duplicate bus {bid!r}", lineno, 5)
        known.add(bid)
    pairs = set()
    for lineno, fcol, tcol, br in branch_rows:
        for end, c in ((br.from_bus, fcol), (br.to_bus, tcol)):
            if end not in known:
                raise GridParseError(f"unknown bus {end!r}", lineno, c)
        key = frozenset(br.ends)
        if key in pairs or br.from_bus == br.to_bus:
            raise GridParseError(f"duplicate or self-loop branch {br.name}", lineno, fcol)
        pairs.add(key)

    grid = Grid(
        tuple(buses),
        tuple(br for *_ , br in branch_rows),
        u_nominal=vlimits["u0"],
        big_m=vlimits.get("bigm", 1e6),
        s_base=vlimits.get("sbase", 1.0),
        z_base=vlimits.get("zbase", 1.0),
    )
    problems = validate(grid)
    if problems:
        raise GridError("; ".join(problems))
    return grid


def load_grid(path) -> Grid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read())


def _fmt(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def serialize_grid(grid: Grid) -> str:
    """Render a grid in the file format; ``parse_grid`` inverts it exactly."""
    umin = grid.buses[0].u_min if grid.buses else 0.81
    umax = grid.buses[0].u_max if grid.buses else 1.21
    head = f"vlimits umin={_fmt(umin)} umax={_fmt(umax)} u0={_fmt(grid.u_nominal)} bigm={_fmt(grid.big_m)}"
    if grid.s_base != 1.0 or grid.z_base != 1.0:
        head += f" sbase={_fmt(grid.s_base)} zbase={_fmt(grid.z_base)}"
    lines = [head]
    for b in grid.buses:
        row = f"bus {b.id} pl={_fmt(b.p_load)} ql={_fmt(b.q_load)}"
        if b.weight != 1.0:
            row += f" w={_fmt(b.weight)}"
        if b.is_slack:
            row += " slack"
        if b.dg is not None:
            g = b.dg
            row += f" dg pmin={_fmt(g.p_min)} pmax={_fmt(g.p_max)} qmin={_fmt(g.q_min)} qmax={_fmt(g.q_max)}"
        lines.append(row)
    for br in grid.branches:
        row = f"branch {br.from_bus} {br.to_bus} r={_fmt(br.r)} x={_fmt(br.x)} smax={_fmt(br.s_max)}"
        if br.is_tie:
            row += " tie"
        if not br.has_switch:
            row += " noswitch"
        lines.append(row)
    return "\n".join(lines) + "\n"


def parse_faults(grid: Grid, text: str | Sequence[str]) -> FaultSet:
    """Parse ``"a-b,c-d"`` (or a list of ``"a-b"``) into a validated FaultSet."""
    items = text.split(",") if isinstance(text, str) else list(text)
    faulted = set()
    for item in items:
        item = item.strip()
        if not item:
            continue
        k = grid.branch_by_name(item)
        faulted.add(k)
    faults = FaultSet(frozenset(faulted))
    _check_faults(grid, faults)
    return faults


def _check_faults(grid: Grid, faults: FaultSet) -> None:
    for k in faults.faulted:
        if not 0 <= k < len(grid.branches):
            raise ConfigurationError(f"fault index {k} out of range")
        if grid.branches[k].is_tie:
            raise ConfigurationError(f"tie line {grid.branches[k].name} cannot be faulted")


# ---------------------------------------------------------------------------
# checks


def _count_components(n: int, edges: Iterable[tuple[int, int]]) -> tuple[int, int]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    m = 0
    comps = n
    for a, b in edges:
        m += 1
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            comps -= 1
    return m, comps


def is_radial(grid: Grid, config: Configuration) -> bool:
    """True iff the energized branches form a forest.

    Uses the edge-count criterion: a graph whose components are all connected
    by construction is a forest exactly when ``|E| = |V| - #components``.
    """
    idx = grid._bus_index
    edges = [
        (idx[grid.branches[k].from_bus], idx[grid.branches[k].to_bus])
        for k in config.energized(grid)
    ]
    m, comps = _count_components(len(grid.buses), edges)
    return m == len(grid.buses) - comps


def apply_fault(grid: Grid, faults: FaultSet) -> Configuration:
    """Post-fault baseline: ties open, no sections opened, faults removed."""
    _check_faults(grid, faults)
    return Configuration(faults=faults)


def validate(grid: Grid) -> list[str]:
    problems = []
    for b in grid.buses:
        if not _ID_RE.match(b.id):
            problems.append(f"bus {b.id}: invalid id")
        if b.p_load < 0 or b.q_load < 0:
            problems.append(f"bus {b.id}: negative load")
        if not b.weight > 0:
            problems.append(f"bus {b.id}: weight must be positive")
        if not (0 < b.u_min < b.u_max):
            problems.append(f"bus {b.id}: voltage bounds must satisfy 0 < umin < umax")
        if b.dg is not None:
            g = b.dg
            if g.p_min > g.p_max or g.q_min > g.q_max:
                problems.append(f"bus {b.id}: generator bounds inverted")
            if g.p_min < 0:
                problems.append(f"bus {b.id}: generator pmin negative")
    for br in grid.branches:
        if br.r < 0 or br.x < 0:
            problems.append(f"branch {br.name}: negative impedance")
        if not br.s_max > 0:
            problems.append(f"branch {br.name}: smax must be positive")
        if br.is_tie and not br.has_switch:
            problems.append(f"branch {br.name}: tie line without switch")
    if not grid.u_nominal > 0:
        problems.append("vlimits: u0 must be positive")
    if not is_radial(grid, Configuration()):
        problems.append("normal topology not radial")
    return problems
