"""Labeled transition system for coherent disaggregated memory with partial crashes.

A configuration is the pair (cache, mem): every machine holds a cache valuation
over all locations (a value or INVALID) and every location has one value in the
physical memory of its owner.  ``step`` applies exactly one transition rule and
``enabled`` evaluates the rule premises.  Flushes block (they are enabled only
once the silent propagation steps have already moved the value out of the way);
the explorer is responsible for inserting those silent steps.

Machines are numbered ``1..N``.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional, Union

INVALID = None
"""Cache entry holding no value."""

STORE_CLASSES = ("L", "R", "M")
FLUSH_CLASSES = ("L", "R")


class SemanticsError(Exception):
    pass


class TopologyError(SemanticsError, ValueError):
    pass


class NotEnabled(SemanticsError):
    """A label was applied in a configuration where its premises do not hold."""


class ValueDomainError(SemanticsError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Topology and configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    machine_count: int
    owner: tuple[tuple[str, int], ...]
    volatile: frozenset[int] = frozenset()
    values: frozenset[int] = frozenset({0, 1, 2})

    def __post_init__(self):
        if not isinstance(self.machine_count, int) or self.machine_count < 1:
            raise TopologyError(f"machine count must be a positive integer, got {self.machine_count!r}")
        seen = set()
        for loc, m in self.owner:
            if loc in seen:
                raise TopologyError(f"duplicate location {loc!r}")
            seen.add(loc)
            if not 1 <= m <= self.machine_count:
                raise TopologyError(f"owner of {loc!r} is machine {m}, outside 1..{self.machine_count}")
        for m in self.volatile:
            if not 1 <= m <= self.machine_count:
                raise TopologyError(f"volatile machine {m} outside 1..{self.machine_count}")
        if 0 not in self.values:
            raise TopologyError("value domain must contain 0")
        # canonical ordering so that equal topologies compare equal
        object.__setattr__(self, "owner", tuple(sorted(self.owner)))
        object.__setattr__(self, "volatile", frozenset(self.volatile))
        object.__setattr__(self, "values", frozenset(self.values))

    @classmethod
    def make(
        cls,
        machines: int,
        owner: Mapping[str, int],
        volatile: Iterable[int] = (),
        values: Iterable[int] = (0, 1, 2),
    ) -> "Topology":
        return cls(machines, tuple(owner.items()), frozenset(volatile), frozenset(values))

    @cached_property
    def locs(self) -> tuple[str, ...]:
        return tuple(loc for loc, _ in self.owner)

    @cached_property
    def loc_index(self) -> dict[str, int]:
        return {loc: n for n, loc in enumerate(self.locs)}

    @cached_property
    def owners(self) -> tuple[int, ...]:
        """Owner machine per location index."""
        return tuple(m for _, m in self.owner)

    @property
    def machines(self) -> range:
        return range(1, self.machine_count + 1)

    def owner_of(self, loc: str) -> int:
        return self.owners[self.index(loc)]

    def index(self, loc: str) -> int:
        try:
            return self.loc_index[loc]
        except KeyError:
            raise TopologyError(f"unknown location {loc!r}") from None

    def check_machine(self, m: int) -> None:
        if not isinstance(m, int) or not 1 <= m <= self.machine_count:
            raise TopologyError(f"unknown machine {m!r}")

    def is_volatile(self, m: int) -> bool:
        return m in self.volatile


@dataclass(frozen=True)
class Configuration:
    """``cache[m-1][n]`` is machine m's entry for location index n; ``mem[n]`` the owner's memory."""

    cache: tuple[tuple[Optional[int], ...], ...]
    mem: tuple[int, ...]
    locs: tuple[str, ...] = field(compare=False, default=())

    def cache_of(self, m: int, loc: str) -> Optional[int]:
        return self.cache[m - 1][self.locs.index(loc)]

    def mem_of(self, loc: str) -> int:
        return self.mem[self.locs.index(loc)]

    def render(self) -> str:
        """Canonical text form, e.g. ``C[1:x=1,y=_;2:x=_,y=_] M[x=0,y=0]``."""
        rows = []
        for m, row in enumerate(self.cache, start=1):
            entries = ",".join(f"{loc}={_fmt(v)}" for loc, v in zip(self.locs, row))
            rows.append(f"{m}:{entries}")
        mem = ",".join(f"{loc}={v}" for loc, v in zip(self.locs, self.mem))
        return f"C[{';'.join(rows)}] M[{mem}]"

    __str__ = render


def _fmt(v: Optional[int]) -> str:
    return "_" if v is INVALID else str(v)


def make_config(topo: Topology, cache: Mapping[tuple[int, str], int] = {}, mem: Mapping[str, int] = {}) -> Configuration:
    """Build a configuration from sparse maps; unspecified entries are INVALID / 0."""
    rows = [[INVALID] * len(topo.locs) for _ in topo.machines]
    for (m, loc), v in cache.items():
        topo.check_machine(m)
        rows[m - 1][topo.index(loc)] = v
    memv = [0] * len(topo.locs)
    for loc, v in mem.items():
        memv[topo.index(loc)] = v
    return Configuration(tuple(map(tuple, rows)), tuple(memv), topo.locs)


def init_config(topology: Topology) -> Configuration:
    """Empty caches, zero-initialised memories."""
    row = (INVALID,) * len(topology.locs)
    return Configuration((row,) * topology.machine_count, (0,) * len(topology.locs), topology.locs)


def check_cache_invariant(cfg: Configuration) -> bool:
    """At most one distinct valid value per location across all caches."""
    for n in range(len(cfg.mem)):
        seen = INVALID
        for row in cfg.cache:
            v = row[n]
            if v is not INVALID:
                if seen is INVALID:
                    seen = v
                elif seen != v:
                    return False
    return True


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Modify:
    """Closed menu of read-modify-write functions: ``add k``, ``cas expected new``, ``xchg v``."""

    kind: str
    a: int
    b: int = 0

    def __post_init__(self):
        if self.kind not in ("add", "cas", "xchg"):
            raise ValueError(f"unknown modify function {self.kind!r}")

    def apply(self, v: int) -> Optional[int]:
        """New value, or None when the RMW fails (a failed CAS)."""
        if self.kind == "add":
            return v + self.a
        if self.kind == "xchg":
            return self.a
        return self.b if v == self.a else None

    def __str__(self):
        if self.kind == "add":
            return f"add({self.a})"
        if self.kind == "xchg":
            return f"xchg({self.a})"
        return f"cas({self.a},{self.b})"


def add(k: int) -> Modify:
    return Modify("add", k)


def cas(expected: int, new: int) -> Modify:
    return Modify("cas", expected, new)


def xchg(v: int) -> Modify:
    return Modify("xchg", v)


@dataclass(frozen=True)
class Store:
    cls: str
    machine: int
    loc: str
    value: int

    def __str__(self):
        return f"{self.cls}Store_{self.machine}({self.loc},{self.value})"


@dataclass(frozen=True)
class Load:
    machine: int
    loc: str
    value: int

    def __str__(self):
        return f"Load_{self.machine}({self.loc},{self.value})"


@dataclass(frozen=True)
class Flush:
    cls: str
    machine: int
    loc: str

    def __str__(self):
        return f"{self.cls}Flush_{self.machine}({self.loc})"


@dataclass(frozen=True)
class GPF:
    machine: int

    def __str__(self):
        return f"GPF_{self.machine}()"


@dataclass(frozen=True)
class Rmw:
    cls: str
    machine: int
    loc: str
    fn: Modify

    def __str__(self):
        return f"{self.cls}Rmw_{self.machine}({self.loc},{self.fn})"


@dataclass(frozen=True)
class Tau:
    """Silent propagation of ``loc``: from ``machine``'s cache to the owner's cache,
    or (``machine is None``) from the owner's cache to its memory."""

    loc: str
    machine: Optional[int] = None

    def __str__(self):
        if self.machine is None:
            return f"tau(CacheMem,{self.loc})"
        return f"tau(CacheCache,{self.machine},{self.loc})"


@dataclass(frozen=True)
class Crash:
    machine: int

    def __str__(self):
        return f"Crash_{self.machine}"


Label = Union[Store, Load, Flush, GPF, Rmw, Tau, Crash]


def LStore(i: int, x: str, v: int) -> Store:
    return Store("L", i, x, v)


def RStore(i: int, x: str, v: int) -> Store:
    return Store("R", i, x, v)


def MStore(i: int, x: str, v: int) -> Store:
    return Store("M", i, x, v)


def LFlush(i: int, x: str) -> Flush:
    return Flush("L", i, x)


def RFlush(i: int, x: str) -> Flush:
    return Flush("R", i, x)


def CacheCache(i: int, x: str) -> Tau:
    return Tau(x, i)


def CacheMem(x: str) -> Tau:
    return Tau(x, None)


# ---------------------------------------------------------------------------
# Seeded rule mutations (test-only).  Used by the mutation harness to confirm
# that the property checkers notice broken semantics.
# ---------------------------------------------------------------------------

MUTANTS = {
    "mstore-keeps-caches": "MStore leaves other caches' copies of x valid",
    "lstore-keeps-others": "LStore does not invalidate x in other caches",
    "rstore-writes-local": "RStore writes the issuing machine's cache instead of the owner's",
    "rstore-no-invalidate": "RStore does not invalidate x in non-owner caches",
    "lflush-no-block": "LFlush is always enabled",
    "rflush-local-only": "RFlush only waits for the issuing machine's cache",
    "cachemem-keeps-caches": "Propagate-Cache-Mem leaves caches valid",
    "cachecache-copies": "Propagate-Cache-Cache keeps the source cache entry",
}

_active_mutant: Optional[str] = None


@contextlib.contextmanager
def mutant(name: Optional[str]) -> Iterator[None]:
    global _active_mutant
    if name is not None and name not in MUTANTS:
        raise ValueError(f"unknown mutant {name!r}; choose from {sorted(MUTANTS)}")
    prev, _active_mutant = _active_mutant, name
    try:
        yield
    finally:
        _active_mutant = prev


def set_mutant(name: Optional[str]) -> None:
    global _active_mutant
    if name is not None and name not in MUTANTS:
        raise ValueError(f"unknown mutant {name!r}")
    _active_mutant = name


def active_mutant() -> Optional[str]:
    return _active_mutant


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------


def read_value(cfg: Configuration, n: int) -> int:
    """The value a load of location index ``n`` observes (cache-uniqueness makes it unique)."""
    for row in cfg.cache:
        v = row[n]
        if v is not INVALID:
            return v
    return cfg.mem[n]


def _cached_anywhere(cfg: Configuration, n: int) -> bool:
    return any(row[n] is not INVALID for row in cfg.cache)


def _check_label(topo: Topology, label: Label) -> None:
    if isinstance(label, Tau):
        topo.index(label.loc)
        if label.machine is not None:
            topo.check_machine(label.machine)
        return
    topo.check_machine(label.machine)
    if isinstance(label, (Store, Load, Flush, Rmw)):
        topo.index(label.loc)
    if isinstance(label, Store) and label.cls not in STORE_CLASSES:
        raise SemanticsError(f"unknown store class {label.cls!r}")
    if isinstance(label, Rmw) and label.cls not in STORE_CLASSES:
        raise SemanticsError(f"unknown RMW class {label.cls!r}")
    if isinstance(label, Flush) and label.cls not in FLUSH_CLASSES:
        raise SemanticsError(f"unknown flush class {label.cls!r}")
    if isinstance(label, (Store, Load)) and label.value not in topo.values:
        raise ValueDomainError(f"{label}: value {label.value} outside domain {sorted(topo.values)}")


def enabled(cfg: Configuration, topo: Topology, label: Label) -> bool:
    _check_label(topo, label)
    m = _active_mutant
    if isinstance(label, (Store, Crash, Rmw)):
        return True
    if isinstance(label, Load):
        return read_value(cfg, topo.index(label.loc)) == label.value
    if isinstance(label, Flush):
        n = topo.index(label.loc)
        if label.cls == "L":
            return m == "lflush-no-block" or cfg.cache[label.machine - 1][n] is INVALID
        if m == "rflush-local-only":
            return cfg.cache[label.machine - 1][n] is INVALID
        return not _cached_anywhere(cfg, n)
    if isinstance(label, GPF):
        return all(v is INVALID for row in cfg.cache for v in row)
    if isinstance(label, Tau):
        n = topo.index(label.loc)
        k = topo.owners[n]
        if label.machine is None:
            return cfg.cache[k - 1][n] is not INVALID
        return label.machine != k and cfg.cache[label.machine - 1][n] is not INVALID
    raise SemanticsError(f"not a label: {label!r}")


def _write_cache(cfg: Configuration, n: int, target: int, v: int, keep_others: bool = False) -> Configuration:
    rows = []
    for m, row in enumerate(cfg.cache, start=1):
        if m == target:
            row = row[:n] + (v,) + row[n + 1:]
        elif not keep_others and row[n] is not INVALID:
            row = row[:n] + (INVALID,) + row[n + 1:]
        rows.append(row)
    return Configuration(tuple(rows), cfg.mem, cfg.locs)


def _write_mem(cfg: Configuration, n: int, v: int, keep_caches: bool = False) -> Configuration:
    mem = cfg.mem[:n] + (v,) + cfg.mem[n + 1:]
    if keep_caches:
        cache = cfg.cache
    else:
        cache = tuple(row if row[n] is INVALID else row[:n] + (INVALID,) + row[n + 1:] for row in cfg.cache)
    return Configuration(cache, mem, cfg.locs)


def _store(cfg: Configuration, topo: Topology, cls: str, i: int, n: int, v: int) -> Configuration:
    m = _active_mutant
    if cls == "L":
        return _write_cache(cfg, n, i, v, keep_others=m == "lstore-keeps-others")
    if cls == "R":
        target = i if m == "rstore-writes-local" else topo.owners[n]
        return _write_cache(cfg, n, target, v, keep_others=m == "rstore-no-invalidate")
    return _write_mem(cfg, n, v, keep_caches=m == "mstore-keeps-caches")


def step(cfg: Configuration, topo: Topology, label: Label) -> Configuration:
    """Apply one transition; raises NotEnabled if the premises do not hold."""
    if not enabled(cfg, topo, label):
        raise NotEnabled(f"{label} is not enabled in {cfg.render()}")
    if isinstance(label, Store):
        return _store(cfg, topo, label.cls, label.machine, topo.index(label.loc), label.value)
    if isinstance(label, Load):
        n = topo.index(label.loc)
        if _cached_anywhere(cfg, n):
            return _write_cache(cfg, n, label.machine, label.value, keep_others=True)
        return cfg
    if isinstance(label, (Flush, GPF)):
        return cfg
    if isinstance(label, Rmw):
        return rmw_step(cfg, topo, label)[0]
    if isinstance(label, Tau):
        n = topo.index(label.loc)
        k = topo.owners[n]
        if label.machine is None:
            return _write_mem(cfg, n, cfg.cache[k - 1][n], keep_caches=_active_mutant == "cachemem-keeps-caches")
        v = cfg.cache[label.machine - 1][n]
        rows = list(cfg.cache)
        if _active_mutant != "cachecache-copies":
            src = rows[label.machine - 1]
            rows[label.machine - 1] = src[:n] + (INVALID,) + src[n + 1:]
        dst = rows[k - 1]
        rows[k - 1] = dst[:n] + (v,) + dst[n + 1:]
        return Configuration(tuple(rows), cfg.mem, cfg.locs)
    if isinstance(label, Crash):
        return crash(cfg, topo, label.machine)
    raise SemanticsError(f"not a label: {label!r}")


def crash(cfg: Configuration, topo: Topology, i: int) -> Configuration:
    rows = list(cfg.cache)
    rows[i - 1] = (INVALID,) * len(cfg.mem)
    mem = cfg.mem
    if topo.is_volatile(i):
        mem = tuple(0 if k == i else v for v, k in zip(mem, topo.owners))
    return Configuration(tuple(rows), mem, cfg.locs)


def rmw_step(cfg: Configuration, topo: Topology, label: Rmw) -> tuple[Configuration, int]:
    """Atomic read-modify-write; returns the successor and the value read.

    The write of ``fn(v)`` is placed like the store of the same class.  A failed
    compare-and-set behaves like a load of ``v``.
    """
    _check_label(topo, label)
    n = topo.index(label.loc)
    v = read_value(cfg, n)
    new = label.fn.apply(v)
    if new is None:
        return step(cfg, topo, Load(label.machine, label.loc, v)), v
    if new not in topo.values:
        raise ValueDomainError(f"{label}: result {new} outside domain {sorted(topo.values)}")
    return _store(cfg, topo, label.cls, label.machine, n, new), v


def tau_labels(cfg: Configuration, topo: Topology) -> list[Tau]:
    """Every enabled silent step, in a fixed order."""
    out = []
    for n, loc in enumerate(topo.locs):
        k = topo.owners[n]
        for m, row in enumerate(cfg.cache, start=1):
            if row[n] is not INVALID:
                out.append(Tau(loc, None) if m == k else Tau(loc, m))
    out.sort(key=lambda t: (t.loc, t.machine is None, t.machine or 0))
    return out


def tau_measure(cfg: Configuration, topo: Topology) -> int:
    """Well-founded measure strictly decreased by every silent step."""
    total = 0
    for n, k in enumerate(topo.owners):
        for m, row in enumerate(cfg.cache, start=1):
            if row[n] is not INVALID:
                total += 1 if m == k else 2
    return total
