"""Bounded exhaustive checks of the store/flush simulation properties.

Items 1-8 relate single steps or short label sequences.  ``gamma ==a==> gamma'``
means a run labelled ``a`` with silent steps allowed anywhere.  Every silent
step strictly lowers ``semantics.tau_measure``, so a chain of silent steps has
length at most N * |Loc|, and a budget of 2 * N * |Loc| silent steps lets both
sides of an ``==>`` reach their full closure.  Reports record whether the
budget was ever exhausted, so a closed search is distinguishable from a
truncated one.

``p2`` names the volatile-memory transformation check.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import semantics as sem
from .explorer import TALLY, Tally, reachable_configs
from .semantics import Configuration, Flush, Label, Store, Topology, check_cache_invariant

ITEMS = (1, 2, 3, 4, 5, 6, 7, 8)

DESCRIPTIONS = {
    1: "RStore is stronger than LStore",
    2: "RStore and LStore by the owner are equivalent",
    3: "MStore is stronger than RStore",
    4: "RFlush is stronger than LFlush",
    5: "LFlush after RStore by non-owner is redundant",
    6: "RFlush after MStore is redundant",
    7: "RStore by non-owner is simulated by LStore and LFlush",
    8: "MStore is simulated by LStore and RFlush",
}


@dataclass(frozen=True)
class PropUniverse:
    machines: int
    locs: int
    vals: int = 2
    tau_depth: Optional[int] = None
    """Silent-step budget per ==> trace; defaults to 2 * machines * locs."""
    owners: Optional[tuple[int, ...]] = None
    """Fixed owner per location; by default every owner map is enumerated."""

    def __post_init__(self):
        if self.machines < 1 or self.locs < 0 or self.vals < 1:
            raise ValueError("universe bounds must be positive")
        if self.tau_depth is not None and self.tau_depth < self.machines * self.locs:
            raise ValueError(f"tau depth {self.tau_depth} is below machines*locs = {self.machines * self.locs}")

    @property
    def depth(self) -> int:
        return 2 * self.machines * self.locs if self.tau_depth is None else self.tau_depth

    @property
    def loc_names(self) -> tuple[str, ...]:
        return tuple("xyzuvw"[n] if n < 6 else f"l{n}" for n in range(self.locs))

    def topologies(self) -> list[Topology]:
        names = self.loc_names
        maps = [self.owners] if self.owners is not None else itertools.product(range(1, self.machines + 1), repeat=self.locs)
        return [Topology.make(self.machines, dict(zip(names, m)), (), range(self.vals)) for m in maps]

    def to_json(self) -> dict:
        return {
            "machines": self.machines,
            "locs": self.locs,
            "vals": self.vals,
            "tau_depth": self.depth,
            "owners": "all" if self.owners is None else list(self.owners),
        }


@dataclass
class PropReport:
    item: object
    universe: dict
    instances_checked: int = 0
    counterexamples: list[dict] = field(default_factory=list)
    tau_limit_hit: bool = False
    description: str = ""

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def to_json(self) -> dict:
        return {
            "item": self.item,
            "description": self.description,
            "universe": self.universe,
            "instances_checked": self.instances_checked,
            "counterexamples": self.counterexamples,
            "tau_limit_hit": self.tau_limit_hit,
        }


# ---------------------------------------------------------------------------
# ==> search
# ---------------------------------------------------------------------------


class _Reach:
    """Configurations reachable by visible labels interleaved with silent steps.

    0-1 BFS over (phase, configuration) where silent steps cost one unit and the
    visible label of the current phase costs nothing.  Gives, for every
    reachable final configuration, the fewest silent steps and one such trace.
    """

    def __init__(self, topo: Topology, start: Configuration, labels: Sequence[Label], depth: int, tally: Tally):
        self.limit_hit = False
        n = len(labels)
        dist = {(0, start): 0}
        parent: dict = {(0, start): None}
        dq = deque([(0, start)])
        while dq:
            node = dq.popleft()
            phase, cfg = node
            d = dist[node]
            if phase < n and sem.enabled(cfg, topo, labels[phase]):
                nxt = (phase + 1, sem.step(cfg, topo, labels[phase]))
                if nxt not in dist or dist[nxt] > d:
                    dist[nxt] = d
                    parent[nxt] = (node, labels[phase])
                    tally.observe(nxt[1])
                    dq.appendleft(nxt)
            for tau in sem.tau_labels(cfg, topo):
                nxt = (phase, sem.step(cfg, topo, tau))
                if d + 1 > depth:
                    self.limit_hit = True
                    continue
                if nxt not in dist or dist[nxt] > d + 1:
                    dist[nxt] = d + 1
                    parent[nxt] = (node, tau)
                    tally.observe(nxt[1])
                    dq.append(nxt)
        self._parent = parent
        self.final = {cfg for (phase, cfg) in dist if phase == n}
        self._n = n

    def trace_to(self, cfg: Configuration) -> list[str]:
        out = []
        node = (self._n, cfg)
        while self._parent[node] is not None:
            node, lab = self._parent[node]
            out.append(str(lab))
        return out[::-1]


_FAR = 1 << 30


class _Closures:
    """Memoised silent-step closures over one topology.

    ``tau(cfg)`` maps every configuration reachable from ``cfg`` by silent steps
    to the fewest steps needed.  ``run`` chains closures around visible labels
    and keeps, per final configuration, the smallest total of silent steps, so
    it agrees exactly with a direct search under the same budget.
    """

    def __init__(self, topo: Topology, tally: Tally):
        self.topo, self.tally = topo, tally
        self._memo: dict[Configuration, dict[Configuration, int]] = {}

    def tau(self, cfg: Configuration) -> dict[Configuration, int]:
        got = self._memo.get(cfg)
        if got is not None:
            return got
        dist = {cfg: 0}
        dq = deque([cfg])
        while dq:
            c = dq.popleft()
            for lab in sem.tau_labels(c, self.topo):
                nxt = sem.step(c, self.topo, lab)
                if nxt not in dist:
                    dist[nxt] = dist[c] + 1
                    self.tally.observe(nxt)
                    dq.append(nxt)
        self._memo[cfg] = dist
        return dist

    def run(self, start: Configuration, labels: Sequence[Label], depth: int) -> tuple[dict[Configuration, int], bool]:
        """Final configurations within ``depth`` silent steps, and whether any needed more."""
        cur = dict(self.tau(start))
        for lab in labels:
            stepped: dict[Configuration, int] = {}
            for c, d in cur.items():
                if sem.enabled(c, self.topo, lab):
                    n = sem.step(c, self.topo, lab)
                    if d < stepped.get(n, _FAR):
                        stepped[n] = d
            cur = {}
            for c, d in stepped.items():
                for c2, d2 in self.tau(c).items():
                    if d + d2 < cur.get(c2, _FAR):
                        cur[c2] = d + d2
        over = any(d > depth for d in cur.values())
        return {c: d for c, d in cur.items() if d <= depth}, over


def weak_reach(topo: Topology, start: Configuration, labels: Sequence[Label], depth: int, tally: Optional[Tally] = None) -> set[Configuration]:
    """All gamma' with start ==labels==> gamma' using at most ``depth`` silent steps."""
    return _Reach(topo, start, labels, depth, Tally() if tally is None else tally).final


# ---------------------------------------------------------------------------
# Item checkers
# ---------------------------------------------------------------------------


def _choices(topo: Topology, item: int):
    """Admissible (machine, loc, value) instantiations for ``item``."""
    values = sorted(topo.values)
    for loc in topo.locs:
        k = topo.owner_of(loc)
        if item == 2:
            machines: Iterable[int] = [k]
        elif item in (5, 7):
            machines = [m for m in topo.machines if m != k]
        else:
            machines = topo.machines
        for m in machines:
            if item == 4:
                yield m, loc, None
            else:
                for v in values:
                    yield m, loc, v


def _cex(cfg, labels, expected, got) -> dict:
    return {"start_config": cfg.render(), "labels": labels, "expected": expected, "got": got}


def _strong(topo, cfg, lab):
    return sem.step(cfg, topo, lab) if sem.enabled(cfg, topo, lab) else None


def _check_instance(item: int, topo: Topology, cfg: Configuration, i: int, x: str, v, depth: int, tally: Tally, cl: _Closures):
    """Returns (counterexample or None, silent-step budget exhausted)."""
    L, R, M = (Store(c, i, x, v) for c in "LRM")
    if item in (1, 3):
        lhs = R if item == 1 else M
        rhs = L if item == 1 else R
        target = sem.step(cfg, topo, lhs)
        tally.observe(target)
        reach, over = cl.run(cfg, [rhs], depth)
        if target not in reach:
            return _cex(cfg, [str(lhs)], f"{target.render()} reachable by {rhs} with silent steps", "unreachable"), over
        return None, over
    if item == 2:
        a, b = sem.step(cfg, topo, L), sem.step(cfg, topo, R)
        tally.observe(a)
        tally.observe(b)
        if a != b:
            return _cex(cfg, [str(L)], f"{R} -> {a.render()}", b.render()), False
        return None, False
    if item == 4:
        rf, lf = Flush("R", i, x), Flush("L", i, x)
        after = _strong(topo, cfg, rf)
        if after is None:
            return None, False
        other = _strong(topo, cfg, lf)
        if other != after:
            got = "LFlush disabled" if other is None else other.render()
            return _cex(cfg, [str(rf)], f"{lf} enabled -> {after.render()}", got), False
        return None, False
    if item in (5, 6):
        st = R if item == 5 else M
        fl = Flush("L" if item == 5 else "R", i, x)
        mid = sem.step(cfg, topo, st)
        tally.observe(mid)
        after = _strong(topo, mid, fl)
        if after != mid:
            got = f"{fl} disabled" if after is None else after.render()
            return _cex(cfg, [str(st), str(fl)], f"{fl} enabled, configuration {mid.render()} unchanged", got), False
        return None, False
    # items 7 and 8: compare the ==> closures
    lhs = [L, Flush("L" if item == 7 else "R", i, x)]
    rhs = [R if item == 7 else M]
    left, over_l = cl.run(cfg, lhs, depth)
    right, over_r = cl.run(cfg, rhs, depth)
    missing = sorted(set(left) - set(right), key=lambda c: c.render())
    if missing:
        g = missing[0]
        # shortest witness for the report
        trace = _Reach(topo, cfg, lhs, depth, tally).trace_to(g)
        return _cex(cfg, trace, f"{g.render()} reachable by {rhs[0]} with silent steps", "unreachable"), over_l or over_r
    return None, over_l or over_r


def check_prop1(item: int, universe: PropUniverse, tally: Optional[Tally] = None, max_counterexamples: int = 5) -> PropReport:
    if item not in ITEMS:
        raise ValueError(f"simulation items are 1..8, not {item!r}")
    tally = TALLY if tally is None else tally
    rep = PropReport(item, universe.to_json(), description=DESCRIPTIONS[item])
    total_cex = 0
    for topo in universe.topologies():
        cl = _Closures(topo, tally)
        for cfg in reachable_configs(topo):
            tally.observe(cfg)
            for i, x, v in _choices(topo, item):
                rep.instances_checked += 1
                cex, hit = _check_instance(item, topo, cfg, i, x, v, universe.depth, tally, cl)
                rep.tau_limit_hit |= hit
                if cex is not None:
                    total_cex += 1
                    if len(rep.counterexamples) < max_counterexamples:
                        cex["owners"] = dict(topo.owner)
                        rep.counterexamples.append(cex)
    rep.universe["counterexamples_total"] = total_cex
    return rep


def expected_instances(item: int, universe: PropUniverse) -> int:
    """Closed-form instance count: (#configs) x (#admissible machine, loc, value choices)."""
    n, nl, nv = universe.machines, universe.locs, universe.vals
    per_loc = (1 + nv * (2**n - 1)) * nv
    configs = per_loc**nl
    maps = 1 if universe.owners is not None else n**nl
    machines = {2: 1, 5: n - 1, 7: n - 1}.get(item, n)
    values = 1 if item == 4 else nv
    return maps * configs * nl * machines * values


# ---------------------------------------------------------------------------
# Preservation of cache-uniqueness (used by the mutation harness)
# ---------------------------------------------------------------------------


def all_labels(topo: Topology) -> list[Label]:
    labels: list[Label] = []
    for loc in topo.locs:
        for m in topo.machines:
            for c in "LRM":
                labels += [Store(c, m, loc, v) for v in sorted(topo.values)]
            labels += [Flush("L", m, loc), Flush("R", m, loc)]
            labels += [sem.Load(m, loc, v) for v in sorted(topo.values)]
            labels.append(sem.Tau(loc, m))
        labels.append(sem.Tau(loc, None))
    labels += [sem.GPF(m) for m in topo.machines] + [sem.Crash(m) for m in topo.machines]
    return labels


def check_preservation(universe: PropUniverse, max_counterexamples: int = 5) -> PropReport:
    """Every enabled step from an invariant-satisfying configuration keeps the invariant."""
    rep = PropReport("invariant", universe.to_json(), description="cache-uniqueness is preserved by every step")
    for topo in universe.topologies():
        labels = all_labels(topo)
        for cfg in reachable_configs(topo):
            for lab in labels:
                if not sem.enabled(cfg, topo, lab):
                    continue
                rep.instances_checked += 1
                nxt = sem.step(cfg, topo, lab)
                if not check_cache_invariant(nxt) and len(rep.counterexamples) < max_counterexamples:
                    rep.counterexamples.append(_cex(cfg, [str(lab)], "cache-uniqueness holds", nxt.render()))
    return rep


# ---------------------------------------------------------------------------
# Volatile shared memory that never crashes
# ---------------------------------------------------------------------------


def check_prop2(workloads, memory_may_crash: bool = False, variant: str = "lstore") -> PropReport:
    """Durability of the LFlush-based weakest transformation over volatile memory.

    Each workload's owner machine is made volatile; only the machines that run
    threads may crash unless ``memory_may_crash`` is set.
    """
    from .flit import check_workload, default_config
    from .objects import get_spec

    workloads = list(workloads)
    rep = PropReport("p2", {"workloads": [w.name for w in workloads], "memory_may_crash": memory_may_crash,
                            "variant": variant, "flush_class": "L"},
                     description="LFlush-based transformation is durable if volatile memory machines never crash")
    for w in workloads:
        wl = prop2_workload(w, memory_may_crash)
        r = check_workload(wl, default_config(get_spec(wl.object), variant, wl, flush_class="L"))
        rep.instances_checked += r.histories_checked
        if r.violations:
            rep.counterexamples.append({
                "workload": w.name,
                "violations": r.violations,
                "histories_checked": r.histories_checked,
                "example": [str(e) for e in r.example.events],
            })
    return rep


def prop2_workload(w, memory_may_crash: bool = False):
    """Volatile owner, crash budget restricted to the machines hosting threads."""
    from dataclasses import replace

    budget = max((k for _, k in w.crash_budget), default=0) or 1
    compute = sorted({m for m, _ in w.threads} - {w.owner})
    crashable = compute + ([w.owner] if memory_may_crash else [])
    return replace(
        w,
        volatile=(w.owner,),
        crash_budget=tuple((m, budget) for m in crashable),
        max_crashes=w.max_crashes if w.max_crashes is not None else budget,
    )


def run_items(items: Iterable, universe: PropUniverse, workloads=None, tally: Optional[Tally] = None) -> list[PropReport]:
    out = []
    for it in items:
        if it == "p2":
            out.append(check_prop2(workloads or []))
        else:
            out.append(check_prop1(int(it), universe, tally))
    return out


def parse_items(spec: str) -> list:
    """``1-8``, ``1,3,p2`` and similar.  Raises ValueError on anything else."""
    out: list = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            raise ValueError("empty item")
        if part == "p2":
            out.append("p2")
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            lo, hi = int(a), int(b)
            if lo > hi:
                raise ValueError(f"bad range {part!r}")
            rng = range(lo, hi + 1)
        else:
            rng = range(int(part), int(part) + 1)
        for n in rng:
            if n not in ITEMS:
                raise ValueError(f"no item {n}; valid items are 1-8 and p2")
            out.append(n)
    seen = set()
    return [x for x in out if not (x in seen or seen.add(x))]


# ---------------------------------------------------------------------------
# Mutation harness
# ---------------------------------------------------------------------------


@dataclass
class MutantResult:
    mutant: str
    description: str
    caught_by: list[str]

    @property
    def caught(self) -> bool:
        return bool(self.caught_by)

    def to_json(self) -> dict:
        return {"mutant": self.mutant, "description": self.description, "caught_by": self.caught_by}


def mutation_harness(universes: Sequence[PropUniverse] = (PropUniverse(2, 1, 2), PropUniverse(3, 1, 2)),
                     mutants: Optional[Iterable[str]] = None) -> list[MutantResult]:
    """Run every simulation item and the preservation check under each seeded mutant."""
    out = []
    for name in (sorted(sem.MUTANTS) if mutants is None else mutants):
        caught: list[str] = []
        with sem.mutant(name):
            for u in universes:
                tally = Tally(strict=False)
                for item in ITEMS:
                    if not check_prop1(item, u, tally, max_counterexamples=1).ok and f"item {item}" not in caught:
                        caught.append(f"item {item}")
                if (not check_preservation(u, max_counterexamples=1).ok or tally.holds != tally.visited) and "invariant" not in caught:
                    caught.append("invariant")
        out.append(MutantResult(name, sem.MUTANTS[name], caught))
    return out
