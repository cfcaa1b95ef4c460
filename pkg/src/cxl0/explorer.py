"""Exhaustive exploration of fabric traces and multi-threaded programs.

Two search styles share one transition generator:

* ``feasible_trace`` decides whether a serialised fabric trace can be produced
  by the transition system once arbitrarily many silent steps are inserted.
* ``explore`` runs straight-line per-thread programs over every interleaving,
  every placement of silent steps and every crash injection within budget, and
  returns the set of terminal outcomes.  ``explore_histories`` does the same but
  collects the invocation/response/crash histories emitted by marker
  instructions.

The search is depth-first with a visited set and a deterministic successor
order, so reports are reproducible.
"""

from __future__ import annotations

import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from . import semantics as sem
from .history import CrashEv, Event, History, Inv, Res, event_to_json
from .semantics import (
    INVALID,
    Configuration,
    Crash,
    Flush,
    GPF,
    Label,
    Load,
    Modify,
    Rmw,
    Store,
    Topology,
    check_cache_invariant,
    init_config,
)

DEFAULT_STATE_BUDGET = 3_000_000


class StateBudgetExceeded(RuntimeError):
    """Raised instead of silently truncating a search."""

    def __init__(self, budget: int, visited: int, frontier: int):
        super().__init__(f"state budget of {budget} exceeded after {visited} states ({frontier} still on the frontier)")
        self.budget = budget
        self.visited = visited
        self.frontier = frontier


class ProgramError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


def state_budget() -> int:
    raw = os.environ.get("CXL0_STATE_BUDGET")
    return int(raw) if raw else DEFAULT_STATE_BUDGET


@dataclass
class Tally:
    """Counts configurations visited and how many satisfied cache-uniqueness."""

    visited: int = 0
    holds: int = 0
    strict: bool = True
    """Raise on the first violation; a lenient tally only counts."""

    def observe(self, cfg: Configuration) -> None:
        self.visited += 1
        if check_cache_invariant(cfg):
            self.holds += 1
        elif self.strict:
            raise InvariantViolation(f"cache-uniqueness violated in {cfg.render()}")

    def reset(self) -> None:
        self.visited = self.holds = 0


TALLY = Tally()
"""Process-wide tally, reported by the acceptance suite."""


# ---------------------------------------------------------------------------
# Instructions
# ---------------------------------------------------------------------------

Operand = Union[int, str]
"""An integer literal or a register name."""


@dataclass(frozen=True)
class StoreOp:
    cls: str
    loc: str
    value: Operand


@dataclass(frozen=True)
class LoadOp:
    loc: str
    reg: Optional[str] = None
    expect: Optional[int] = None
    """When set the load only proceeds if it observes this value."""


@dataclass(frozen=True)
class FlushOp:
    cls: str
    loc: str


@dataclass(frozen=True)
class GpfOp:
    pass


@dataclass(frozen=True)
class RmwOp:
    cls: str
    loc: str
    fn: Modify
    reg: Optional[str] = None


@dataclass(frozen=True)
class GuardedFlush:
    """Flush ``loc`` iff register ``reg`` holds a positive value; otherwise a no-op."""

    cls: str
    loc: str
    reg: str


@dataclass(frozen=True)
class Assert:
    lhs: Operand
    op: str
    rhs: Operand

    def holds(self, regs: Mapping[str, int]) -> bool:
        left = regs[self.lhs] if isinstance(self.lhs, str) else self.lhs
        right = regs[self.rhs] if isinstance(self.rhs, str) else self.rhs
        return (left == right) if self.op == "==" else (left != right)


@dataclass(frozen=True)
class Invoke:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class Respond:
    """Emit a response; ``how`` is ``none``, ``reg`` (return the register),
    ``eq``/``ne`` (return whether the register equals/differs from ``k``)."""

    op: str
    how: str = "none"
    reg: Optional[str] = None
    k: int = 0

    def value(self, regs: Mapping[str, int]):
        if self.how == "none":
            return None
        v = regs[self.reg]
        if self.how == "reg":
            return v
        return (v == self.k) if self.how == "eq" else (v != self.k)


@dataclass(frozen=True)
class Fence:
    """Ordering point; a no-op under in-order execution."""


Instr = Union[StoreOp, LoadOp, FlushOp, GpfOp, RmwOp, GuardedFlush, Assert, Invoke, Respond, Fence]
MARKERS = (Assert, Invoke, Respond, Fence)


@dataclass(frozen=True)
class Thread:
    tid: int
    machine: int
    code: tuple[Instr, ...]


@dataclass(frozen=True)
class Program:
    topology: Topology
    threads: tuple[Thread, ...]
    crash_budget: tuple[tuple[int, int], ...] = ()
    """(machine, max crashes) pairs; machines not listed never crash individually."""
    max_crashes: Optional[int] = None
    """Optional cap on the total number of individual crashes."""
    recovery: tuple[tuple[int, tuple[Instr, ...]], ...] = ()
    """(machine, code) pairs: a fresh thread running ``code`` is spawned on
    ``machine`` after each of its crashes."""
    full_crashes: int = 0
    """Number of full-system crashes (all machines crash back to back, in every order)."""

    @classmethod
    def make(cls, topology, threads, crash_budget: Mapping[int, int] = {}, max_crashes=None,
             recovery: Mapping[int, Iterable[Instr]] = {}, full_crashes: int = 0) -> "Program":
        threads = tuple(t if isinstance(t, Thread) else Thread(n, t[0], tuple(t[1])) for n, t in enumerate(threads, start=1))
        return cls(
            topology,
            threads,
            tuple(sorted(crash_budget.items())),
            max_crashes,
            tuple(sorted((m, tuple(code)) for m, code in recovery.items())),
            full_crashes,
        )


# ---------------------------------------------------------------------------
# Compilation of threads into atomic steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Step:
    pre: tuple[Invoke, ...]
    instr: Optional[Instr]
    post: tuple[Instr, ...]


@dataclass(frozen=True)
class _CThread:
    tid: int
    machine: int
    steps: tuple[_Step, ...]
    regs: tuple[str, ...]
    asserts: tuple[Assert, ...]
    spawn: Optional[tuple[int, int]] = None
    """(machine, ordinal) of the crash that spawns this recovery thread."""


def _reads(instr: Instr) -> list[str]:
    if isinstance(instr, StoreOp) and isinstance(instr.value, str):
        return [instr.value]
    if isinstance(instr, GuardedFlush):
        return [instr.reg]
    if isinstance(instr, Assert):
        return [r for r in (instr.lhs, instr.rhs) if isinstance(r, str)]
    if isinstance(instr, Respond) and instr.how != "none":
        return [instr.reg]
    return []


def _writes(instr: Instr) -> list[str]:
    if isinstance(instr, (LoadOp, RmwOp)) and instr.reg is not None:
        return [instr.reg]
    return []


def _validate(instr: Instr, topo: Topology) -> None:
    if hasattr(instr, "loc"):
        topo.index(instr.loc)
    if isinstance(instr, StoreOp) and isinstance(instr.value, int) and instr.value not in topo.values:
        raise sem.ValueDomainError(f"store value {instr.value} outside domain {sorted(topo.values)}")
    if isinstance(instr, LoadOp) and instr.expect is not None and instr.expect not in topo.values:
        raise sem.ValueDomainError(f"load value {instr.expect} outside domain {sorted(topo.values)}")


def _compile(tid: int, machine: int, code: tuple[Instr, ...], topo: Topology, spawn=None) -> _CThread:
    topo.check_machine(machine)
    written: list[str] = []
    for instr in code:
        _validate(instr, topo)
        for r in _reads(instr):
            if r not in written:
                raise ProgramError(f"thread {tid}: register {r!r} read before it is written")
        for r in _writes(instr):
            if r not in written:
                written.append(r)
    steps: list[_Step] = []
    pre: list[Instr] = []
    for instr in code:
        if isinstance(instr, Invoke):
            pre.append(instr)
        elif isinstance(instr, MARKERS):
            if steps and not pre:
                last = steps[-1]
                steps[-1] = _Step(last.pre, last.instr, last.post + (instr,))
            else:
                pre.append(instr)
        else:
            steps.append(_Step(tuple(p for p in pre if isinstance(p, Invoke)), instr, tuple(p for p in pre if not isinstance(p, Invoke))))
            pre = []
    if pre:
        # trailing markers with no instruction left to attach to: a pure marker step
        steps.append(_Step(tuple(p for p in pre if isinstance(p, Invoke)), None, tuple(p for p in pre if not isinstance(p, Invoke))))
    asserts = tuple(i for i in code if isinstance(i, Assert))
    return _CThread(tid, machine, tuple(steps), tuple(written), asserts, spawn)


# thread status codes
DORMANT, RUNNING, DONE, DEAD = 0, 1, 2, 3


@dataclass(frozen=True)
class _State:
    cfg: Configuration
    pcs: tuple[int, ...]
    status: tuple[int, ...]
    regs: tuple[tuple[Optional[int], ...], ...]
    crashes: tuple[int, ...]
    full: int


class _Machine:
    """A compiled program plus its successor relation."""

    def __init__(self, prog: Program):
        self.prog = prog
        topo = self.topo = prog.topology
        budget = dict(prog.crash_budget)
        for m in budget:
            topo.check_machine(m)
        self.budget = tuple(budget.get(m, 0) for m in topo.machines)
        self.max_crashes = prog.max_crashes
        threads = [_compile(t.tid, t.machine, t.code, topo) for t in prog.threads]
        if len({t.tid for t in threads}) != len(threads):
            raise ProgramError("duplicate thread ids")
        next_tid = max((t.tid for t in threads), default=0) + 1
        for m, code in prog.recovery:
            allowed = self.budget[m - 1] + prog.full_crashes
            if self.max_crashes is not None:
                allowed = min(self.budget[m - 1], self.max_crashes) + prog.full_crashes
            for ordinal in range(1, allowed + 1):
                threads.append(_compile(next_tid, m, code, topo, spawn=(m, ordinal)))
                next_tid += 1
        self.threads = tuple(threads)
        self.reg_index = [{r: n for n, r in enumerate(t.regs)} for t in threads]

    def initial(self) -> _State:
        status = tuple(DORMANT if t.spawn else (RUNNING if t.steps else DONE) for t in self.threads)
        return _State(
            init_config(self.topo),
            (0,) * len(self.threads),
            status,
            tuple((None,) * len(t.regs) for t in self.threads),
            (0,) * self.topo.machine_count,
            0,
        )

    def regs_of(self, st: _State, n: int) -> dict[str, int]:
        return {r: v for r, v in zip(self.threads[n].regs, st.regs[n]) if v is not None}

    def finished(self, st: _State) -> bool:
        return RUNNING not in st.status

    def can_spawn(self, st: _State) -> bool:
        return any(s == DORMANT for s in st.status) and bool(self._crash_choices(st) or st.full < self.prog.full_crashes)

    # -- one thread step ------------------------------------------------

    def thread_step(self, st: _State, n: int):
        """Return (labels, events, new_state, assertion_failed) or None if blocked."""
        t = self.threads[n]
        step = t.steps[st.pcs[n]]
        topo = self.topo
        cfg = st.cfg
        regs = list(st.regs[n])
        ridx = self.reg_index[n]
        events: list[Event] = [Inv(t.tid, i.op, i.args) for i in step.pre]
        labels: list[Label] = []
        instr = step.instr
        m = t.machine
        if isinstance(instr, StoreOp):
            v = instr.value if isinstance(instr.value, int) else regs[ridx[instr.value]]
            lab = Store(instr.cls, m, instr.loc, v)
            cfg = sem.step(cfg, topo, lab)
            labels.append(lab)
        elif isinstance(instr, LoadOp):
            v = sem.read_value(cfg, topo.index(instr.loc))
            if instr.expect is not None and v != instr.expect:
                return None
            lab = Load(m, instr.loc, v)
            cfg = sem.step(cfg, topo, lab)
            labels.append(lab)
            if instr.reg is not None:
                regs[ridx[instr.reg]] = v
        elif isinstance(instr, FlushOp):
            lab = Flush(instr.cls, m, instr.loc)
            if not sem.enabled(cfg, topo, lab):
                return None
            labels.append(lab)
        elif isinstance(instr, GpfOp):
            lab = GPF(m)
            if not sem.enabled(cfg, topo, lab):
                return None
            labels.append(lab)
        elif isinstance(instr, RmwOp):
            lab = Rmw(instr.cls, m, instr.loc, instr.fn)
            cfg, v = sem.rmw_step(cfg, topo, lab)
            labels.append(lab)
            if instr.reg is not None:
                regs[ridx[instr.reg]] = v
        elif isinstance(instr, GuardedFlush):
            if regs[ridx[instr.reg]] > 0:
                lab = Flush(instr.cls, m, instr.loc)
                if not sem.enabled(cfg, topo, lab):
                    return None
                labels.append(lab)
        named = {r: v for r, v in zip(t.regs, regs) if v is not None}
        for p in step.post:
            if isinstance(p, Respond):
                events.append(Res(t.tid, p.op, p.value(named)))
        pcs = list(st.pcs)
        pcs[n] += 1
        status = st.status
        failed = False
        if pcs[n] == len(t.steps):
            status = status[:n] + (DONE,) + status[n + 1:]
            failed = not all(a.holds(named) for a in t.asserts)
        new = _State(cfg, tuple(pcs), status, st.regs[:n] + (tuple(regs),) + st.regs[n + 1:], st.crashes, st.full)
        return labels, events, new, failed

    # -- crashes --------------------------------------------------------

    def _crash_choices(self, st: _State) -> list[int]:
        if self.max_crashes is not None and sum(st.crashes) - st.full * self.topo.machine_count >= self.max_crashes:
            return []
        return [m for m in self.topo.machines if st.crashes[m - 1] - st.full < self.budget[m - 1]]

    def apply_crash(self, st: _State, m: int, full: bool = False) -> _State:
        cfg = sem.step(st.cfg, self.topo, Crash(m))
        crashes = list(st.crashes)
        crashes[m - 1] += 1
        ordinal = crashes[m - 1]
        status = list(st.status)
        regs = list(st.regs)
        for n, t in enumerate(self.threads):
            if t.machine != m:
                continue
            if status[n] == RUNNING:
                status[n] = DEAD
                regs[n] = (None,) * len(t.regs)
            elif status[n] == DORMANT and t.spawn == (m, ordinal):
                status[n] = RUNNING if t.steps else DONE
        return _State(cfg, st.pcs, tuple(status), tuple(regs), tuple(crashes), st.full + (1 if full else 0))

    # -- successor relation ----------------------------------------------

    def successors(self, st: _State, with_tau: bool = True):
        """Yield (labels, events, next_state, assertion_failed) in a fixed order."""
        for n, s in enumerate(st.status):
            if s == RUNNING:
                r = self.thread_step(st, n)
                if r is not None:
                    yield r
        if with_tau:
            for tau in sem.tau_labels(st.cfg, self.topo):
                yield [tau], [], _State(sem.step(st.cfg, self.topo, tau), st.pcs, st.status, st.regs, st.crashes, st.full), False
        for m in self._crash_choices(st):
            yield [Crash(m)], [CrashEv(m)], self.apply_crash(st, m), False
        if st.full < self.prog.full_crashes:
            for order in itertools.permutations(self.topo.machines):
                cur = st
                for k, m in enumerate(order):
                    cur = self.apply_crash(cur, m, full=(k == len(order) - 1))
                yield [Crash(m) for m in order], [CrashEv(m) for m in order], cur, False


# ---------------------------------------------------------------------------
# Exploration entry points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Outcome:
    regs: tuple[tuple[int, tuple[tuple[str, int], ...]], ...]
    """Per completed thread: (tid, sorted register valuation)."""
    mem: tuple[tuple[str, int], ...]

    def reg_map(self) -> dict[str, int]:
        return {f"{tid}:{r}": v for tid, rs in self.regs for r, v in rs}

    def to_json(self) -> dict:
        return {"regs": self.reg_map(), "mem": dict(self.mem)}


@dataclass
class OutcomeSet:
    outcomes: set[Outcome] = field(default_factory=set)
    assertion_can_fail: bool = False
    witnesses: dict[Outcome, list[Label]] = field(default_factory=dict)
    failure_witness: Optional[list[Label]] = None
    states_visited: int = 0
    blocked_states: int = 0

    def to_json(self, name: str = "") -> dict:
        ordered = sorted(self.outcomes)
        return {
            "test": name,
            "outcomes": [o.to_json() for o in ordered],
            "assertion_can_fail": self.assertion_can_fail,
            "witnesses": {
                "outcomes": [[str(l) for l in self.witnesses[o]] for o in ordered],
                "assertion_failure": None if self.failure_witness is None else [str(l) for l in self.failure_witness],
            },
        }


def _path(parents: dict, st) -> list[Label]:
    out: list[Label] = []
    while True:
        entry = parents[st]
        if entry is None:
            break
        st, labels = entry
        out.extend(reversed(labels))
    out.reverse()
    return out


def explore(prog: Program, tally: Optional[Tally] = None, budget: Optional[int] = None) -> OutcomeSet:
    """All terminal outcomes of ``prog`` (see module docstring)."""
    machine = _Machine(prog)
    tally = TALLY if tally is None else tally
    budget = state_budget() if budget is None else budget
    start = machine.initial()
    parents: dict[_State, Optional[tuple]] = {start: None}
    stack = [start]
    result = OutcomeSet()
    tally.observe(start.cfg)
    while stack:
        st = stack.pop()
        progressed = False
        succs = list(machine.successors(st))
        if machine.finished(st):
            outcome = _outcome(machine, st)
            if outcome not in result.outcomes:
                result.outcomes.add(outcome)
                result.witnesses[outcome] = _path(parents, st)
        for labels, _events, nxt, failed in succs:
            progressed = True
            if failed and not result.assertion_can_fail:
                result.assertion_can_fail = True
                result.failure_witness = _path(parents, st) + list(labels)
            if nxt in parents:
                continue
            parents[nxt] = (st, labels)
            tally.observe(nxt.cfg)
            if len(parents) > budget:
                raise StateBudgetExceeded(budget, len(parents), len(stack))
            stack.append(nxt)
        if not progressed and not machine.finished(st):
            result.blocked_states += 1
    result.states_visited = len(parents)
    return result


def _outcome(machine: _Machine, st: _State) -> Outcome:
    regs = []
    for n, t in enumerate(machine.threads):
        if st.status[n] == DONE:
            regs.append((t.tid, tuple(sorted(machine.regs_of(st, n).items()))))
    return Outcome(tuple(regs), tuple(zip(machine.topo.locs, st.cfg.mem)))


@dataclass
class HistorySet:
    histories: frozenset[tuple[Event, ...]]
    procs: dict[int, int]
    states_visited: int

    def as_histories(self) -> list[History]:
        return [History.of(h, self.procs) for h in sorted(self.histories, key=_history_key)]


def _history_key(h: tuple[Event, ...]):
    return json.dumps([event_to_json(e) for e in h], sort_keys=True)


def explore_histories(prog: Program, tally: Optional[Tally] = None, budget: Optional[int] = None) -> HistorySet:
    """Every distinct history (sequence of Inv/Res/Crash events) the program can emit.

    Uses a memoised search over the state graph, which is acyclic: every thread
    step advances a program counter, crashes consume budget, and silent steps
    strictly decrease ``semantics.tau_measure``.  Exploration stops once no
    thread can run and no further crash could spawn a recovery thread, since
    nothing after that point is visible in a history.
    """
    machine = _Machine(prog)
    tally = TALLY if tally is None else tally
    budget = state_budget() if budget is None else budget
    memo: dict[_State, frozenset] = {}
    empty = frozenset({()})

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20000))

    def suffixes(st: _State) -> frozenset:
        got = memo.get(st)
        if got is not None:
            return got
        if machine.finished(st) and not machine.can_spawn(st):
            memo[st] = empty
            return empty
        out: set = set()
        for _labels, events, nxt, _failed in machine.successors(st):
            if nxt not in memo:
                tally.observe(nxt.cfg)
                if len(memo) > budget:
                    raise StateBudgetExceeded(budget, len(memo), 0)
            sub = suffixes(nxt)
            if events:
                ev = tuple(events)
                out.update(ev + s for s in sub)
            else:
                out.update(sub)
        if not out:
            # deadlocked: the history observed so far is still a valid (partial) history
            out = {()}
        res = frozenset(out)
        memo[st] = res
        return res

    start = machine.initial()
    tally.observe(start.cfg)
    try:
        hs = suffixes(start)
    finally:
        sys.setrecursionlimit(limit)
    procs = {t.tid: t.machine for t in machine.threads}
    return HistorySet(hs, procs, len(memo))


# ---------------------------------------------------------------------------
# Fabric traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    machine: int
    instr: Instr


TraceEvent = Union[TraceStep, Crash]


@dataclass(frozen=True)
class FabricTrace:
    topology: Topology
    events: tuple[TraceEvent, ...]


def feasible_trace(trace: FabricTrace, tally: Optional[Tally] = None, budget: Optional[int] = None) -> tuple[bool, Optional[list[Label]]]:
    """Whether the events can occur in the given order with silent steps inserted anywhere.

    Registers (``r = Load x`` / ``RStore y r``) are global to the trace and keyed
    by (machine, name).  Returns a witness label sequence when feasible.
    """
    topo = trace.topology
    tally = TALLY if tally is None else tally
    budget = state_budget() if budget is None else budget
    for ev in trace.events:
        if isinstance(ev, Crash):
            topo.check_machine(ev.machine)
        else:
            topo.check_machine(ev.machine)
            _validate(ev.instr, topo)
    start = (0, init_config(topo), ())
    parents: dict = {start: None}
    stack = [start]
    tally.observe(start[1])
    n_events = len(trace.events)
    while stack:
        st = stack.pop()
        idx, cfg, regs = st
        if idx == n_events:
            return True, _path(parents, st)
        succs = []
        for tau in reversed(sem.tau_labels(cfg, topo)):
            succs.append(([tau], (idx, sem.step(cfg, topo, tau), regs)))
        nxt = _trace_event(topo, trace.events[idx], cfg, dict(regs))
        if nxt is not None:
            labels, cfg2, regs2 = nxt
            succs.append((labels, (idx + 1, cfg2, tuple(sorted(regs2.items())))))
        for labels, s2 in succs:
            if s2 in parents:
                continue
            parents[s2] = (st, labels)
            tally.observe(s2[1])
            if len(parents) > budget:
                raise StateBudgetExceeded(budget, len(parents), len(stack))
            stack.append(s2)
    return False, None


def _trace_event(topo: Topology, ev: TraceEvent, cfg: Configuration, regs: dict):
    if isinstance(ev, Crash):
        # the crashed machine's processes lose their registers
        regs = {k: v for k, v in regs.items() if k[0] != ev.machine}
        return [ev], sem.step(cfg, topo, ev), regs
    m, instr = ev.machine, ev.instr
    if isinstance(instr, StoreOp):
        if isinstance(instr.value, str):
            key = (m, instr.value)
            if key not in regs:
                raise ProgramError(f"register {instr.value!r} on machine {m} read before written")
            v = regs[key]
        else:
            v = instr.value
        lab = Store(instr.cls, m, instr.loc, v)
        return [lab], sem.step(cfg, topo, lab), regs
    if isinstance(instr, LoadOp):
        v = sem.read_value(cfg, topo.index(instr.loc))
        if instr.expect is not None and v != instr.expect:
            return None
        lab = Load(m, instr.loc, v)
        if instr.reg is not None:
            regs = dict(regs)
            regs[(m, instr.reg)] = v
        return [lab], sem.step(cfg, topo, lab), regs
    if isinstance(instr, FlushOp):
        lab = Flush(instr.cls, m, instr.loc)
        return ([lab], cfg, regs) if sem.enabled(cfg, topo, lab) else None
    if isinstance(instr, GpfOp):
        lab = GPF(m)
        return ([lab], cfg, regs) if sem.enabled(cfg, topo, lab) else None
    if isinstance(instr, RmwOp):
        lab = Rmw(instr.cls, m, instr.loc, instr.fn)
        cfg2, v = sem.rmw_step(cfg, topo, lab)
        if instr.reg is not None:
            regs = dict(regs)
            regs[(m, instr.reg)] = v
        return [lab], cfg2, regs
    raise ProgramError(f"instruction {instr!r} not allowed in a fabric trace")


# ---------------------------------------------------------------------------
# Configuration universes
# ---------------------------------------------------------------------------

def count_configs(topo: Topology) -> int:
    n, v = topo.machine_count, len(topo.values)
    # per location: all-invalid, or a non-empty set of caches sharing one value
    per_loc = (1 + v * (2 ** n - 1)) * v
    return per_loc ** len(topo.locs)


def reachable_configs(topo: Topology, max_configs: Optional[int] = None) -> list[Configuration]:
    """Every configuration over ``topo`` satisfying cache-uniqueness, in a fixed order."""
    if max_configs is None:
        max_configs = state_budget()
    total = count_configs(topo)
    if total > max_configs:
        raise StateBudgetExceeded(max_configs, 0, total)
    values = sorted(topo.values)
    n = topo.machine_count
    columns = []  # per location: list of (cache column, mem value)
    for _ in topo.locs:
        col = []
        for cached in itertools.product([INVALID] + values, repeat=n):
            valid = {c for c in cached if c is not INVALID}
            if len(valid) > 1:
                continue
            for mv in values:
                col.append((cached, mv))
        columns.append(col)
    out = []
    for choice in itertools.product(*columns):
        cache = tuple(tuple(choice[l][0][m] for l in range(len(choice))) for m in range(n))
        mem = tuple(c[1] for c in choice)
        out.append(Configuration(cache, mem, topo.locs))
    return out
