"""Durability transformations for linearizable objects, and workload execution.

Each transformation rewrites the loads and stores of an object implementation
into instruction sequences for the explorer:

``mstore``        every persistent store is an MStore; no counters, no flushes.
``lstore``        FliT counter around an LStore followed by an RFlush; shared
                  loads flush when they observe a positive counter.
``rstore``        as ``lstore`` with the data store issued as an RStore.
``naive-mstore``  every persistent store becomes an MStore.
``none``          baseline with plain LStores and loads, no persistence.

Stores to locations whose pflag is unset always become plain LStores.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .explorer import (
    FabricTrace,
    FlushOp,
    Fence,
    GuardedFlush,
    Instr,
    Invoke,
    LoadOp,
    Program,
    Respond,
    RmwOp,
    StoreOp,
    Thread,
    TraceStep,
    explore_histories,
)
from .history import History
from .linearizability import is_durably_linearizable
from .objects import ObjectSpec, get_spec
from .semantics import Crash, Modify, Topology, add, xchg

VARIANTS = ("mstore", "lstore", "rstore", "naive-mstore", "none")
CLI_VARIANTS = {"mstore": "mstore", "lstore": "lstore", "rstore": "rstore", "naive": "naive-mstore", "none": "none"}


class UnsupportedConfiguration(ValueError):
    pass


@dataclass(frozen=True)
class TransformConfig:
    variant: str = "lstore"
    pflags: tuple[tuple[str, bool], ...] = ()
    """Per-location persistence flag; locations not listed default to set."""
    counters: tuple[tuple[str, str], ...] = ()
    """Data location -> FliT counter location."""
    inc_class: str = "M"
    dec_class: str = "L"
    flush_class: str = "R"
    """``L`` gives the LFlush-based weakest transformation used with volatile memory."""
    in_order: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UnsupportedConfiguration(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        counter_locs = {c for _, c in self.counters}
        if counter_locs & {x for x, _ in self.counters}:
            raise UnsupportedConfiguration("counter locations must be distinct from data locations")

    def pflag(self, loc: str) -> bool:
        return dict(self.pflags).get(loc, True)

    def counter(self, loc: str) -> str:
        try:
            return dict(self.counters)[loc]
        except KeyError:
            raise UnsupportedConfiguration(f"no FliT counter assigned to {loc!r}") from None

    @property
    def uses_counters(self) -> bool:
        return self.variant in ("lstore", "rstore")

    @property
    def data_store_class(self) -> str:
        return {"mstore": "M", "naive-mstore": "M", "lstore": "L", "rstore": "R", "none": "L"}[self.variant]


def _assert_pflag_respected(loc: str, out: list[Instr], cfg: TransformConfig) -> list[Instr]:
    if not cfg.pflag(loc):
        for i in out:
            bad = (isinstance(i, (FlushOp, GuardedFlush)) and i.loc == loc) or (
                isinstance(i, (StoreOp, RmwOp)) and i.loc == loc and i.cls == "M"
            )
            assert not bad, f"generator emitted {i} for pflag-unset location {loc}"
    return out


def _counter_wrapped(loc: str, body: list[Instr], cfg: TransformConfig) -> list[Instr]:
    cnt = cfg.counter(loc)
    return [RmwOp(cfg.inc_class, cnt, add(1)), *body, FlushOp(cfg.flush_class, loc), RmwOp(cfg.dec_class, cnt, add(-1))]


def transform_store(loc: str, value, cfg: TransformConfig) -> list[Instr]:
    """shared_store(loc, value)."""
    if cfg.variant == "none" or not cfg.pflag(loc):
        out: list[Instr] = [StoreOp("L", loc, value)]
    elif cfg.uses_counters:
        out = _counter_wrapped(loc, [StoreOp(cfg.data_store_class, loc, value)], cfg)
    else:
        out = [StoreOp("M", loc, value)]
    return _assert_pflag_respected(loc, out, cfg)


def transform_load(loc: str, dest: str, cfg: TransformConfig, tmp: Optional[str] = None) -> list[Instr]:
    """shared_load(loc) into register ``dest``; ``tmp`` receives the counter value."""
    out: list[Instr] = [LoadOp(loc, dest)]
    if cfg.uses_counters and cfg.pflag(loc):
        tmp = tmp or f"{dest}_cnt"
        out += [LoadOp(cfg.counter(loc), tmp), GuardedFlush(cfg.flush_class, loc, tmp)]
    return _assert_pflag_respected(loc, out, cfg)


def transform_rmw(loc: str, fn: Modify, dest: Optional[str], cfg: TransformConfig) -> list[Instr]:
    """Shared read-modify-write, placed like a shared store of the same variant."""
    if cfg.variant == "none" or not cfg.pflag(loc):
        out: list[Instr] = [RmwOp("L", loc, fn, dest)]
    elif cfg.uses_counters:
        out = _counter_wrapped(loc, [RmwOp(cfg.data_store_class, loc, fn, dest)], cfg)
    else:
        out = [RmwOp("M", loc, fn, dest)]
    return _assert_pflag_respected(loc, out, cfg)


def private_store(loc: str, value, cfg: TransformConfig) -> list[Instr]:
    """For data never accessed concurrently: no counter, flush right after the store."""
    if cfg.variant == "none" or not cfg.pflag(loc):
        out: list[Instr] = [StoreOp("L", loc, value)]
    elif cfg.uses_counters:
        out = [StoreOp(cfg.data_store_class, loc, value), FlushOp(cfg.flush_class, loc)]
    else:
        out = [StoreOp("M", loc, value)]
    return _assert_pflag_respected(loc, out, cfg)


def private_load(loc: str, dest: str, cfg: TransformConfig) -> list[Instr]:
    return [LoadOp(loc, dest)]


def complete_op(cfg: TransformConfig) -> list[Instr]:
    """Empty under in-order execution with synchronous flushes."""
    if not cfg.in_order:
        raise UnsupportedConfiguration("out-of-order execution needs architecture-specific fences, which are not modelled")
    return []


# ---------------------------------------------------------------------------
# Object implementations over shared memory
# ---------------------------------------------------------------------------


def _data_locs(obj: ObjectSpec) -> tuple[str, ...]:
    return ("x",) if obj.name == "register" else ("k0", "k1")


def implement(obj: ObjectSpec, op: str, args: tuple, cfg: TransformConfig, tag: str, private: bool = False) -> list[Instr]:
    """Instruction sequence for one high-level operation, bracketed by Invoke/Respond."""
    reg = f"r{tag}"
    if obj.name == "register":
        if op == "write":
            body = (private_store if private else transform_store)("x", args[0], cfg)
            resp = Respond(op)
        elif op == "read":
            body = private_load("x", reg, cfg) if private else transform_load("x", reg, cfg, tmp=f"c{tag}")
            resp = Respond(op, "reg", reg)
        else:
            raise ValueError(f"register has no operation {op!r}")
    elif obj.name == "set":
        loc = f"k{args[0]}"
        if op == "insert":
            body, resp = transform_rmw(loc, xchg(1), reg, cfg), Respond(op, "eq", reg, 0)
        elif op == "remove":
            body, resp = transform_rmw(loc, xchg(0), reg, cfg), Respond(op, "eq", reg, 1)
        elif op == "contains":
            body, resp = transform_load(loc, reg, cfg, tmp=f"c{tag}"), Respond(op, "eq", reg, 1)
        else:
            raise ValueError(f"set has no operation {op!r}")
    else:
        raise ValueError(f"no shared-memory implementation for {obj.name!r}")
    return [Invoke(op, tuple(args)), *body, *complete_op(cfg), resp]


# ---------------------------------------------------------------------------
# Workloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Workload:
    object: str
    threads: tuple[tuple[int, tuple[tuple[str, tuple], ...]], ...]
    """(machine, [(op, args), ...]) per thread."""
    machines: int = 3
    owner: int = 3
    """Machine hosting the object's memory and its FliT counters."""
    volatile: tuple[int, ...] = ()
    crash_budget: tuple[tuple[int, int], ...] = ()
    max_crashes: Optional[int] = None
    recovery: tuple[tuple[int, tuple[tuple[str, tuple], ...]], ...] = ()
    private: bool = False
    """Use the private accessors (single-thread workloads only)."""
    pflags: tuple[tuple[str, bool], ...] = ()
    name: str = ""

    @classmethod
    def make(cls, object, threads, machines=3, owner=3, volatile=(), crashable=None, crashes=0, recovery={}, **kw):
        """``crashable`` machines may crash (default: all); ``crashes`` caps the total."""
        crashable = tuple(range(1, machines + 1)) if crashable is None else tuple(crashable)
        return cls(
            object,
            tuple((m, tuple((op, tuple(a)) for op, a in ops)) for m, ops in threads),
            machines,
            owner,
            tuple(volatile),
            tuple((m, crashes) for m in crashable) if crashes else (),
            crashes if crashes else None,
            tuple(sorted((m, tuple((op, tuple(a)) for op, a in ops)) for m, ops in recovery.items())),
            **kw,
        )

    @property
    def op_count(self) -> int:
        return sum(len(ops) for _, ops in self.threads) + sum(len(ops) for _, ops in self.recovery)

    def with_crashes(self, crashes: int, crashable: Optional[Sequence[int]] = None) -> "Workload":
        crashable = tuple(range(1, self.machines + 1)) if crashable is None else tuple(crashable)
        return Workload(
            self.object, self.threads, self.machines, self.owner, self.volatile,
            tuple((m, crashes) for m in crashable) if crashes else (), crashes if crashes else None,
            self.recovery, self.private, self.pflags, self.name,
        )

    def to_json(self, variant: Optional[str] = None) -> dict:
        out = {
            "name": self.name,
            "object": self.object,
            "machines": self.machines,
            "owner": self.owner,
            "volatile": list(self.volatile),
            "threads": [{"machine": m, "ops": [[op, *a] for op, a in ops]} for m, ops in self.threads],
            "crash_budget": {str(m): k for m, k in self.crash_budget},
            "max_crashes": self.max_crashes,
            "recovery": {str(m): [[op, *a] for op, a in ops] for m, ops in self.recovery},
            "pflags": dict(self.pflags),
            "private": self.private,
        }
        if variant is not None:
            out["variant"] = variant
        return out


def load_workload(text: str) -> tuple[Workload, Optional[str]]:
    """Parse a workload file; returns the workload and its ``variant`` field if present."""
    d = json.loads(text)
    if not isinstance(d, dict) or "object" not in d or "threads" not in d:
        raise ValueError("workload must be an object with 'object' and 'threads'")

    def ops(raw):
        out = []
        for o in raw:
            if isinstance(o, str):
                out.append((o, ()))
            elif isinstance(o, list) and o and isinstance(o[0], str):
                out.append((o[0], tuple(o[1:])))
            elif isinstance(o, dict):
                out.append((o["op"], tuple(o.get("args", []))))
            else:
                raise ValueError(f"bad operation {o!r}")
        return tuple(out)

    get_spec(d["object"])
    threads = tuple((int(t["machine"]), ops(t["ops"])) for t in d["threads"])
    budget = d.get("crash_budget", {})
    if isinstance(budget, int):
        machines = int(d.get("machines", 3))
        crash_budget = tuple((m, budget) for m in range(1, machines + 1)) if budget else ()
        max_crashes = budget or None
    else:
        crash_budget = tuple(sorted((int(m), int(k)) for m, k in budget.items()))
        max_crashes = d.get("max_crashes")
    w = Workload(
        d["object"],
        threads,
        int(d.get("machines", 3)),
        int(d.get("owner", d.get("machines", 3))),
        tuple(d.get("volatile", ())),
        crash_budget,
        max_crashes,
        tuple(sorted((int(m), ops(o)) for m, o in d.get("recovery", {}).items())),
        bool(d.get("private", False)),
        tuple(sorted((k, bool(v)) for k, v in d.get("pflags", {}).items())),
        d.get("name", ""),
    )
    variant = d.get("variant")
    if variant is not None:
        variant = CLI_VARIANTS.get(variant, variant)
    return w, variant


def default_config(obj: ObjectSpec, variant: str, workload: Optional[Workload] = None, **kw) -> TransformConfig:
    counters = tuple((x, f"cnt_{x}") for x in _data_locs(obj))
    pflags = workload.pflags if workload is not None else ()
    return TransformConfig(variant, pflags=pflags, counters=counters, **kw)


def build_program(obj: ObjectSpec, workload: Workload, cfg: TransformConfig) -> Program:
    if workload.private and len(workload.threads) + len(workload.recovery) > 1:
        raise UnsupportedConfiguration("private accessors are only valid in single-thread workloads")
    data = _data_locs(obj)
    owner = {x: workload.owner for x in data}
    if cfg.uses_counters:
        owner.update({cfg.counter(x): workload.owner for x in data})
    n_writes = sum(1 for _, ops in workload.threads + workload.recovery for op, _ in ops if op != "read" and op != "contains")
    n_writes *= 1 + max((k for _, k in workload.crash_budget), default=0)
    written = {a[0] for _, ops in workload.threads + workload.recovery for op, a in ops if op == "write"}
    values = set(range(-n_writes, n_writes + 1)) | written | {0, 1}
    topo = Topology.make(workload.machines, owner, volatile=workload.volatile, values=values)
    threads = []
    for tid, (m, ops) in enumerate(workload.threads, start=1):
        code: list[Instr] = []
        for k, (op, args) in enumerate(ops):
            code += implement(obj, op, args, cfg, tag=f"{k}", private=workload.private)
        threads.append(Thread(tid, m, tuple(code)))
    recovery = {}
    for m, ops in workload.recovery:
        code = []
        for k, (op, args) in enumerate(ops):
            code += implement(obj, op, args, cfg, tag=f"{k}")
        recovery[m] = code
    return Program.make(topo, threads, crash_budget=dict(workload.crash_budget), max_crashes=workload.max_crashes, recovery=recovery)


def run_object_workload(obj: ObjectSpec, workload: Workload, cfg: TransformConfig) -> list[History]:
    """Every distinct history the transformed implementation can produce, in a fixed order."""
    return explore_histories(build_program(obj, workload, cfg)).as_histories()


@dataclass
class WorkloadReport:
    workload: str
    variant: str
    histories_checked: int
    violations: int
    example: Optional[History] = None

    def to_json(self) -> dict:
        return {
            "workload": self.workload,
            "variant": self.variant,
            "histories_checked": self.histories_checked,
            "violations": self.violations,
            "example_violation": None if self.example is None else [str(e) for e in self.example.events],
        }


def check_histories(histories: Iterable[History], spec: ObjectSpec) -> tuple[int, int, Optional[History]]:
    checked = bad = 0
    example = None
    for h in histories:
        checked += 1
        ok, _ = is_durably_linearizable(h, spec)
        if not ok:
            bad += 1
            example = example or h
    return checked, bad, example


def check_workload(workload: Workload, cfg: TransformConfig) -> WorkloadReport:
    spec = get_spec(workload.object)
    checked, bad, example = check_histories(run_object_workload(spec, workload, cfg), spec)
    return WorkloadReport(workload.name, cfg.variant, checked, bad, example)


# ---------------------------------------------------------------------------
# Translation of full-system-crash durable code
# ---------------------------------------------------------------------------

DURABLE_OPS = ("store", "nt-store", "flush", "fence", "load", "crash-full")


def translate_durable(ops: Sequence[tuple]) -> list[Instr]:
    """Map one thread's full-system-crash code onto this model.

    ``store`` -> LStore, ``nt-store`` -> MStore, ``flush`` -> RFlush; loads and
    fences are unchanged.  Invoke/Respond markers pass through.  ``crash-full``
    is a system event, not a thread instruction; see ``translate_durable_trace``
    and ``DurableProgram``.
    """
    out: list[Instr] = []
    for o in ops:
        if isinstance(o, (Invoke, Respond)):
            out.append(o)
            continue
        kind = o[0]
        if kind == "store":
            out.append(StoreOp("L", o[1], o[2]))
        elif kind == "nt-store":
            out.append(StoreOp("M", o[1], o[2]))
        elif kind == "flush":
            out.append(FlushOp("R", o[1]))
        elif kind == "fence":
            out.append(Fence())
        elif kind == "load":
            out.append(LoadOp(o[1], o[2] if len(o) > 2 else None))
        else:
            raise ValueError(f"cannot translate {o!r} inside a thread; expected one of {DURABLE_OPS[:-1]}")
    return out


def _reject_volatile(topo: Topology) -> None:
    bad = sorted(x for x, m in topo.owner if topo.is_volatile(m))
    if bad:
        raise UnsupportedConfiguration(
            f"locations {bad} live in volatile memory; durable code cannot recover them after a crash"
        )


def translate_durable_trace(topo: Topology, events: Sequence[tuple]) -> list[FabricTrace]:
    """Translate a serialised trace of (machine, op) and ``("crash-full",)`` events.

    Each full-system crash expands into consecutive crashes of every machine;
    one fabric trace is produced per combination of crash orders.
    """
    _reject_volatile(topo)
    pieces: list[list[tuple]] = []
    for ev in events:
        if ev[0] == "crash-full":
            pieces.append([tuple(Crash(m) for m in order) for order in itertools.permutations(topo.machines)])
        else:
            m, op = ev
            (instr,) = translate_durable([op])
            pieces.append([(TraceStep(m, instr),)] if not isinstance(instr, Fence) else [()])
    return [FabricTrace(topo, tuple(e for part in combo for e in part)) for combo in itertools.product(*pieces)]


@dataclass(frozen=True)
class DurableProgram:
    """Threads written against the full-system-crash model."""

    topology: Topology
    threads: tuple[tuple[int, tuple[tuple, ...]], ...]
    full_crashes: int = 1
    recovery: tuple[tuple[int, tuple[tuple, ...]], ...] = ()


def translate_durable_program(dp: DurableProgram) -> Program:
    _reject_volatile(dp.topology)
    threads = [Thread(n, m, tuple(translate_durable(code))) for n, (m, code) in enumerate(dp.threads, start=1)]
    recovery = {m: translate_durable(code) for m, code in dp.recovery}
    return Program.make(dp.topology, threads, recovery=recovery, full_crashes=dp.full_crashes)


def durable_register_op(op: str, args: tuple, tag: str) -> list:
    """Hand-written full-system-crash durable register: every access is flushed and fenced."""
    if op == "write":
        body = [("store", "x", args[0]), ("flush", "x"), ("fence",)]
        resp = Respond(op)
    elif op == "read":
        body = [("load", "x", f"r{tag}"), ("flush", "x"), ("fence",)]
        resp = Respond(op, "reg", f"r{tag}")
    else:
        raise ValueError(op)
    return [Invoke(op, tuple(args)), *body, resp]


def durable_register_workload(workload: Workload) -> DurableProgram:
    """Build the full-system-crash program for a register workload (one full crash)."""
    written = {a[0] for _, ops in workload.threads + workload.recovery for op, a in ops if op == "write"}
    topo = Topology.make(workload.machines, {"x": workload.owner}, values={0, 1} | written)
    threads = tuple(
        (m, tuple(i for k, (op, a) in enumerate(ops) for i in durable_register_op(op, a, str(k))))
        for m, ops in workload.threads
    )
    recovery = tuple(
        (m, tuple(i for k, (op, a) in enumerate(ops) for i in durable_register_op(op, a, str(k))))
        for m, ops in workload.recovery
    )
    return DurableProgram(topo, threads, 1, recovery)


# ---------------------------------------------------------------------------
# Bundled workload families
# ---------------------------------------------------------------------------

ALPHABETS = {
    "register": (("write", (1,)), ("write", (2,)), ("read", ())),
    "set": (("insert", (0,)), ("remove", (0,)), ("contains", (0,))),
}

CURATED = {
    "register": [
        [(1, [("write", (1,)), ("read", ())]), (2, [("write", (2,)), ("read", ())])],
        [(1, [("write", (1,)), ("write", (2,))]), (2, [("read", ()), ("read", ())])],
        [(1, [("write", (1,)), ("read", ()), ("read", ())]), (2, [("write", (2,))])],
        [(1, [("write", (1,))]), (2, [("read", ())]), (3, [("read", ())])],
        [(1, [("write", (1,))]), (2, [("write", (2,))]), (3, [("read", ()), ("read", ())])],
        [(1, [("write", (1,)), ("read", ()), ("write", (2,)), ("read", ()), ("write", (1,)), ("read", ())])],
    ],
    "set": [
        [(1, [("insert", (0,)), ("contains", (0,))]), (2, [("remove", (0,)), ("contains", (0,))])],
        [(1, [("insert", (0,)), ("insert", (1,))]), (2, [("contains", (1,)), ("contains", (0,))])],
        [(1, [("insert", (0,)), ("remove", (0,)), ("contains", (0,))]), (2, [("insert", (0,))])],
        [(1, [("insert", (1,))]), (2, [("contains", (1,))]), (3, [("remove", (1,))])],
        [(1, [("insert", (0,)), ("insert", (1,)), ("remove", (0,)), ("contains", (1,)), ("contains", (0,)), ("remove", (1,))])],
    ],
}


def _label(ops) -> str:
    return ".".join(op + "".join(str(a) for a in args) for op, args in ops) or "-"


def workload_family(obj: str, max_ops: int = 3, crashes: int = 1, curated: bool = True) -> list[Workload]:
    """The bounded family used to check durability.

    Every workload of one or two threads (machines 1 and 2, object owned by
    machine 3) with at most ``max_ops`` operations over the object's alphabet,
    up to swapping the two threads, plus hand-picked larger workloads of four
    to six operations that use three threads, a thread on the owner machine, or
    both set keys.  Any machine may crash, at most ``crashes`` times in total.
    """
    alphabet = ALPHABETS[obj]
    seqs = [s for n in range(1, max_ops + 1) for s in itertools.product(alphabet, repeat=n)]
    shapes = []
    for s in seqs:
        shapes.append([(1, list(s))])
    for a in seqs:
        for b in seqs:
            if len(a) + len(b) > max_ops or (len(a), a) < (len(b), b):
                continue
            shapes.append([(1, list(a)), (2, list(b))])
    if curated:
        shapes += CURATED[obj]
    out = []
    for threads in shapes:
        name = f"{obj}/" + "|".join(f"m{m}:{_label(ops)}" for m, ops in threads)
        out.append(Workload.make(obj, threads, crashes=crashes, name=name))
    return out
