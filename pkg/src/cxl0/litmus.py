"""Litmus tests: a small text format, its parser and printer, and a runner.

Two modes share one file format.  A *trace* test lists fabric events in the
order they become globally visible and is expected to be ``allowed`` or
``forbidden``.  A *program* test gives straight-line code per thread plus a
crash budget and is expected to ``assert-may-fail`` or ``assert-never-fails``;
it may also pin the set of allowed final register valuations::

    test "lit-2"
    machines 2
    loc x @ 1 nonvolatile
    trace { 1: MStore x 1 ; crash 1 ; 1: Load x = 0 }
    expect forbidden

Comments run from ``#`` to the end of the line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .explorer import (
    Assert,
    FabricTrace,
    FlushOp,
    GpfOp,
    Instr,
    LoadOp,
    Program,
    RmwOp,
    StoreOp,
    Thread,
    TraceStep,
    explore,
    feasible_trace,
)
from .semantics import Crash, SemanticsError, Topology, add

DEFAULT_DOMAIN = (0, 1, 2)

TRACE_EXPECT = ("allowed", "forbidden")
PROGRAM_EXPECT = ("assert-may-fail", "assert-never-fails")


class LitmusError(ValueError):
    """Any problem with a litmus file; carries a 1-based line and column."""

    def __init__(self, msg: str, line: int = 0, col: int = 0, path: str = ""):
        self.msg, self.line, self.col, self.path = msg, line, col, path
        where = f"{line}:{col}: " if line else ""
        if path:
            where = f"{path}:{where}" if line else f"{path}: "
        super().__init__(where + msg)


# ---------------------------------------------------------------------------
# Test model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocDecl:
    name: str
    owner: int
    volatile: bool = False


@dataclass(frozen=True)
class LitmusTest:
    name: str
    machines: int
    locs: tuple[LocDecl, ...]
    domain: tuple[int, ...]
    mode: str
    """``trace`` or ``program``."""
    events: tuple[Union[TraceStep, Crash], ...] = ()
    threads: tuple[Thread, ...] = ()
    crashes: tuple[tuple[int, int], ...] = ()
    expect: Optional[str] = None
    """One of TRACE_EXPECT / PROGRAM_EXPECT, or None for an outcome-only program test."""
    outcomes: Optional[tuple[tuple[tuple[int, str, int], ...], ...]] = None
    """Allowed final register valuations: each a sorted tuple of (thread, reg, value)."""

    @property
    def topology(self) -> Topology:
        volatile = {d.owner for d in self.locs if d.volatile}
        return Topology.make(self.machines, {d.name: d.owner for d in self.locs}, volatile, self.domain)

    def fabric_trace(self) -> FabricTrace:
        return FabricTrace(self.topology, self.events)

    def program(self) -> Program:
        return Program.make(self.topology, self.threads, crash_budget=dict(self.crashes))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # STRING INT NAME SYM EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<sym>==|!=|[{}(),;:@=])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise LitmusError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "string":
            try:
                value = json.loads(tok)
            except ValueError:
                raise LitmusError(f"bad string literal {tok}", line, col) from None
            out.append(Token("STRING", value, line, col))
        elif kind == "int":
            out.append(Token("INT", tok, line, col))
        elif kind == "name":
            out.append(Token("NAME", tok, line, col))
        elif kind == "sym":
            out.append(Token("SYM", tok, line, col))
        pos = m.end()
    out.append(Token("EOF", "", line, pos - line_start + 1))
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_STORES = {"LStore": "L", "RStore": "R", "MStore": "M"}
_FLUSHES = {"LFlush": "L", "RFlush": "R"}
_FAAS = {"LFaa": "L", "RFaa": "R", "MFaa": "M"}
KEYWORDS = {
    "test", "machines", "loc", "volatile", "nonvolatile", "domain", "trace", "thread", "on",
    "crashes", "max", "expect", "crash", "assert", "Load", "GPF", "outcomes",
    *_STORES, *_FLUSHES, *_FAAS, *TRACE_EXPECT, *PROGRAM_EXPECT,
}

_MAX_INT = 10**6


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.machines = 0
        self.locs: dict[str, LocDecl] = {}
        self.domain: tuple[int, ...] = DEFAULT_DOMAIN

    # -- token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise LitmusError(msg, tok.line, tok.col)

    def _describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "EOF" else repr(tok.text)

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("NAME", "SYM") and self.tok.text in texts

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self._describe(self.tok)}")
        t = self.tok
        self.i += 1
        return t

    def int_(self, what: str = "integer") -> int:
        t = self.tok
        if t.kind != "INT":
            self.error(f"expected {what}, found {self._describe(t)}")
        self.i += 1
        v = int(t.text)
        if abs(v) > _MAX_INT:
            self.error(f"{what} {v} out of range", t)
        return v

    def name(self, what: str) -> Token:
        t = self.tok
        if t.kind != "NAME" or t.text in KEYWORDS:
            self.error(f"expected {what}, found {self._describe(t)}")
        self.i += 1
        return t

    # -- semantic checks ----------------------------------------------------

    def machine(self, t: Token, m: int) -> int:
        if not 1 <= m <= self.machines:
            self.error(f"unknown machine {m} (machines are 1..{self.machines})", t)
        return m

    def loc(self) -> str:
        t = self.name("location")
        if t.text not in self.locs:
            self.error(f"unknown location {t.text!r}", t)
        return t.text

    def value(self) -> int:
        t = self.tok
        v = self.int_("value")
        if v not in self.domain:
            self.error(f"value {v} outside the value domain {{{', '.join(map(str, self.domain))}}}", t)
        return v

    # -- grammar ------------------------------------------------------------

    def parse(self) -> LitmusTest:
        self.expect("test")
        if self.tok.kind != "STRING":
            self.error(f"expected test name string, found {self._describe(self.tok)}")
        name = self.tok.text
        self.i += 1
        self.expect("machines")
        t = self.tok
        self.machines = self.int_("machine count")
        if self.machines < 1:
            self.error("machine count must be positive", t)
        decls = []
        while self.at("loc"):
            decls.append(self.decl())
        vol_by_machine: dict[int, bool] = {}
        for d in decls:
            if vol_by_machine.setdefault(d.owner, d.volatile) != d.volatile:
                self.error(f"machine {d.owner} declared both volatile and nonvolatile")
        if self.at("domain"):
            self.i += 1
            self.expect("{")
            vals = [self.int_("value")]
            while self.at(","):
                self.i += 1
                vals.append(self.int_("value"))
            self.expect("}")
            if 0 not in vals:
                self.error("value domain must contain 0")
            self.domain = tuple(sorted(set(vals)))
        if self.at("trace"):
            mode = "trace"
            events = self.trace()
            threads: tuple[Thread, ...] = ()
            crashes: tuple[tuple[int, int], ...] = ()
        elif self.at("thread"):
            mode = "program"
            events = ()
            threads, crashes = self.program()
        else:
            self.error(f"expected 'trace' or 'thread', found {self._describe(self.tok)}")
        self.expect("expect")
        expect, outcomes = self.expectation(mode)
        if self.tok.kind != "EOF":
            self.error(f"unexpected {self._describe(self.tok)} after expectation")
        return LitmusTest(name, self.machines, tuple(decls), self.domain, mode, events, threads, crashes, expect, outcomes)

    def decl(self) -> LocDecl:
        self.expect("loc")
        t = self.name("location name")
        if t.text in self.locs:
            self.error(f"duplicate location {t.text!r}", t)
        self.expect("@")
        mt = self.tok
        owner = self.machine(mt, self.int_("machine"))
        volatile = False
        if self.at("volatile", "nonvolatile"):
            volatile = self.tok.text == "volatile"
            self.i += 1
        d = LocDecl(t.text, owner, volatile)
        self.locs[t.text] = d
        return d

    def trace(self) -> tuple:
        self.expect("trace")
        self.expect("{")
        events = []
        written: set[tuple[int, str]] = set()
        if not self.at("}"):
            events.append(self.event(written))
            while self.at(";"):
                self.i += 1
                events.append(self.event(written))
        self.expect("}")
        return tuple(events)

    def event(self, written: set) -> Union[TraceStep, Crash]:
        if self.at("crash"):
            self.i += 1
            t = self.tok
            m = self.machine(t, self.int_("machine"))
            written -= {k for k in written if k[0] == m}
            return Crash(m)
        t = self.tok
        m = self.machine(t, self.int_("machine or 'crash'"))
        self.expect(":")
        instr = self.op(lambda r: (m, r) in written, lambda r: written.add((m, r)))
        return TraceStep(m, instr)

    def op(self, is_written, mark_written) -> Instr:
        t = self.tok
        if t.kind == "NAME" and t.text in _STORES:
            self.i += 1
            loc = self.loc()
            if self.tok.kind == "INT":
                return StoreOp(_STORES[t.text], loc, self.value())
            rt = self.name("value or register")
            if not is_written(rt.text):
                self.error(f"register {rt.text!r} read before it is written", rt)
            return StoreOp(_STORES[t.text], loc, rt.text)
        if self.at("Load"):
            self.i += 1
            loc = self.loc()
            self.expect("=")
            return LoadOp(loc, None, self.value())
        if t.kind == "NAME" and t.text in _FLUSHES:
            self.i += 1
            return FlushOp(_FLUSHES[t.text], self.loc())
        if self.at("GPF"):
            self.i += 1
            return GpfOp()
        if t.kind == "NAME" and t.text in _FAAS:
            self.i += 1
            loc = self.loc()
            return RmwOp(_FAAS[t.text], loc, add(self.int_("increment")))
        if t.kind == "NAME" and t.text not in KEYWORDS:
            self.i += 1
            self.expect("=")
            self.expect("Load")
            loc = self.loc()
            mark_written(t.text)
            return LoadOp(loc, t.text)
        self.error(f"expected an operation, found {self._describe(t)}")

    def program(self):
        threads = []
        seen = set()
        while self.at("thread"):
            self.i += 1
            tt = self.tok
            tid = self.int_("thread id")
            if tid in seen:
                self.error(f"duplicate thread {tid}", tt)
            seen.add(tid)
            self.expect("on")
            mt = self.tok
            m = self.machine(mt, self.int_("machine"))
            self.expect("{")
            written: set[str] = set()
            code = [self.stmt(written)]
            while self.at(";"):
                self.i += 1
                code.append(self.stmt(written))
            self.expect("}")
            threads.append(Thread(tid, m, tuple(code)))
        crashes = []
        if self.at("crashes"):
            self.i += 1
            self.expect("{")
            crashes.append(self.crash_bound())
            while self.at(","):
                self.i += 1
                crashes.append(self.crash_bound())
            self.expect("}")
            ms = [m for m, _ in crashes]
            if len(set(ms)) != len(ms):
                self.error("machine listed twice in crashes")
        return tuple(threads), tuple(sorted(crashes))

    def crash_bound(self) -> tuple[int, int]:
        t = self.tok
        m = self.machine(t, self.int_("machine"))
        self.expect(":")
        self.expect("max")
        kt = self.tok
        k = self.int_("crash count")
        if k < 0:
            self.error("crash count must be non-negative", kt)
        return m, k

    def stmt(self, written: set) -> Instr:
        if self.at("assert"):
            self.i += 1
            lt = self.name("register")
            if lt.text not in written:
                self.error(f"register {lt.text!r} read before it is written", lt)
            if not self.at("==", "!="):
                self.error(f"expected '==' or '!=', found {self._describe(self.tok)}")
            op = self.tok.text
            self.i += 1
            if self.tok.kind == "INT":
                return Assert(lt.text, op, self.int_())
            rt = self.name("register or integer")
            if rt.text not in written:
                self.error(f"register {rt.text!r} read before it is written", rt)
            return Assert(lt.text, op, rt.text)
        return self.op(lambda r: r in written, written.add)

    def expectation(self, mode: str):
        allowed = TRACE_EXPECT if mode == "trace" else PROGRAM_EXPECT
        expect = None
        if self.tok.kind == "NAME" and self.tok.text in allowed:
            expect = self.tok.text
            self.i += 1
        outcomes = None
        if mode == "program" and self.at("outcomes"):
            self.i += 1
            outcomes = self.outcome_set()
        if expect is None and outcomes is None:
            self.error(f"expected one of {', '.join(allowed)}" + (" or 'outcomes'" if mode == "program" else ""))
        return expect, outcomes

    def outcome_set(self):
        self.expect("{")
        sets = []
        if not self.at("}"):
            sets.append(self.outcome())
            while self.at(";"):
                self.i += 1
                sets.append(self.outcome())
        self.expect("}")
        return tuple(sorted(set(sets)))

    def outcome(self):
        self.expect("(")
        binds = []
        if not self.at(")"):
            binds.append(self.binding())
            while self.at(","):
                self.i += 1
                binds.append(self.binding())
        self.expect(")")
        return tuple(sorted(binds))

    def binding(self):
        tid = self.int_("thread id")
        self.expect(":")
        r = self.name("register").text
        self.expect("=")
        return tid, r, self.int_("value")


def parse_litmus(text: str) -> LitmusTest:
    """Parse one test.  Every failure is reported as a LitmusError."""
    try:
        return _Parser(text).parse()
    except LitmusError:
        raise
    except (SemanticsError, RecursionError, ValueError) as exc:  # defensive: keep parsing total
        raise LitmusError(str(exc)) from None


def load_litmus(path: Union[str, Path]) -> LitmusTest:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise LitmusError(f"{p}: {exc}") from None
    try:
        return parse_litmus(text)
    except LitmusError as exc:
        raise LitmusError(exc.msg, exc.line, exc.col, str(p)) from None


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _fmt_instr(i: Instr) -> str:
    if isinstance(i, StoreOp):
        return f"{i.cls}Store {i.loc} {i.value}"
    if isinstance(i, LoadOp):
        return f"{i.reg} = Load {i.loc}" if i.reg is not None else f"Load {i.loc} = {i.expect}"
    if isinstance(i, FlushOp):
        return f"{i.cls}Flush {i.loc}"
    if isinstance(i, GpfOp):
        return "GPF"
    if isinstance(i, RmwOp):
        return f"{i.cls}Faa {i.loc} {i.fn.a}"
    if isinstance(i, Assert):
        return f"assert {i.lhs} {i.op} {i.rhs}"
    raise ValueError(f"{i!r} has no litmus syntax")


def print_litmus(t: LitmusTest) -> str:
    lines = [f"test {json.dumps(t.name)}", f"machines {t.machines}"]
    for d in t.locs:
        lines.append(f"loc {d.name} @ {d.owner}" + (" volatile" if d.volatile else ""))
    lines.append("domain { " + ", ".join(map(str, t.domain)) + " }")
    if t.mode == "trace":
        evs = [f"crash {e.machine}" if isinstance(e, Crash) else f"{e.machine}: {_fmt_instr(e.instr)}" for e in t.events]
        lines.append("trace { " + " ; ".join(evs) + " }")
    else:
        for th in t.threads:
            lines.append(f"thread {th.tid} on {th.machine} {{ " + " ; ".join(_fmt_instr(i) for i in th.code) + " }")
        if t.crashes:
            lines.append("crashes { " + ", ".join(f"{m}: max {k}" for m, k in t.crashes) + " }")
    tail = "expect"
    if t.expect:
        tail += f" {t.expect}"
    if t.outcomes is not None:
        outs = " ; ".join("(" + ", ".join(f"{tid}:{r} = {v}" for tid, r, v in o) + ")" for o in t.outcomes)
        tail += " outcomes { " + outs + " }"
    lines.append(tail)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    name: str
    mode: str
    expected: str
    computed: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "expected": self.expected,
            "computed": self.computed,
            "pass": self.passed,
            "details": self.details,
        }


def _outcome_key(regs: dict[str, int]) -> tuple:
    out = []
    for k, v in regs.items():
        tid, r = k.split(":", 1)
        out.append((int(tid), r, v))
    return tuple(sorted(out))


def run_litmus(test: LitmusTest) -> Verdict:
    if test.mode == "trace":
        ok, witness = feasible_trace(test.fabric_trace())
        computed = "allowed" if ok else "forbidden"
        if ok:
            details = {"witness": [str(l) for l in witness]}
        else:
            details = {"refutation": "exhaustive search: no interleaving with silent steps realises this trace"}
        return Verdict(test.name, "trace", test.expect, computed, computed == test.expect, details)

    res = explore(test.program())
    computed = "assert-may-fail" if res.assertion_can_fail else "assert-never-fails"
    observed = sorted({_outcome_key(o.reg_map()) for o in res.outcomes})
    passed = True
    expected_parts = []
    if test.expect is not None:
        expected_parts.append(test.expect)
        passed = computed == test.expect
    details: dict = {
        "outcomes": [{f"{tid}:{r}": v for tid, r, v in o} for o in observed],
        "states_visited": res.states_visited,
    }
    if res.failure_witness is not None:
        details["assertion_failure_witness"] = [str(l) for l in res.failure_witness]
    if test.outcomes is not None:
        allowed = set(test.outcomes)
        extra = [o for o in observed if o not in allowed]
        expected_parts.append("outcomes-within-allowed")
        if extra:
            passed = False
            details["unexpected_outcomes"] = [{f"{tid}:{r}": v for tid, r, v in o} for o in extra]
            by_key = {_outcome_key(o.reg_map()): o for o in res.outcomes}
            details["unexpected_outcome_witness"] = [str(l) for l in res.witnesses[by_key[extra[0]]]]
    return Verdict(test.name, "program", " + ".join(expected_parts), computed, passed, details)


def run_suite(tests: Iterable[LitmusTest]) -> list[Verdict]:
    tests = list(tests)
    names = [t.name for t in tests]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise LitmusError(f"duplicate test names in suite: {', '.join(dup)}")
    return [run_litmus(t) for t in tests]


def summary_line(verdicts: list[Verdict]) -> str:
    passed = sum(v.passed for v in verdicts)
    return f"{passed} passed, {len(verdicts) - passed} failed"


def format_report(verdicts: list[Verdict]) -> str:
    """Fixed-width table, the JSON block, and a final ``N passed, M failed`` line."""
    rows = [("test", "expected", "computed", "result")]
    rows += [(v.name, v.expected, v.computed, "PASS" if v.passed else "FAIL") for v in verdicts]
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    out = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    for v in verdicts:
        if v.passed:
            continue
        out.append("")
        out.append(f"FAILED {v.name}: expected {v.expected}, computed {v.computed}")
        for key in ("witness", "assertion_failure_witness", "unexpected_outcome_witness"):
            if key in v.details:
                out.append(f"  {key}: " + " ; ".join(v.details[key]))
        if "refutation" in v.details:
            out.append(f"  {v.details['refutation']}")
    out.append("")
    out.append(json.dumps({"verdicts": [v.to_json() for v in verdicts], "summary": summary_line(verdicts)}, indent=2, sort_keys=True))
    out.append(summary_line(verdicts))
    return "\n".join(out) + "\n"


def bundled_suite(name: str) -> list[Path]:
    """Paths of a bundled suite (``fig3`` or ``motivating``), sorted by name."""
    root = Path(__file__).parent / "suites" / name
    if not root.is_dir():
        raise LitmusError(f"no bundled suite {name!r}")
    return sorted(root.glob("*.lit"), key=_natural)


def _natural(p: Path):
    return [int(part) if part.isdigit() else part for part in re.split(r"(\d+)", p.stem)]
