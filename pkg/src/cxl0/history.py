"""Operation histories: invocation, response and machine-crash events."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Union


class MalformedHistory(ValueError):
    pass


@dataclass(frozen=True)
class Inv:
    proc: int
    op: str
    args: tuple = ()

    def __str__(self):
        return f"inv p{self.proc} {self.op}{self.args}"


@dataclass(frozen=True)
class Res:
    proc: int
    op: str
    ret: Any = None

    def __str__(self):
        return f"res p{self.proc} {self.op} -> {self.ret}"


@dataclass(frozen=True)
class CrashEv:
    machine: int

    def __str__(self):
        return f"crash m{self.machine}"


Event = Union[Inv, Res, CrashEv]


@dataclass(frozen=True)
class History:
    events: tuple[Event, ...]
    procs: tuple[tuple[int, int], ...] = field(default=())
    """(proc, machine) pairs; may be empty when no crash-placement checks are wanted."""

    @classmethod
    def of(cls, events: Iterable[Event], procs: Mapping[int, int] = {}) -> "History":
        return cls(tuple(events), tuple(sorted(procs.items())))

    @property
    def machine_of(self) -> dict[int, int]:
        return dict(self.procs)

    def __len__(self):
        return len(self.events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(event_to_json(e), sort_keys=True) + "\n" for e in self.events)


def event_to_json(e: Event) -> dict:
    if isinstance(e, Inv):
        return {"e": "inv", "p": e.proc, "op": e.op, "args": list(e.args)}
    if isinstance(e, Res):
        return {"e": "res", "p": e.proc, "op": e.op, "ret": e.ret}
    return {"e": "crash", "m": e.machine}


def event_from_json(obj: Any) -> Event:
    if not isinstance(obj, dict):
        raise MalformedHistory(f"event must be an object, got {obj!r}")
    kind = obj.get("e")
    try:
        if kind == "inv":
            return Inv(int(obj["p"]), str(obj["op"]), tuple(obj.get("args", [])))
        if kind == "res":
            return Res(int(obj["p"]), str(obj.get("op", "")), obj.get("ret"))
        if kind == "crash":
            return CrashEv(int(obj["m"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHistory(f"bad {kind} event {obj!r}: {exc}") from None
    raise MalformedHistory(f"unknown event kind {kind!r}")


def parse_jsonl(text: str, procs: Optional[Mapping[int, int]] = None) -> History:
    """Parse the JSON-lines wire format.  A line ``{"procs": {"1": 2, ...}}`` may
    declare the proc-to-machine map; blank lines and ``#`` comments are skipped."""
    events = []
    pm = dict(procs or {})
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedHistory(f"line {lineno}: {exc.msg}") from None
        if isinstance(obj, dict) and "procs" in obj:
            pm.update({int(p): int(m) for p, m in obj["procs"].items()})
            continue
        try:
            events.append(event_from_json(obj))
        except MalformedHistory as exc:
            raise MalformedHistory(f"line {lineno}: {exc}") from None
    # a response may omit its op name; recover it from the matching invocation
    fixed = []
    open_op: dict[int, str] = {}
    for e in events:
        if isinstance(e, Inv):
            open_op[e.proc] = e.op
        elif isinstance(e, Res) and not e.op and e.proc in open_op:
            e = Res(e.proc, open_op[e.proc], e.ret)
        fixed.append(e)
    return History.of(fixed, pm)


def strip_crashes(h: History) -> History:
    return History(tuple(e for e in h.events if not isinstance(e, CrashEv)), h.procs)


def check_well_formed(h: History) -> None:
    """Raise MalformedHistory unless every proc's events alternate inv/res and no
    proc acts after a crash of its machine."""
    machine_of = h.machine_of
    open_ops: dict[int, str] = {}
    dead: set[int] = set()
    seen: set[int] = set()
    for pos, e in enumerate(h.events):
        if isinstance(e, CrashEv):
            for p, m in machine_of.items():
                if m == e.machine and p in seen:
                    dead.add(p)
            continue
        if e.proc in dead:
            raise MalformedHistory(f"event {pos} ({e}): proc {e.proc} acts after its machine crashed")
        seen.add(e.proc)
        if isinstance(e, Inv):
            if e.proc in open_ops:
                raise MalformedHistory(f"event {pos} ({e}): proc {e.proc} invokes while {open_ops[e.proc]} is pending")
            open_ops[e.proc] = e.op
        else:
            if e.proc not in open_ops:
                raise MalformedHistory(f"event {pos} ({e}): response without invocation")
            if e.op and e.op != open_ops[e.proc]:
                raise MalformedHistory(f"event {pos} ({e}): response to {e.op} but {open_ops[e.proc]} is pending")
            del open_ops[e.proc]
