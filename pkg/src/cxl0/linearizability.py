"""Exact linearizability and durable-linearizability checks for small histories.

The search linearises operations one at a time, only picking operations whose
happens-before predecessors (operations that responded before it was invoked)
are already placed, and memoises failed (placed-set, object-state) pairs.
Pending operations may be placed (completed, with any return value) or left out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .history import CrashEv, History, Inv, MalformedHistory, Res, check_well_formed, strip_crashes
from .objects import ObjectSpec

MAX_OPS = 24


class HistoryTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class Operation:
    proc: int
    op: str
    args: tuple
    inv: int
    res: Optional[int]
    ret: Any = None

    @property
    def pending(self) -> bool:
        return self.res is None

    def __str__(self):
        tail = "pending" if self.pending else f"-> {self.ret!r}"
        return f"p{self.proc}.{self.op}{self.args} {tail}"


def operations(h: History) -> list[Operation]:
    """Pair each invocation with its response (if any)."""
    ops: list[Operation] = []
    open_ops: dict[int, int] = {}
    for pos, e in enumerate(h.events):
        if isinstance(e, CrashEv):
            raise MalformedHistory("crash events must be stripped before linearizability checking")
        if isinstance(e, Inv):
            if e.proc in open_ops:
                raise MalformedHistory(f"proc {e.proc} invokes {e.op} while another operation is pending")
            open_ops[e.proc] = len(ops)
            ops.append(Operation(e.proc, e.op, e.args, pos, None))
        else:
            n = open_ops.pop(e.proc, None)
            if n is None:
                raise MalformedHistory(f"response by proc {e.proc} without invocation")
            o = ops[n]
            ops[n] = Operation(o.proc, o.op, o.args, o.inv, pos, e.ret)
    return ops


def is_linearizable(h: History, spec: ObjectSpec) -> tuple[bool, Optional[list[Operation]]]:
    """Decide linearizability of a crash-free history; the witness is a sequential order."""
    ops = operations(h)
    if len(ops) > MAX_OPS:
        raise HistoryTooLarge(f"{len(ops)} operations exceeds the exact-search limit of {MAX_OPS}")
    n = len(ops)
    preds = [0] * n
    for b in range(n):
        for a in range(n):
            if ops[a].res is not None and ops[a].res < ops[b].inv:
                preds[b] |= 1 << a
    required = 0
    for a in range(n):
        if not ops[a].pending:
            required |= 1 << a

    failed: set = set()
    order: list[int] = []

    def search(done: int, state) -> bool:
        if done & required == required:
            return True
        key = (done, state)
        if key in failed:
            return False
        for a in range(n):
            bit = 1 << a
            if done & bit or preds[a] & ~done:
                continue
            o = ops[a]
            new_state, ret = spec.apply(state, o.op, o.args)
            if not o.pending and ret != o.ret:
                continue
            order.append(a)
            if search(done | bit, new_state):
                return True
            order.pop()
        failed.add(key)
        return False

    if search(0, spec.initial):
        return True, [ops[a] for a in order]
    return False, None


def is_durably_linearizable(h: History, spec: ObjectSpec) -> tuple[bool, Optional[list[Operation]]]:
    """Well-formed and linearizable once every crash event is removed."""
    check_well_formed(h)
    return is_linearizable(strip_crashes(h), spec)


__all__ = [
    "HistoryTooLarge",
    "Operation",
    "is_durably_linearizable",
    "is_linearizable",
    "operations",
    "strip_crashes",
    "Inv",
    "Res",
    "CrashEv",
    "History",
]
