"""Sequential specifications of the bundled concurrent objects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Hashable


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    initial: Hashable
    apply: Callable[[Hashable, str, tuple], tuple[Hashable, Any]]
    """Pure sequential semantics: (state, op, args) -> (state', return value)."""
    ops: tuple[str, ...]

    def run(self, calls, state=None):
        """Replay ``calls`` [(op, args), ...] from ``state``; returns (final state, returns)."""
        state = self.initial if state is None else state
        rets = []
        for op, args in calls:
            state, r = self.apply(state, op, tuple(args))
            rets.append(r)
        return state, rets


def _register(state, op, args):
    if op == "write":
        return args[0], None
    if op == "read":
        return state, state
    raise ValueError(f"register has no operation {op!r}")


REGISTER = ObjectSpec("register", 0, _register, ("write", "read"))


def _keyset(state, op, args):
    (k,) = args
    present = k in state
    if op == "insert":
        return state | {k}, not present
    if op == "remove":
        return state - {k}, present
    if op == "contains":
        return state, present
    raise ValueError(f"set has no operation {op!r}")


SET2 = ObjectSpec("set", frozenset(), _keyset, ("insert", "remove", "contains"))
"""Set over keys {0, 1}.  insert/remove return whether they changed the set."""

SPECS = {"register": REGISTER, "set": SET2}


def get_spec(name: str) -> ObjectSpec:
    try:
        return SPECS[name]
    except KeyError:
        raise ValueError(f"unknown object {name!r}; choose from {sorted(SPECS)}") from None
