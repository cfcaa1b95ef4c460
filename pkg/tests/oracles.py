"""Independent reference implementations used to check the package.

These are deliberately naive (dicts, brute force, permutations) and share no
code with ``cxl0`` beyond plain data.
"""

from __future__ import annotations

import itertools

BOT = None


# ---------------------------------------------------------------------------
# The transition rules over dict configurations
# ---------------------------------------------------------------------------


def ref_configs(machines, owners, values):
    """All (cache, mem) dicts satisfying cache-uniqueness, by brute force."""
    locs = sorted(owners)
    keys = [(m, x) for m in range(1, machines + 1) for x in locs]
    out = []
    for cvals in itertools.product([BOT] + list(values), repeat=len(keys)):
        cache = dict(zip(keys, cvals))
        ok = all(len({cache[(m, x)] for m in range(1, machines + 1)} - {BOT}) <= 1 for x in locs)
        if not ok:
            continue
        for mvals in itertools.product(values, repeat=len(locs)):
            out.append((cache, dict(zip(locs, mvals))))
    return out


def ref_read(cache, mem, machines, x):
    for m in range(1, machines + 1):
        if cache[(m, x)] is not BOT:
            return cache[(m, x)]
    return mem[x]


def ref_step(cache, mem, machines, owners, volatile, label):
    """Successor of (cache, mem) or None when the label is not enabled.

    ``label`` is a tuple: ("L"|"R"|"M", i, x, v), ("load", i, x, v),
    ("LF"|"RF", i, x), ("gpf", i), ("cc", i, x), ("cm", x), ("crash", i).
    """
    c, mm = dict(cache), dict(mem)
    ms = range(1, machines + 1)
    kind = label[0]
    if kind in ("L", "R", "M"):
        _, i, x, v = label
        for j in ms:
            c[(j, x)] = BOT
        if kind == "L":
            c[(i, x)] = v
        elif kind == "R":
            c[(owners[x], x)] = v
        else:
            mm[x] = v
        return c, mm
    if kind == "load":
        _, i, x, v = label
        cached = [c[(j, x)] for j in ms if c[(j, x)] is not BOT]
        if cached:
            if cached[0] != v:
                return None
            c[(i, x)] = v
            return c, mm
        return (c, mm) if mm[x] == v else None
    if kind == "LF":
        _, i, x = label
        return (c, mm) if c[(i, x)] is BOT else None
    if kind == "RF":
        _, i, x = label
        return (c, mm) if all(c[(j, x)] is BOT for j in ms) else None
    if kind == "gpf":
        return (c, mm) if all(v is BOT for v in c.values()) else None
    if kind == "cc":
        _, i, x = label
        if i == owners[x] or c[(i, x)] is BOT:
            return None
        c[(owners[x], x)] = c[(i, x)]
        c[(i, x)] = BOT
        return c, mm
    if kind == "cm":
        _, x = label
        k = owners[x]
        if c[(k, x)] is BOT:
            return None
        mm[x] = c[(k, x)]
        for j in ms:
            c[(j, x)] = BOT
        return c, mm
    if kind == "crash":
        _, i = label
        for x in owners:
            c[(i, x)] = BOT
            if i in volatile and owners[x] == i:
                mm[x] = 0
        return c, mm
    raise ValueError(label)


def ref_labels(machines, owners, values):
    out = []
    for x in sorted(owners):
        for i in range(1, machines + 1):
            for v in values:
                out += [("L", i, x, v), ("R", i, x, v), ("M", i, x, v), ("load", i, x, v)]
            out += [("LF", i, x), ("RF", i, x), ("cc", i, x)]
        out.append(("cm", x))
    out += [("gpf", i) for i in range(1, machines + 1)] + [("crash", i) for i in range(1, machines + 1)]
    return out


# ---------------------------------------------------------------------------
# Linearizability by enumerating every permutation
# ---------------------------------------------------------------------------


def naive_linearizable(events, apply, initial):
    """``events`` is a crash-free list of ("inv", p, op, args) / ("res", p, ret).

    Tries every subset of pending operations to complete and every permutation
    of the chosen operations; a completed pending operation may return anything.
    """
    ops = []
    open_ = {}
    for pos, e in enumerate(events):
        if e[0] == "inv":
            open_[e[1]] = len(ops)
            ops.append({"op": e[2], "args": e[3], "inv": pos, "res": None, "ret": None})
        else:
            n = open_.pop(e[1])
            ops[n]["res"] = pos
            ops[n]["ret"] = e[2]
    complete = [n for n, o in enumerate(ops) if o["res"] is not None]
    pending = [n for n, o in enumerate(ops) if o["res"] is None]
    for k in range(len(pending) + 1):
        for extra in itertools.combinations(pending, k):
            chosen = complete + list(extra)
            for perm in itertools.permutations(chosen):
                pos = {n: i for i, n in enumerate(perm)}
                # real-time order: a responded before b invoked => a first
                if any(
                    ops[a]["res"] is not None and ops[a]["res"] < ops[b]["inv"] and pos[a] > pos[b]
                    for a in chosen for b in chosen if a != b
                ):
                    continue
                state, good = initial, True
                for n in perm:
                    state, r = apply(state, ops[n]["op"], ops[n]["args"])
                    if ops[n]["res"] is not None and r != ops[n]["ret"]:
                        good = False
                        break
                if good:
                    return True
    return False


def register_histories(max_ops, procs=(1, 2), values=(1,), read_rets=(0, 1)):
    """Every well-formed crash-free register history with at most ``max_ops`` operations.

    Each operation is a write of some value or a read with some return; every
    interleaving of invocations and responses is produced, and any operation may
    be left pending at the end.  Process ids are introduced in increasing
    order, which loses nothing since renaming processes preserves
    linearizability.
    """
    kinds = [("write", (v,), None) for v in values] + [("read", (), r) for r in read_rets]
    seen = set()

    def gen(prefix, open_, used):
        key = tuple(prefix)
        if key in seen:
            return
        seen.add(key)
        yield list(prefix)
        fresh = [p for p in procs if not any(e[1] == p for e in prefix)]
        for p in procs:
            if p in fresh and p != fresh[0]:
                continue
            if p in open_:
                op, args, ret = open_[p]
                nxt = dict(open_)
                del nxt[p]
                yield from gen(prefix + [("res", p, ret)], nxt, used)
            elif used < max_ops:
                for op, args, ret in kinds:
                    nxt = dict(open_)
                    nxt[p] = (op, args, ret)
                    yield from gen(prefix + [("inv", p, op, args)], nxt, used + 1)

    yield from gen([], {}, 0)
