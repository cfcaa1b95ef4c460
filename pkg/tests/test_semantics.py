import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxl0 import semantics as sem
from cxl0.explorer import reachable_configs
from cxl0.semantics import (
    INVALID,
    GPF,
    CacheCache,
    CacheMem,
    Crash,
    LFlush,
    Load,
    LStore,
    MStore,
    NotEnabled,
    RFlush,
    Rmw,
    RStore,
    Topology,
    TopologyError,
    ValueDomainError,
    add,
    cas,
    check_cache_invariant,
    enabled,
    init_config,
    make_config,
    rmw_step,
    step,
)

from oracles import ref_labels, ref_step


def topo2(values=(0, 1, 2), volatile=()):
    return Topology.make(2, {"x": 1, "y": 2}, volatile, values)


# ---------------------------------------------------------------------------
# init_config
# ---------------------------------------------------------------------------


def test_init_two_machines():
    t = topo2()
    c = init_config(t)
    assert all(c.cache_of(m, x) is INVALID for m in (1, 2) for x in ("x", "y"))
    assert c.mem_of("x") == 0 and c.mem_of("y") == 0


def test_init_no_locations():
    c = init_config(Topology.make(1, {}))
    assert c.mem == () and c.cache == ((),)


def test_init_three_locations():
    c = init_config(Topology.make(3, {"a": 1, "b": 1, "c": 3}))
    assert c.mem == (0, 0, 0)


def test_owner_outside_machines_rejected():
    with pytest.raises(TopologyError):
        Topology.make(2, {"x": 3})


def test_domain_must_contain_zero():
    with pytest.raises(TopologyError):
        Topology.make(1, {"x": 1}, values=(1, 2))


def test_canonical_rendering():
    t = topo2()
    c = step(init_config(t), t, LStore(1, "x", 1))
    assert c.render() == "C[1:x=1,y=_;2:x=_,y=_] M[x=0,y=0]"


# ---------------------------------------------------------------------------
# enabled
# ---------------------------------------------------------------------------


def test_lflush_blocks_while_cached_locally():
    t = Topology.make(2, {"x": 1})
    c = step(init_config(t), t, LStore(1, "x", 1))
    assert not enabled(c, t, LFlush(1, "x"))


def test_initial_loads():
    t = topo2()
    c = init_config(t)
    assert enabled(c, t, Load(1, "x", 0))
    assert not enabled(c, t, Load(1, "x", 1))


def test_tau_enabledness_by_hand():
    t = Topology.make(2, {"x": 1}, values=range(6))
    c = make_config(t, {(2, "x"): 5})
    assert enabled(c, t, CacheCache(2, "x"))
    assert not enabled(c, t, CacheMem("x"))


def test_unknown_location_is_error():
    t = topo2()
    with pytest.raises(TopologyError):
        enabled(init_config(t), t, Load(1, "z", 0))


def test_gpf_needs_every_cache_empty():
    t = topo2()
    c = step(init_config(t), t, LStore(2, "x", 1))
    assert not enabled(c, t, GPF(1))
    assert enabled(init_config(t), t, GPF(1))


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------


def test_lstore_rule():
    t = Topology.make(2, {"x": 2})
    c = step(init_config(t), t, LStore(1, "x", 1))
    assert (c.cache_of(1, "x"), c.cache_of(2, "x"), c.mem_of("x")) == (1, INVALID, 0)


def test_horizontal_then_vertical_propagation():
    t = Topology.make(2, {"x": 2})
    c = make_config(t, {(1, "x"): 1})
    c = step(c, t, CacheCache(1, "x"))
    c = step(c, t, CacheMem("x"))
    assert c.mem_of("x") == 1
    assert c.cache_of(1, "x") is INVALID and c.cache_of(2, "x") is INVALID


def test_crash_drops_unpersisted_value():
    t = Topology.make(2, {"y": 2}, values=range(8))
    c = make_config(t, {(2, "y"): 7})
    c = step(c, t, Crash(2))
    assert c.cache_of(2, "y") is INVALID and c.mem_of("y") == 0


def test_volatile_crash_resets_memory():
    t = Topology.make(2, {"x": 2}, volatile=(2,))
    c = make_config(t, mem={"x": 2})
    assert step(c, t, Crash(2)).mem_of("x") == 0
    assert step(c, t, Crash(1)).mem_of("x") == 2


def test_rstore_and_mstore_rules():
    t = Topology.make(3, {"x": 2})
    c = make_config(t, {(1, "x"): 1, (3, "x"): 1})
    r = step(c, t, RStore(1, "x", 2))
    assert [r.cache_of(m, "x") for m in (1, 2, 3)] == [INVALID, 2, INVALID]
    m = step(c, t, MStore(3, "x", 2))
    assert [m.cache_of(k, "x") for k in (1, 2, 3)] == [INVALID] * 3 and m.mem_of("x") == 2


def test_load_from_cache_copies():
    t = Topology.make(2, {"x": 2})
    c = make_config(t, {(2, "x"): 1})
    assert step(c, t, Load(1, "x", 1)).cache_of(1, "x") == 1


def test_disabled_step_is_an_error():
    t = Topology.make(2, {"x": 1})
    c = step(init_config(t), t, LStore(1, "x", 1))
    with pytest.raises(NotEnabled):
        step(c, t, LFlush(1, "x"))
    with pytest.raises(NotEnabled):
        step(c, t, Load(2, "x", 0))


def test_store_outside_domain():
    t = Topology.make(1, {"x": 1}, values=(0, 1))
    with pytest.raises(ValueDomainError):
        step(init_config(t), t, LStore(1, "x", 5))


# ---------------------------------------------------------------------------
# rmw_step
# ---------------------------------------------------------------------------


def test_mrmw_on_zero():
    t = Topology.make(2, {"c": 1})
    c, v = rmw_step(init_config(t), t, Rmw("M", 1, "c", add(1)))
    assert v == 0 and c.mem_of("c") == 1
    assert all(c.cache_of(m, "c") is INVALID for m in (1, 2))


def test_lrmw_reads_remote_cache():
    t = Topology.make(2, {"c": 1}, values=range(6))
    c = make_config(t, {(2, "c"): 3})
    c, v = rmw_step(c, t, Rmw("L", 1, "c", add(1)))
    assert v == 3 and c.cache_of(1, "c") == 4 and c.cache_of(2, "c") is INVALID


def test_failed_cas_is_a_read():
    t = Topology.make(2, {"c": 1}, values=range(6))
    c0 = make_config(t, {(2, "c"): 5})
    c, v = rmw_step(c0, t, Rmw("M", 1, "c", cas(0, 1)))
    assert v == 5
    assert c == step(c0, t, Load(1, "c", 5))


def test_rrmw_writes_owner_cache():
    t = Topology.make(2, {"c": 2})
    c, v = rmw_step(make_config(t, {(1, "c"): 1}), t, Rmw("R", 1, "c", add(1)))
    assert v == 1 and c.cache_of(2, "c") == 2 and c.cache_of(1, "c") is INVALID


def test_rmw_result_outside_domain():
    t = Topology.make(1, {"c": 1}, values=(0, 1))
    c = make_config(t, mem={"c": 1})
    with pytest.raises(ValueDomainError):
        rmw_step(c, t, Rmw("M", 1, "c", add(1)))


# ---------------------------------------------------------------------------
# check_cache_invariant
# ---------------------------------------------------------------------------


def test_invariant_examples():
    t = Topology.make(2, {"x": 1})
    assert check_cache_invariant(init_config(t))
    assert check_cache_invariant(make_config(t, {(1, "x"): 1, (2, "x"): 1}))
    assert not check_cache_invariant(make_config(t, {(1, "x"): 1, (2, "x"): 2}))


# ---------------------------------------------------------------------------
# Agreement with the dict-based rule oracle over whole universes
# ---------------------------------------------------------------------------


def _to_label(lab):
    kind = lab[0]
    if kind in ("L", "R", "M"):
        return sem.Store(kind, lab[1], lab[2], lab[3])
    if kind == "load":
        return Load(lab[1], lab[2], lab[3])
    if kind in ("LF", "RF"):
        return sem.Flush(kind[0], lab[1], lab[2])
    if kind == "gpf":
        return GPF(lab[1])
    if kind == "cc":
        return CacheCache(lab[1], lab[2])
    if kind == "cm":
        return CacheMem(lab[1])
    return Crash(lab[1])


def _as_dicts(cfg, t):
    cache = {(m, x): cfg.cache_of(m, x) for m in t.machines for x in t.locs}
    return cache, {x: cfg.mem_of(x) for x in t.locs}


UNIVERSES = [
    (2, {"x": 1}, (), (0, 1)),
    (2, {"x": 2, "y": 1}, (2,), (0, 1)),
    (3, {"x": 3}, (3,), (0, 1, 2)),
    (3, {"x": 1, "y": 3}, (), (0, 1)),
]


@pytest.mark.parametrize("n,owners,volatile,values", UNIVERSES)
def test_rules_match_oracle(n, owners, volatile, values):
    t = Topology.make(n, owners, volatile, values)
    labels = ref_labels(n, owners, values)
    for cfg in reachable_configs(t):
        cache, mem = _as_dicts(cfg, t)
        for lab in labels:
            want = ref_step(cache, mem, n, owners, set(volatile), lab)
            label = _to_label(lab)
            assert enabled(cfg, t, label) == (want is not None), (cfg.render(), lab)
            if want is not None:
                assert _as_dicts(step(cfg, t, label), t) == want, (cfg.render(), lab)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

T3 = Topology.make(3, {"x": 1, "y": 3}, volatile=(3,), values=(0, 1, 2))
CONFIGS = reachable_configs(T3)


def _labels(t):
    out = []
    for x in t.locs:
        for m in t.machines:
            out += [sem.Store(c, m, x, v) for c in "LRM" for v in sorted(t.values)]
            out += [Load(m, x, v) for v in sorted(t.values)]
            out += [LFlush(m, x), RFlush(m, x), CacheCache(m, x)]
            out += [Rmw(c, m, x, add(1)) for c in "LRM"]
        out.append(CacheMem(x))
    return out + [GPF(m) for m in t.machines] + [Crash(m) for m in t.machines]


LABELS = _labels(T3)
configs = st.sampled_from(CONFIGS)
labels = st.sampled_from(LABELS)


def _apply(cfg, lab):
    if isinstance(lab, Rmw):
        v = sem.read_value(cfg, T3.index(lab.loc))
        if v + 1 not in T3.values:
            return None
        return rmw_step(cfg, T3, lab)[0]
    if not enabled(cfg, T3, lab):
        return None
    return step(cfg, T3, lab)


@given(configs, st.lists(labels, max_size=12))
def test_invariant_preserved_along_runs(cfg, labs):
    for lab in labs:
        nxt = _apply(cfg, lab)
        if nxt is not None:
            cfg = nxt
            assert check_cache_invariant(cfg)


@given(configs, labels)
def test_step_is_deterministic(cfg, lab):
    a, b = _apply(cfg, lab), _apply(cfg, lab)
    assert a == b
    assert (a is None) or a.render() == b.render()


@given(configs, st.sampled_from(T3.locs), st.sampled_from(tuple(T3.machines)), st.sampled_from((0, 1, 2)))
def test_load_soundness(cfg, x, m, v):
    if enabled(cfg, T3, Load(m, x, v)):
        cached = {r[T3.index(x)] for r in cfg.cache} - {INVALID}
        assert v == (cached.pop() if cached else cfg.mem_of(x))


@given(configs, st.sampled_from(tuple(T3.machines)))
def test_crash_isolation(cfg, i):
    after = step(cfg, T3, Crash(i))
    for j in T3.machines:
        if j == i:
            continue
        assert after.cache[j - 1] == cfg.cache[j - 1]
        for x in T3.locs:
            if T3.owner_of(x) == j:
                assert after.mem_of(x) == cfg.mem_of(x)


@settings(max_examples=50)
@given(configs)
def test_flush_progress(cfg):
    # tau steps always reach a configuration in which every flush is enabled
    seen, frontier = {cfg}, [cfg]
    while frontier:
        c = frontier.pop()
        if all(v is INVALID for row in c.cache for v in row):
            return
        for tau in sem.tau_labels(c, T3):
            n = step(c, T3, tau)
            if n not in seen:
                seen.add(n)
                frontier.append(n)
    pytest.fail("no drained configuration reachable by silent steps")
