import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxl0 import semantics as sem
from cxl0.explorer import (
    Assert,
    FabricTrace,
    FlushOp,
    LoadOp,
    Program,
    StateBudgetExceeded,
    StoreOp,
    Tally,
    Thread,
    TraceStep,
    explore,
    feasible_trace,
    reachable_configs,
)
from cxl0.semantics import Crash, Rmw, Topology, check_cache_invariant, init_config

from oracles import ref_configs


# ---------------------------------------------------------------------------
# feasible_trace
# ---------------------------------------------------------------------------


def trace(topo, *events):
    return FabricTrace(topo, tuple(events))


def test_rstore_crash_load_old_value_feasible():
    t = Topology.make(1, {"x": 1})
    ok, w = feasible_trace(trace(t, TraceStep(1, StoreOp("R", "x", 1)), Crash(1), TraceStep(1, LoadOp("x", expect=0))))
    assert ok and any(isinstance(l, Crash) for l in w)


def test_mstore_crash_load_old_value_infeasible():
    t = Topology.make(1, {"x": 1})
    ok, w = feasible_trace(trace(t, TraceStep(1, StoreOp("M", "x", 1)), Crash(1), TraceStep(1, LoadOp("x", expect=0))))
    assert not ok and w is None


def test_empty_trace_feasible():
    assert feasible_trace(trace(Topology.make(1, {"x": 1}))) == (True, [])


# ---------------------------------------------------------------------------
# explore
# ---------------------------------------------------------------------------


def motivating(store_cls, flush=None):
    t = Topology.make(2, {"x": 2})
    code = [StoreOp(store_cls, "x", 1)]
    if flush:
        code.append(FlushOp(flush, "x"))
    code += [LoadOp("x", "r1"), LoadOp("x", "r2"), Assert("r1", "==", "r2")]
    return Program.make(t, [Thread(1, 1, tuple(code))], crash_budget={2: 1})


@pytest.mark.parametrize("cls,flush,can_fail", [("L", None, True), ("L", "L", True), ("L", "R", False), ("M", None, False)])
def test_motivating_example(cls, flush, can_fail):
    res = explore(motivating(cls, flush))
    assert res.assertion_can_fail is can_fail
    assert (res.failure_witness is not None) is can_fail


def test_trivial_program_one_outcome():
    t = Topology.make(1, {})
    res = explore(Program.make(t, [Thread(1, 1, (Assert(0, "==", 0),))]))
    assert len(res.outcomes) == 1 and not res.assertion_can_fail


def test_budget_exceeded_is_reported():
    with pytest.raises(StateBudgetExceeded) as exc:
        explore(motivating("L"), budget=5)
    assert "5" in str(exc.value)


def test_crashed_thread_takes_no_steps():
    # the writer on machine 1 crashes; its register never appears in outcomes
    t = Topology.make(2, {"x": 2})
    prog = Program.make(t, [Thread(1, 1, (LoadOp("x", "r"),)), Thread(2, 2, (LoadOp("x", "s"),))], crash_budget={1: 1})
    res = explore(prog)
    tids = {tuple(tid for tid, _ in o.regs) for o in res.outcomes}
    assert (1, 2) in tids and (2,) in tids


# ---------------------------------------------------------------------------
# reachable_configs, against a brute-force enumeration
# ---------------------------------------------------------------------------


def test_single_machine_count():
    assert len(reachable_configs(Topology.make(1, {"x": 1}, values=(0, 1)))) == 6


def test_no_locations_count():
    assert len(reachable_configs(Topology.make(2, {}))) == 1


def test_two_machines_count():
    # 3 x 3 cache pairs minus (0,1) and (1,0), times 2 memory values
    assert len(reachable_configs(Topology.make(2, {"x": 1}, values=(0, 1)))) == (9 - 2) * 2


@pytest.mark.parametrize("n,owners,values", [(2, {"x": 1, "y": 2}, (0, 1)), (3, {"x": 2}, (0, 1, 2)), (3, {"x": 1, "y": 1}, (0, 1))])
def test_universe_matches_brute_force(n, owners, values):
    t = Topology.make(n, owners, values=values)
    got = {c.render() for c in reachable_configs(t)}
    want = set()
    for cache, mem in ref_configs(n, owners, values):
        cfg = sem.make_config(t, {k: v for k, v in cache.items() if v is not None}, mem)
        want.add(cfg.render())
    assert got == want


def test_universe_ceiling():
    with pytest.raises(StateBudgetExceeded):
        reachable_configs(Topology.make(3, {"x": 1, "y": 2}), max_configs=10)


# ---------------------------------------------------------------------------
# Properties over random small programs
# ---------------------------------------------------------------------------

TOPO = Topology.make(2, {"x": 1, "y": 2}, values=(0, 1, 2))


@st.composite
def programs(draw):
    threads = []
    for tid in (1, 2):
        n = draw(st.integers(0, 3))
        code = []
        for k in range(n):
            x = draw(st.sampled_from(TOPO.locs))
            kind = draw(st.sampled_from(["store", "load", "flush"]))
            if kind == "store":
                code.append(StoreOp(draw(st.sampled_from("LRM")), x, draw(st.integers(1, 2))))
            elif kind == "load":
                code.append(LoadOp(x, f"r{k}"))
            else:
                code.append(FlushOp(draw(st.sampled_from("LR")), x))
        threads.append(Thread(tid, draw(st.sampled_from((1, 2))), tuple(code)))
    crashes = draw(st.integers(0, 1))
    return threads, crashes


def _program(threads, crashes):
    return Program.make(TOPO, threads, crash_budget={1: crashes, 2: crashes})


def _replay(cfg, labels):
    for lab in labels:
        if isinstance(lab, Rmw):
            cfg = sem.rmw_step(cfg, TOPO, lab)[0]
        else:
            cfg = sem.step(cfg, TOPO, lab)
    return cfg


@settings(max_examples=40, deadline=None)
@given(programs())
def test_exploration_is_deterministic(p):
    a, b = explore(_program(*p)), explore(_program(*p))
    assert a.to_json() == b.to_json()


@settings(max_examples=40, deadline=None)
@given(programs())
def test_witnesses_replay(p):
    res = explore(_program(*p))
    for o, labels in res.witnesses.items():
        # step raises on any disabled label, so replaying checks the whole trace
        final = _replay(init_config(TOPO), labels)
        assert dict(o.mem) == {x: final.mem_of(x) for x in TOPO.locs}
        assert check_cache_invariant(final)


@settings(max_examples=40, deadline=None)
@given(programs())
def test_crash_budget_monotone(p):
    threads, _ = p
    small = explore(_program(threads, 0)).outcomes
    large = explore(_program(threads, 1)).outcomes
    assert small <= large


@settings(max_examples=30, deadline=None)
@given(programs())
def test_every_visited_configuration_satisfies_invariant(p):
    tally = Tally()
    explore(_program(*p), tally=tally)
    assert tally.visited > 0 and tally.holds == tally.visited
