import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxl0.litmus import (
    LitmusError,
    Verdict,
    bundled_suite,
    format_report,
    load_litmus,
    parse_litmus,
    print_litmus,
    run_litmus,
    run_suite,
    summary_line,
)

FIG3 = {
    "lit-1": "allowed", "lit-2": "forbidden", "lit-3": "forbidden",
    "lit-4": "allowed", "lit-5": "forbidden", "lit-6": "forbidden",
    "lit-7": "forbidden", "lit-8": "allowed", "lit-9": "forbidden",
}


# ---------------------------------------------------------------------------
# parse_litmus
# ---------------------------------------------------------------------------


def test_parse_mstore_crash_test():
    t = parse_litmus('test "lit-2"\nmachines 2\nloc x @ 1 nonvolatile\ntrace { 1: MStore x 1 ; crash 1 ; 1: Load x = 0 }\nexpect forbidden')
    assert t.name == "lit-2" and t.mode == "trace" and t.expect == "forbidden"
    assert len(t.events) == 3
    assert run_litmus(t).passed


def test_empty_trace_vacuously_allowed():
    t = parse_litmus('test "e"\nmachines 1\nloc x @ 1\ntrace { }\nexpect allowed')
    assert run_litmus(t).passed


def test_value_outside_domain():
    with pytest.raises(LitmusError) as exc:
        parse_litmus('test "v"\nmachines 1\nloc x @ 1\ntrace { 1: Load x = 9 }\nexpect allowed')
    assert exc.value.line == 4


@pytest.mark.parametrize("text,needle", [
    ('test "a"\nmachines 1\nloc x @ 2\ntrace { }\nexpect allowed', "machine"),
    ('test "a"\nmachines 1\nloc x @ 1\ntrace { 1: Load y = 0 }\nexpect allowed', "location"),
    ('test "a"\nmachines 1\nloc x @ 1\nloc x @ 1\ntrace { }\nexpect allowed', "duplicate"),
    ('test "a"\nmachines 1\nloc x @ 1\ntrace { 1: LStore x r }\nexpect allowed', "register"),
    ('test "a"\nmachines 1\nloc x @ 1\ntrace { 1: Load x = 0 ', "expected"),
    ('test "a"\nmachines 1\nloc x @ 1\ntrace { }\nexpect assert-may-fail', "expect"),
])
def test_parse_errors(text, needle):
    with pytest.raises(LitmusError) as exc:
        parse_litmus(text)
    assert needle in str(exc.value).lower()


def test_comments_and_domain():
    t = parse_litmus('# c\ntest "d" # name\nmachines 1\nloc x @ 1\ndomain { 0, 5 }\ntrace { 1: LStore x 5 }\nexpect allowed\n')
    assert t.domain == (0, 5)


def test_program_mode():
    t = load_litmus(bundled_suite("motivating")[0])
    assert t.mode == "program" and t.threads


@settings(max_examples=300)
@given(st.text(max_size=80))
def test_parser_is_total_on_noise(text):
    try:
        parse_litmus(text)
    except LitmusError:
        pass


TOKENS = ["test", '"t"', "machines", "1", "2", "loc", "x", "y", "@", "volatile", "trace", "{", "}", ";", ":",
          "LStore", "Load", "=", "crash", "expect", "allowed", "thread", "on", "assert", "==", "r", "crashes", "max", ","]


@settings(max_examples=300)
@given(st.lists(st.sampled_from(TOKENS), max_size=30))
def test_parser_is_total_on_token_soup(toks):
    try:
        parse_litmus(" ".join(toks))
    except LitmusError:
        pass


# ---------------------------------------------------------------------------
# Round trip
# ---------------------------------------------------------------------------

LOCS = ("x", "y")


@st.composite
def trace_tests(draw):
    machines = draw(st.integers(1, 3))
    owners = {x: draw(st.integers(1, machines)) for x in LOCS}
    mach = st.integers(1, machines)
    loc = st.sampled_from(LOCS)
    val = st.integers(0, 2)
    events = []
    regs = set()
    for _ in range(draw(st.integers(0, 6))):
        m = draw(mach)
        kind = draw(st.integers(0, 7))
        if kind == 0:
            events.append(f"{m}: {draw(st.sampled_from(['LStore', 'RStore', 'MStore']))} {draw(loc)} {draw(val)}")
        elif kind == 1:
            events.append(f"{m}: Load {draw(loc)} = {draw(val)}")
        elif kind == 2:
            events.append(f"{m}: {draw(st.sampled_from(['LFlush', 'RFlush']))} {draw(loc)}")
        elif kind == 3:
            events.append(f"{m}: GPF")
        elif kind == 4:
            events.append(f"{m}: {draw(st.sampled_from(['LFaa', 'RFaa', 'MFaa']))} {draw(loc)} {draw(st.integers(-1, 1))}")
        elif kind == 5:
            events.append(f"{m}: r = Load {draw(loc)}")
            regs.add(m)
        elif kind == 6 and m in regs:
            events.append(f"{m}: LStore {draw(loc)} r")
        else:
            events.append(f"crash {m}")
            regs.discard(m)
    decls = "\n".join(f"loc {x} @ {owners[x]}" for x in LOCS)
    body = " ; ".join(events)
    return f'test "rt"\nmachines {machines}\n{decls}\ntrace {{ {body} }}\nexpect {draw(st.sampled_from(["allowed", "forbidden"]))}\n'


@st.composite
def program_tests(draw):
    thread_lines = []
    for tid in (1, 2)[: draw(st.integers(1, 2))]:
        stmts = ["r = Load x"]
        for _ in range(draw(st.integers(0, 3))):
            stmts.append(draw(st.sampled_from(["LStore x 1", "MStore y 2", "RFlush x", "s = Load y", "assert r == 0",
                                               "assert r != 1", "MFaa x 1"])))
        if any(s.startswith("s =") for s in stmts):
            stmts.append("assert r == s")
        thread_lines.append(f"thread {tid} on {draw(st.integers(1, 2))} {{ {' ; '.join(stmts)} }}")
    crash = draw(st.sampled_from(["", "crashes { 2: max 1 }", "crashes { 1: max 1, 2: max 1 }"]))
    expect = draw(st.sampled_from(["assert-may-fail", "assert-never-fails"]))
    return ('test "p"\nmachines 2\nloc x @ 2\nloc y @ 1 volatile\n' + "\n".join(thread_lines) + f"\n{crash}\nexpect {expect}\n")


@settings(max_examples=150)
@given(st.one_of(trace_tests(), program_tests()))
def test_print_parse_round_trip(text):
    try:
        t = parse_litmus(text)
    except LitmusError:
        return
    assert parse_litmus(print_litmus(t)) == t


def test_bundled_tests_round_trip():
    for suite in ("fig3", "motivating"):
        for p in bundled_suite(suite):
            t = load_litmus(p)
            assert parse_litmus(print_litmus(t)) == t


# ---------------------------------------------------------------------------
# run_litmus and reports
# ---------------------------------------------------------------------------


def test_fig3_suite_verdicts():
    verdicts = run_suite(load_litmus(p) for p in bundled_suite("fig3"))
    assert {v.name: v.computed for v in verdicts} == FIG3
    assert all(v.passed for v in verdicts)
    assert summary_line(verdicts) == "9 passed, 0 failed"


def test_lit5_forbidden_and_lit8_allowed():
    by_name = {load_litmus(p).name: load_litmus(p) for p in bundled_suite("fig3")}
    assert run_litmus(by_name["lit-5"]).computed == "forbidden"
    v = run_litmus(by_name["lit-8"])
    assert v.computed == "allowed" and v.details["witness"]


def test_motivating_suite():
    got = {load_litmus(p).name: run_litmus(load_litmus(p)).computed for p in bundled_suite("motivating")}
    assert got == {
        "motivating-lstore": "assert-may-fail",
        "motivating-lstore-lflush": "assert-may-fail",
        "motivating-lstore-rflush": "assert-never-fails",
        "motivating-mstore": "assert-never-fails",
    }


def test_verdict_is_deterministic():
    t = load_litmus(bundled_suite("fig3")[3])
    assert run_litmus(t).to_json() == run_litmus(t).to_json()


def test_empty_report():
    assert format_report([]).rstrip().endswith("0 passed, 0 failed")


def test_inverted_expectation_reported_verbatim():
    src = bundled_suite("fig3")[0].read_text().replace("expect allowed", "expect forbidden")
    v = run_litmus(parse_litmus(src))
    assert not v.passed
    rep = format_report([v])
    assert "FAILED lit-1: expected forbidden, computed allowed" in rep
    assert "witness: " in rep and "Crash_1" in rep
    assert rep.rstrip().endswith("0 passed, 1 failed")


def test_outcome_expectation():
    src = ('test "o"\nmachines 1\nloc x @ 1\nthread 1 on 1 { LStore x 1 ; r = Load x }\n'
           "expect assert-never-fails outcomes { (1:r = 1) }\n")
    assert run_litmus(parse_litmus(src)).passed
    src = src.replace("(1:r = 1)", "(1:r = 0)")
    v = run_litmus(parse_litmus(src))
    assert not v.passed and v.details["unexpected_outcomes"] == [{"1:r": 1}]


def test_duplicate_names_rejected():
    t = load_litmus(bundled_suite("fig3")[0])
    with pytest.raises(LitmusError):
        run_suite([t, t])


def test_verdict_json_shape():
    v = Verdict("n", "trace", "allowed", "allowed", True, {})
    assert v.to_json() == {"name": "n", "mode": "trace", "expected": "allowed", "computed": "allowed", "pass": True, "details": {}}
