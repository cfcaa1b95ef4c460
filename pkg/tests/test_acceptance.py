"""One test per acceptance criterion; each prints a single PASS/FAIL line.

The full run is computed once per session.  Criterion 9 repeats it and
compares the two JSON reports byte for byte.
"""

import pytest

import acceptance_suite as suite


@pytest.fixture(scope="session")
def first_run():
    return suite.run_all()


def _report(capsys, run, n):
    c = run.criteria[n]
    with capsys.disabled():
        print("\n" + suite.line(c, run.seconds.get(n) if n != 4 else None))
    return c


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 8])
def test_criterion(n, first_run, capsys):
    c = _report(capsys, first_run, n)
    assert c.passed, c.summary
    assert suite.within_limit(first_run, n), f"{first_run.seconds[n]:.1f}s exceeds {suite.LIMITS[n]}s"


def test_criterion_9_determinism(first_run, capsys):
    second = suite.run_all()
    same = first_run.dumps() == second.dumps()
    c = suite.Criterion(9, "determinism", same, "two full runs give byte-identical reports"
                        if same else "reports differ between runs")
    with capsys.disabled():
        print("\n" + suite.line(c))
    assert same
