#!/usr/bin/env python3
"""Run the acceptance suite once and write its JSON report.

    python3 scripts/run_acceptance.py [--out acceptance.json] [--twice]

Prints one PASS/FAIL line per criterion.  ``--twice`` repeats the run and
adds the determinism check.  Exit status is 0 only if every criterion passes.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import acceptance_suite as suite  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="acceptance.json", help="report path (default: %(default)s)")
    ap.add_argument("--twice", action="store_true", help="run twice and compare the reports")
    args = ap.parse_args()

    run = suite.run_all(log=print)
    print(suite.line(run.criteria[4]))
    ok = all(c.passed and suite.within_limit(run, n) for n, c in run.criteria.items())
    Path(args.out).write_text(run.dumps())
    if args.twice:
        same = suite.run_all().dumps() == run.dumps()
        print(suite.line(suite.Criterion(9, "determinism", same, "byte-identical" if same else "reports differ")))
        ok &= same
    print(f"report written to {args.out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
