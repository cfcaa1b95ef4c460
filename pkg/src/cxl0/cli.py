"""``cxl0`` command-line entry point.

Exit codes (every subcommand):
  0  verification passed
  1  verification failed (verdict mismatch, counterexample, violation)
  2  usage error, unreadable or malformed input
  3  resource limit hit (state budget, universe ceiling, history size)
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import semantics as sem
from .explorer import TALLY, StateBudgetExceeded, Tally, state_budget
from .flit import CLI_VARIANTS, Workload, check_workload, default_config, load_workload, workload_family
from .history import MalformedHistory, parse_jsonl, strip_crashes
from .linearizability import HistoryTooLarge, is_durably_linearizable, operations
from .litmus import LitmusError, format_report, load_litmus, run_litmus
from .objects import SPECS, get_spec
from .properties import PropUniverse, check_preservation, check_prop1, check_prop2, parse_items

OK, FAIL, USAGE, RESOURCE = 0, 1, 2, 3

PACKAGE_DIR = Path(__file__).resolve().parent
MAX_MACHINES = 4
MAX_LOCS = 3
MAX_VALS = 3
MAX_CRASHES = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _emit_json(path: Optional[str], payload: dict) -> None:
    if path is None:
        return
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _manifest(command: str, inputs: Sequence[str], args: argparse.Namespace, **extra) -> dict:
    out = {
        "command": command,
        "inputs": list(inputs),
        "deterministic": True,
        "state_budget": state_budget(),
        "output": args.json,
    }
    out.update(extra)
    return out


def _run_units(fn: Callable, units: Sequence, jobs: int, initializer=None, initargs=()) -> list:
    """Map ``fn`` over ``units``; results come back in input order whatever ``jobs`` is."""
    if jobs <= 1 or len(units) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(fn, units))


def _bounded(name: str, value: Optional[int], lo: int, hi: int) -> None:
    if value is not None and not lo <= value <= hi:
        raise UsageError(f"--{name} must be between {lo} and {hi}, got {value}")


def _resolve_paths(raw: Sequence[str], suffix: str) -> list[Path]:
    """Files, directories (all ``*suffix`` inside) or paths relative to the bundled data."""
    out: list[Path] = []
    for r in raw:
        p = Path(r)
        if not p.exists():
            hits = sorted(glob.glob(str(PACKAGE_DIR / r)))
            if not hits:
                raise UsageError(f"no such file or directory: {r}")
            out += [Path(h) for h in hits]
            continue
        out.append(p)
    files: list[Path] = []
    for p in out:
        files += sorted(p.glob(f"*{suffix}")) if p.is_dir() else [p]
    if not files:
        raise UsageError(f"no {suffix} files found")
    return files


# ---------------------------------------------------------------------------
# litmus
# ---------------------------------------------------------------------------


def _litmus_unit(path: str) -> dict:
    TALLY.reset()
    v = run_litmus(load_litmus(path))
    return {"verdict": v, "visited": TALLY.visited, "holds": TALLY.holds}


def cmd_litmus(args: argparse.Namespace) -> int:
    files = _resolve_paths(args.paths, ".lit")
    tests = [load_litmus(f) for f in files]
    names = [t.name for t in tests]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise UsageError(f"duplicate test names: {', '.join(dup)}")
    results = _run_units(_litmus_unit, [str(f) for f in files], args.jobs)
    verdicts = [r["verdict"] for r in results]
    sys.stdout.write(format_report(verdicts))
    failed = [v for v in verdicts if not v.passed]
    _emit_json(args.json, {
        "manifest": _manifest("litmus", [str(f) for f in files], args),
        "results": [v.to_json() for v in verdicts],
        "passed": len(verdicts) - len(failed),
        "failed": len(failed),
        "tally": _sum_tally(results),
    })
    return FAIL if failed else OK


def _sum_tally(results: Sequence[dict]) -> dict:
    return {"visited": sum(r["visited"] for r in results), "holds": sum(r["holds"] for r in results)}


# ---------------------------------------------------------------------------
# props
# ---------------------------------------------------------------------------


def _props_unit(unit) -> dict:
    kind, item, universe, payload = unit
    tally = Tally(strict=sem.active_mutant() is None)
    if kind == "p2":
        rep = check_prop2(payload)
    elif kind == "invariant":
        rep = check_preservation(universe)
    else:
        rep = check_prop1(item, universe, tally)
    return {"report": rep.to_json(), "ok": rep.ok, "visited": tally.visited, "holds": tally.holds}


def cmd_props(args: argparse.Namespace) -> int:
    try:
        items = parse_items(args.items)
    except ValueError as exc:
        raise UsageError(f"--items: {exc}") from None
    _bounded("machines", args.machines, 1, MAX_MACHINES)
    _bounded("locs", args.locs, 1, MAX_LOCS)
    _bounded("vals", args.vals, 1, MAX_VALS)
    if args.mutate is not None and args.mutate not in sem.MUTANTS:
        raise UsageError(f"unknown mutant {args.mutate!r}; known: {', '.join(sorted(sem.MUTANTS))}")
    try:
        universe = PropUniverse(args.machines, args.locs, args.vals, args.tau_depth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    units = []
    for it in items:
        if it == "p2":
            units.append(("p2", it, universe, workload_family(args.object, crashes=1)))
        else:
            units.append(("p1", it, universe, None))
    if args.mutate is not None:
        units.append(("invariant", "invariant", universe, None))
    results = _run_units(_props_unit, units, args.jobs, initializer=sem.set_mutant, initargs=(args.mutate,))
    bad = 0
    for r in results:
        rep = r["report"]
        n_cex = rep["universe"].get("counterexamples_total", len(rep["counterexamples"]))
        status = "ok" if r["ok"] else "FAIL"
        line = f"item {rep['item']}: {status}  instances={rep['instances_checked']} counterexamples={n_cex}"
        if rep["tau_limit_hit"]:
            line += " (tau limit hit)"
        print(line)
        if not r["ok"]:
            bad += 1
            cex = rep["counterexamples"][0]
            print("  counterexample: " + json.dumps(cex, sort_keys=True))
    tally = _sum_tally(results)
    print(f"cache-uniqueness held in {tally['holds']}/{tally['visited']} visited configurations")
    if tally["holds"] != tally["visited"]:
        bad += 1
    print(f"{len(results) - min(bad, len(results))} passed, {bad} failed")
    _emit_json(args.json, {
        "manifest": _manifest("props", [], args, items=[str(i) for i in items], universe=universe.to_json(),
                              mutant=args.mutate),
        "results": [r["report"] for r in results],
        "tally": tally,
    })
    return FAIL if bad else OK


# ---------------------------------------------------------------------------
# flit
# ---------------------------------------------------------------------------


def _load_workload_arg(raw: str) -> tuple[Workload, Optional[str]]:
    p = Path(raw)
    if not p.exists():
        bundled = PACKAGE_DIR / "workloads" / (raw if raw.endswith(".json") else raw + ".json")
        if not bundled.exists():
            raise UsageError(f"no such workload: {raw}")
        p = bundled
    try:
        return load_workload(p.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{p}: invalid workload: {exc}") from None


def _flit_unit(unit) -> dict:
    w, variant, counter_class = unit
    TALLY.reset()
    cfg = default_config(get_spec(w.object), variant, w, inc_class=counter_class)
    r = check_workload(w, cfg)
    out = r.to_json()
    out["workload"] = w.name
    out["visited"], out["holds"] = TALLY.visited, TALLY.holds
    return out


def cmd_flit(args: argparse.Namespace) -> int:
    _bounded("crashes", args.crashes, 0, MAX_CRASHES)
    if args.family:
        if args.workload not in SPECS:
            raise UsageError(f"--family needs an object name ({', '.join(sorted(SPECS))})")
        workloads = workload_family(args.workload, crashes=1 if args.crashes is None else args.crashes)
        file_variant = None
    else:
        w, file_variant = _load_workload_arg(args.workload)
        if not w.name:
            w = replace(w, name=Path(args.workload).stem)
        if args.crashes is not None:
            w = w.with_crashes(args.crashes)
        workloads = [w]
    variant = CLI_VARIANTS.get(args.variant) if args.variant else file_variant
    if variant is None:
        raise UsageError("no variant given (use --variant or a 'variant' field in the workload)")
    counter_class = args.counter_class.upper()
    results = _run_units(_flit_unit, [(w, variant, counter_class) for w in workloads], args.jobs)
    checked = sum(r["histories_checked"] for r in results)
    violations = sum(r["violations"] for r in results)
    for r in results:
        if len(results) > 1:
            print(f"{r['workload']}: histories={r['histories_checked']} violations={r['violations']}")
    print(f"variant {variant}")
    print(f"histories_checked {checked}")
    print(f"violations {violations}")
    example = next((r for r in results if r["violations"]), None)
    if example is not None:
        print(f"example violation ({example['workload']}):")
        for e in example["example_violation"]:
            print(f"  {e}")
    ok = violations > 0 if args.expect_violation else violations == 0
    _emit_json(args.json, {
        "manifest": _manifest("flit", [args.workload], args, variant=variant, crashes=args.crashes,
                              counter_class=counter_class, family=args.family,
                              expect_violation=args.expect_violation),
        "results": results,
        "histories_checked": checked,
        "violations": violations,
        "tally": _sum_tally(results),
    })
    return OK if ok else FAIL


# ---------------------------------------------------------------------------
# check-history
# ---------------------------------------------------------------------------


def cmd_check_history(args: argparse.Namespace) -> int:
    p = Path(args.file)
    if not p.exists():
        raise UsageError(f"no such file: {args.file}")
    h = parse_jsonl(p.read_text())
    spec = get_spec(args.object)
    ok, witness = is_durably_linearizable(h, spec)
    if ok:
        print("durably linearizable")
        print("witness order:")
        for o in witness:
            print(f"  {o}")
    else:
        print("NOT durably linearizable")
        print("no linearization exists for the crash-free history:")
        for o in operations(strip_crashes(h)):
            print(f"  {o}")
    _emit_json(args.json, {
        "manifest": _manifest("check-history", [args.file], args, object=args.object),
        "durably_linearizable": ok,
        "witness": None if witness is None else [str(o) for o in witness],
    })
    return OK if ok else FAIL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cxl0", description="Verify programs against the CXL0 disaggregated-memory model.",
                 epilog="exit codes: 0 pass, 1 fail, 2 usage or input error, 3 resource limit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", metavar="OUT", help="write a JSON report (use - for stdout)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers (results do not depend on N)")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("litmus", parents=[common], help="run litmus tests")
    p.add_argument("paths", nargs="+", help=".lit files or directories")
    p.set_defaults(func=cmd_litmus)

    p = sub.add_parser("props", parents=[common], help="check the store/flush simulation items")
    p.add_argument("--items", default="1-8", help="e.g. 1-8, 1,3,p2")
    p.add_argument("--machines", type=int, default=2)
    p.add_argument("--locs", type=int, default=2)
    p.add_argument("--vals", type=int, default=2)
    p.add_argument("--tau-depth", type=int, default=None)
    p.add_argument("--object", choices=sorted(SPECS), default="register", help="object for the p2 workloads")
    p.add_argument("--mutate", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_props)

    p = sub.add_parser("flit", parents=[common], help="verify a transformed workload")
    p.add_argument("workload", help="workload JSON (or a bundled name, or an object name with --family)")
    p.add_argument("--variant", choices=sorted(CLI_VARIANTS))
    p.add_argument("--crashes", type=int, default=None, help="crash budget for every machine and in total")
    p.add_argument("--counter-class", choices=("m", "l"), default="m", help="store class of counter increments")
    p.add_argument("--expect-violation", action="store_true", help="succeed only if a violation is found")
    p.add_argument("--family", action="store_true", help="run the bundled workload family of the object")
    p.set_defaults(func=cmd_flit)

    p = sub.add_parser("check-history", parents=[common], help="decide durable linearizability of a history")
    p.add_argument("file", help="JSON-lines history")
    p.add_argument("--object", choices=sorted(SPECS), required=True)
    p.set_defaults(func=cmd_check_history)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"cxl0: error: {exc}", file=sys.stderr)
        return USAGE
    except (LitmusError, MalformedHistory) as exc:
        print(f"cxl0: error: {exc}", file=sys.stderr)
        return USAGE
    except (StateBudgetExceeded, HistoryTooLarge, MemoryError) as exc:
        print(f"cxl0: resource limit: {exc}", file=sys.stderr)
        return RESOURCE
    except sem.SemanticsError as exc:
        print(f"cxl0: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
