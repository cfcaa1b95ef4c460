#!/usr/bin/env python3
"""Run every semantic mutant against the property checks and list what caught it.

Exit status is 1 if any mutant survives.
"""

import json
import sys

from cxl0.properties import mutation_harness


def main() -> int:
    results = mutation_harness()
    for r in results:
        status = "caught" if r.caught else "SURVIVED"
        print(f"{r.mutant:28s} {status:9s} {', '.join(r.caught_by)}")
    if "--json" in sys.argv:
        print(json.dumps([r.to_json() for r in results], indent=2, sort_keys=True))
    return 0 if all(r.caught for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
