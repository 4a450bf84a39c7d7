"""Evaluate every facility-location algorithm on the seeded suite and write JSON reports."""

import argparse
import json
from pathlib import Path

from stochround.harness import SUFL_ALGOS, EvalParams, evaluate, render_comparison, report_json, suite_instances


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--oracle", action="store_true")
    ap.add_argument("--out", default="reports")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = EvalParams(oracle=args.oracle)
    failed = 0
    for k, inst in enumerate(suite_instances(args.count)):
        reps = [evaluate(inst, a, params, args.trials, args.seed + k) for a in SUFL_ALGOS]
        for r in reps:
            (out / f"instance{k:02d}_{r.algorithm}.json").write_text(report_json(r))
        failed += sum(not r.passed for r in reps)
        print(f"instance {k}")
        print(render_comparison(reps))
    summary = {"instances": args.count, "trials": args.trials, "failed_reports": failed}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(summary)
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
