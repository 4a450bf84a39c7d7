"""Print connection factor and stretch bound of per-scenario rounding over a range of gamma."""

import argparse

import numpy as np

from stochround.harness import gamma_tradeoff


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lo", type=float, default=2.1)
    ap.add_argument("--hi", type=float, default=8.0)
    ap.add_argument("--steps", type=int, default=24)
    args = ap.parse_args()
    rows = gamma_tradeoff(np.linspace(args.lo, args.hi, args.steps).tolist() + [2.4957, 5.0])
    print(f"{'gamma':>8}  {'connection':>10}  {'stretch':>8}")
    for r in sorted(rows, key=lambda r: r["gamma"]):
        print(f"{r['gamma']:>8.4f}  {r['connection_factor']:>10.4f}  {r['stretch_bound']:>8.3f}")
    print(f"gamma where the connection factor equals gamma: {rows[0]['equalization_root']:.6f}")


if __name__ == "__main__":
    main()
