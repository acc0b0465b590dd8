"""Threshold sweep on the single-junction scenario at several cruising distances.

Prints the seed-paired mean fuel change versus threshold 0 for each D2 and
writes one sweep CSV per D2 under --out.
"""

import argparse
from pathlib import Path

import numpy as np

from platoon_cascade.cli import SweepSpec, cmd_sweep
from platoon_cascade.config import load_raw

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--config", default=str(ROOT / "scenarios" / "single_junction.toml"))
    ap.add_argument("--d2", default="500,1000,2000,5000")
    ap.add_argument("--thresholds", default="0,5,10,15,20,25")
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/d2_sweep")
    args = ap.parse_args()

    thresholds = [float(x) for x in args.thresholds.split(",")]
    junction = load_raw(args.config)["junction"]
    last = max(float(j["position_m"]) for j in junction.values())
    print("D2_m  " + "  ".join(f"r={r:>4g}" for r in thresholds))
    for d2 in (float(x) for x in args.d2.split(",")):
        spec = SweepSpec(args.config, "threshold_all", tuple(thresholds), args.replications,
                         overrides=(f"corridor.mainline_length_m={last + d2}",))
        rows = cmd_sweep(spec, Path(args.out) / f"d2_{d2:g}", args.workers)
        by = {(r["variable_value"], r["seed"]): r["fuel_total_mL"] for r in rows}
        seeds = sorted({r["seed"] for r in rows})
        deltas = [np.mean([by[r, s] - by[thresholds[0], s] for s in seeds]) for r in thresholds]
        print(f"{d2:<5g} " + "  ".join(f"{d:+7.1f}" for d in deltas))


if __name__ == "__main__":
    main()
