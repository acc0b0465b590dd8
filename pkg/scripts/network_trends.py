"""Threshold, detector-radius and CAV-ratio studies on the I-210 scenario."""

import argparse
from pathlib import Path

import numpy as np

from platoon_cascade.cli import SweepSpec, cmd_sweep

ROOT = Path(__file__).resolve().parent.parent

STUDIES = {
    "threshold_all": (0, 5, 10, 15, 20, 25),
    "d1_all": (500, 1000, 1500),
    "cav_ratio": (0.05, 0.1, 0.2),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "scenarios" / "i210.toml"))
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/network")
    ap.add_argument("--study", choices=sorted(STUDIES), action="append")
    args = ap.parse_args()

    for variable in args.study or list(STUDIES):
        spec = SweepSpec(args.config, variable, STUDIES[variable], args.replications)
        rows = cmd_sweep(spec, Path(args.out) / variable, args.workers)
        print(f"\n{variable}")
        print(f"{'value':>8} {'fuel_L':>10} {'fuel/veh_mL':>12} {'platoons':>9}")
        for value in STUDIES[variable]:
            sel = [r for r in rows if r["variable_value"] == float(value)]
            print(f"{value:>8g} {np.mean([r['fuel_total_L'] for r in sel]):>10.2f} "
                  f"{np.mean([r['fuel_per_vehicle_mL'] for r in sel]):>12.1f} "
                  f"{np.mean([r['platoons_formed'] for r in sel]):>9.1f}")


if __name__ == "__main__":
    main()
