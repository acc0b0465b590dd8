"""Heterogeneous thresholds at two I-210 junctions, printed as a fuel matrix."""

import argparse
from pathlib import Path

from platoon_cascade.cli import cmd_grid

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "scenarios" / "i210.toml"))
    ap.add_argument("--junctions", default="3,4")
    ap.add_argument("--values", default="5,10,15,20,25")
    ap.add_argument("--others", type=float, default=20.0)
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/heatmap")
    args = ap.parse_args()

    ja, jb = (int(x) for x in args.junctions.split(","))
    values = [float(x) for x in args.values.split(",")]
    cells, _ = cmd_grid(args.config, ja, jb, values, values, args.replications,
                        others=args.others, out=args.out, workers=args.workers)
    fuel = {(c["r_a"], c["r_b"]): c["mean_fuel"] / 1000.0 for c in cells}
    print(f"mean fuel (L); rows r{ja}, columns r{jb}")
    print("      " + "".join(f"{b:>9g}" for b in values))
    for a in values:
        print(f"{a:>5g} " + "".join(f"{fuel[a, b]:>9.2f}" for b in values))
    best = min(cells, key=lambda c: c["mean_fuel"])
    print(f"argmin r{ja}={best['r_a']:g} r{jb}={best['r_b']:g}")


if __name__ == "__main__":
    main()
