"""Two-vehicle catch-up: simulated incremental fuel against the closed form."""

import argparse
from pathlib import Path

from platoon_cascade.config import load_scenario
from platoon_cascade.coordination import VehicleClass
from platoon_cascade.demand import Arrival, ArrivalSchedule
from platoon_cascade.engine import run
from platoon_cascade.fuel import incremental_cost_analytic

ROOT = Path(__file__).resolve().parent.parent


def follower_fuel(cfg, headway):
    arrivals = ArrivalSchedule((
        Arrival(0.0, 1, 3, VehicleClass.CAV, 0),
        Arrival(headway, 2, 3, VehicleClass.CAV, 1),
    ))
    trip = next(t for t in run(cfg, arrivals).trips if t["vehicle_id"] == 1)
    return trip["fuel_d1_mL"], trip["fuel_post_mL"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "scenarios" / "two_vehicle.toml"))
    ap.add_argument("--headways", default="2,5,10,15,20")
    ap.add_argument("--override", action="append", default=[])
    args = ap.parse_args()

    cfg = load_scenario(args.config, args.override)
    j = cfg.corridor.junctions[0]
    d2 = cfg.corridor.mainline_length - j.position
    model = cfg.fuel.for_class("cav")
    print(f"{'h_s':>5} {'sim_dF1':>9} {'ana_dF1':>9} {'err':>7} {'sim_dF2':>9} {'ana_dF2':>9} {'err':>7}")
    for h in (float(x) for x in args.headways.split(",")):
        c1, c2 = follower_fuel(cfg, h)
        b1, b2 = follower_fuel(cfg.baseline(), h)
        an = incremental_cost_analytic(h, j.d1, d2, cfg.dynamics.v0_cruise, model)
        s1, s2 = c1 - b1, c2 - b2
        print(f"{h:>5g} {s1:>9.2f} {an.dF1:>9.2f} {s1 / an.dF1 - 1:>+7.2%} "
              f"{s2:>9.2f} {an.dF2:>9.2f} {s2 / an.dF2 - 1:>+7.2%}")


if __name__ == "__main__":
    main()
