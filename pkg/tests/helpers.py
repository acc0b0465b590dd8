"""Shared builders for small hand-made scenarios."""

from pathlib import Path

from platoon_cascade.config import load_scenario
from platoon_cascade.coordination import VehicleClass
from platoon_cascade.demand import Arrival, ArrivalSchedule, FleetMix, load_od_matrix
from platoon_cascade.engine import ScenarioConfig, run
from platoon_cascade.dynamics import DynamicsParams
from platoon_cascade.fuel import FIXTURES, FuelConfig
from platoon_cascade.network import build_corridor

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

CAV = VehicleClass.CAV


def pair_schedule(headway, leader=(1, 3), follower=(2, 3)):
    return ArrivalSchedule(
        (
            Arrival(0.0, leader[0], leader[1], CAV, 0),
            Arrival(float(headway), follower[0], follower[1], CAV, 1),
        )
    )


def two_vehicle_config(overrides=()):
    return load_scenario(SCENARIOS / "two_vehicle.toml", overrides)


def run_pair(cfg, headway):
    """Trips of a mainline leader and a ramp follower ``headway`` s behind, by id."""
    res = run(cfg, pair_schedule(headway))
    return res, {t["vehicle_id"]: t for t in res.trips}


def tiny_config(
    flows=((1, 3, 600.0),),
    horizon=300.0,
    threshold=10.0,
    cav_ratio=1.0,
    background_ratio=0.0,
    duration=None,
    dt=0.5,
    seed=0,
    d1=500.0,
    position=800.0,
    length=2000.0,
    fixture="reference",
    **dyn,
):
    """One-junction corridor (nodes 1, 2, 3) with inline O-D flows."""
    lines = ["period_start_s,period_end_s,origin,destination,flow_vph"]
    lines += [f"0,{horizon},{o},{d},{f}" for o, d, f in flows]
    corridor = build_corridor(
        {
            "origin_node": 1,
            "end_node": 3,
            "mainline_length_m": length,
            "junctions": [
                {
                    "id": 2,
                    "position_m": position,
                    "ramp_length_m": d1,
                    "d1_m": d1,
                    "threshold_s": threshold,
                }
            ],
        }
    )
    params = {"v_cap": 30.0, **dyn}
    return ScenarioConfig(
        corridor=corridor,
        od=load_od_matrix("\n".join(lines)),
        mix=FleetMix(cav_ratio, background_ratio),
        dynamics=DynamicsParams(**params),
        fuel=FuelConfig(default=FIXTURES[fixture]),
        dt=dt,
        duration=horizon + 200.0 if duration is None else duration,
        seed=seed,
    )
