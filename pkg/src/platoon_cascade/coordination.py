"""Upper-level per-junction coordination.

Each junction has two detectors placed ``d1`` upstream of the merge, one on
the mainline and one on the on-ramp. Every detection is compared with the
previous detection at the same junction (either branch); if the headway is
under the junction threshold the newer vehicle is told to speed up so that
both reach the junction together.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Branch(str, enum.Enum):
    MAINLINE = "mainline"
    ON_RAMP = "on_ramp"


class VehicleClass(str, enum.Enum):
    CAV = "cav"
    BACKGROUND = "background"


class NegativeHeadway(ValueError):
    pass


@dataclass(frozen=True)
class DetectorRecord:
    junction_id: int
    branch: Branch
    vehicle_id: int
    t_detect: float
    vehicle_class: VehicleClass = VehicleClass.CAV
    destination: int | None = None


@dataclass(frozen=True)
class PlatoonAssignment:
    junction_id: int
    leader_id: int
    follower_id: int
    headway: float
    target_speed: float
    est_junction_arrival: float
    decided_at: float
    capped: bool = False

    def __post_init__(self):
        if self.leader_id == self.follower_id:
            raise ValueError("leader and follower must differ")
        if self.headway < 0 or self.target_speed <= 0:
            raise ValueError(f"invalid assignment {self}")


def estimate_junction_arrival(rec: DetectorRecord, d1: float, v0: float) -> float:
    """Detection time plus the nominal traverse time ``d1 / v0``."""
    if d1 <= 0 or v0 <= 0:
        raise ValueError("d1 and v0 must be positive")
    return rec.t_detect + d1 / v0


def platoon_decision(
    leader_rec: DetectorRecord, follower_rec: DetectorRecord, threshold_r: float
) -> bool:
    headway = follower_rec.t_detect - leader_rec.t_detect
    if headway < 0:
        raise NegativeHeadway(
            f"follower {follower_rec.vehicle_id} detected {-headway:.3f} s before "
            f"leader {leader_rec.vehicle_id}"
        )
    return headway < threshold_r


def target_speed(headway: float, d1: float, v0: float) -> float | None:
    """Average speed that lets the follower reach the junction with the leader.

    Returns ``None`` when the headway is at least the traverse time ``d1/v0``:
    the leader is already past the junction and the follower is left alone.
    """
    if headway < 0:
        raise ValueError("headway must be non-negative")
    t0 = d1 / v0
    if headway >= t0:
        return None
    return d1 / (t0 - headway)


@dataclass
class JunctionController:
    """Mutable per-junction state: the latest CAV detection (platoon tail)."""

    junction_id: int
    last: DetectorRecord | None = None
    detections: int = 0
    assignments: int = 0


def process_detection(
    state: JunctionController,
    rec: DetectorRecord,
    junction,
    v0: float,
    v_cap: float = float("inf"),
) -> PlatoonAssignment | None:
    """Pair ``rec`` with the previous detection and maybe issue an assignment.

    ``junction`` needs ``id``, ``d1`` and ``threshold_r`` attributes. Background
    vehicles are ignored entirely: they neither anchor nor receive assignments
    and do not displace the stored platoon tail.
    """
    if rec.vehicle_class is not VehicleClass.CAV:
        return None
    prev = state.last
    state.last = rec
    state.detections += 1
    if prev is None:
        return None
    if not platoon_decision(prev, rec, junction.threshold_r):
        return None
    headway = rec.t_detect - prev.t_detect
    vf = target_speed(headway, junction.d1, v0)
    if vf is None:
        return None
    if prev.destination == junction.id or rec.destination == junction.id:
        return None
    state.assignments += 1
    return PlatoonAssignment(
        junction_id=junction.id,
        leader_id=prev.vehicle_id,
        follower_id=rec.vehicle_id,
        headway=headway,
        target_speed=vf,
        est_junction_arrival=estimate_junction_arrival(prev, junction.d1, v0),
        decided_at=rec.t_detect,
        capped=vf > v_cap,
    )


ASSIGNMENT_LOG_FIELDS = (
    "decided_at_s",
    "junction",
    "leader_id",
    "follower_id",
    "headway_s",
    "target_speed_mps",
    "capped_flag",
)


def assignment_row(a: PlatoonAssignment) -> dict:
    return {
        "decided_at_s": a.decided_at,
        "junction": a.junction_id,
        "leader_id": a.leader_id,
        "follower_id": a.follower_id,
        "headway_s": a.headway,
        "target_speed_mps": a.target_speed,
        "capped_flag": int(a.capped),
    }
