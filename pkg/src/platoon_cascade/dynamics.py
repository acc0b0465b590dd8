"""Lower-level longitudinal control.

All vehicles share a Krauss-family safe-speed car-following rule. Assigned
followers additionally run a catch-up stage (drive at the commanded speed
until within ``r1`` of the leader) and a PD gap regulator toward ``r2``.

The numeric kernels accept scalars or numpy arrays so the engine can apply
them to the whole fleet at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping

import numpy as np

from platoon_cascade.coordination import VehicleClass


class Mode(enum.IntEnum):
    FREE = 0
    CATCHUP = 1
    CLOSING = 2
    PLATOONED = 3


@dataclass(frozen=True)
class DynamicsParams:
    a_max: float = 1.5
    a_min: float = -4.5
    v0_cruise: float = 20.0
    # 40 mph; shipped scenarios raise it because it sits below v0_cruise.
    v_cap: float = 17.88
    r1: float = 100.0
    r2: float = 10.0
    tau: float = 1.0
    eps_gap: float = 2.0
    kp: float = 0.1
    kd: float = 0.5
    vehicle_length: float = 5.0
    # Speed deficit a follower uses to let an alongside leader past.
    merge_yield: float = 2.0

    def __post_init__(self):
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")
        if self.r2 > self.r1:
            raise ValueError(f"r2 ({self.r2}) must not exceed r1 ({self.r1})")
        if self.v_cap < 0 or self.v0_cruise <= 0:
            raise ValueError("v_cap must be >= 0 and v0_cruise > 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.r2 < 0 or self.eps_gap < 0:
            raise ValueError("r2 and eps_gap must be non-negative")
        if self.vehicle_length <= 0:
            raise ValueError("vehicle_length must be positive")

    @property
    def v_max(self) -> float:
        return max(self.v0_cruise, self.v_cap)

    def check_dt(self, dt: float) -> None:
        # The safe-speed bound is only collision-free when the reaction time
        # covers at least one step.
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self.tau < dt - 1e-12:
            raise ValueError(f"tau ({self.tau}) must be >= dt ({dt})")

    @classmethod
    def from_dict(cls, d: Mapping) -> "DynamicsParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown dynamics keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VehicleState:
    id: int
    position: float
    speed: float
    accel: float = 0.0
    mode: Mode = Mode.FREE
    vehicle_class: VehicleClass = VehicleClass.CAV
    target_speed: float | None = None
    leader_id: int | None = None
    route: object = None
    entered_at: float = 0.0


def stopping_distance(v, b, dt):
    """Distance covered braking at ``b`` from ``v`` under the update
    ``v' = max(v - b*dt, 0)``, ``x' = x + v'*dt``."""
    v = np.asarray(v, dtype=float)
    n = np.floor(v / (b * dt))
    return dt * (n * v - b * dt * n * (n + 1.0) / 2.0)


def safe_speed(gap, v_leader, tau, b, dt):
    """Largest speed the follower may take this step and still stop behind
    a leader that starts braking at ``b`` now.

    The follower holds the chosen speed for ``tau`` (at least one step) and
    then brakes at ``b``; both stopping distances are the exact sums for
    the discrete update, so at equal speeds the bound is ``gap = v*tau``.
    """
    gap = np.asarray(gap, dtype=float)
    room = gap + stopping_distance(v_leader, b, dt)
    # Follower distance is piecewise linear in v with kinks at v = m*b*dt,
    # where it equals b*dt*(m*tau + dt*m*(m-1)/2).
    qa = b * dt * dt / 2.0
    qb = b * dt * (tau - dt / 2.0)
    root = (-qb + np.sqrt(qb * qb + 4.0 * qa * np.maximum(room, 0.0))) / (2.0 * qa)
    m = np.floor(root)
    # Guard against the root landing a hair past an integer.
    m = np.where(b * dt * (m * tau + dt * m * (m - 1.0) / 2.0) > room, m - 1.0, m)
    m = np.maximum(m, 0.0)
    v = (room + b * dt * dt * m * (m + 1.0) / 2.0) / (tau + m * dt)
    return np.where(room > 0.0, v, 0.0)


def krauss_accel(v, v_desired, gap, v_leader, tau, params: DynamicsParams, dt):
    """Acceleration toward ``v_desired`` subject to the safe-speed bound.

    Changes in desired speed are tracked at comfortable rates (``a_max``
    both ways); only the safety bound may command down to ``a_min``.
    ``gap = inf`` means no leader; ``gap <= 0`` is an emergency stop request.
    """
    b = -params.a_min
    v_cmd = np.clip(v_desired, v - params.a_max * dt, v + params.a_max * dt)
    finite = np.isfinite(gap)
    g = np.where(finite, gap, 0.0)
    v_safe = np.where(finite, safe_speed(g, v_leader, tau, b, dt), np.inf)
    v_next = np.minimum(np.minimum(v_cmd, v_safe), params.v_max)
    accel = np.clip((v_next - v) / dt, params.a_min, params.a_max)
    accel = np.where(finite & (gap <= 0.0), params.a_min, accel)
    # Never reverse.
    return np.maximum(accel, -v / dt)


def platoon_accel(v, v_desired, gap, v_leader, a_leader, params: DynamicsParams, dt):
    """Safe-speed control for a follower that knows its leader's command.

    With the leader's next speed known there is no reaction delay: the
    follower only has to be able to stop behind the leader from the next
    step on, so the steady-state gap bound drops to zero.
    """
    v_next = np.maximum(v_leader + a_leader * dt, 0.0)
    return krauss_accel(v, v_desired, gap + v_next * dt, v_next, dt, params, dt)


def catchup_target(target_speed, params: DynamicsParams):
    return np.minimum(target_speed, params.v_cap)


def pd_accel(gap, v, v_leader, params: DynamicsParams):
    """Raw PD command driving the gap to ``r2`` at zero relative speed."""
    return params.kp * (gap - params.r2) + params.kd * (v_leader - v)


def transition_modes(mode, has_assignment, leader_alive, leader_gap, params: DynamicsParams):
    """Vectorised mode update. ``leader_gap`` is NaN where no comparable gap exists."""
    mode = np.asarray(mode).copy()
    has = np.asarray(has_assignment, dtype=bool)
    alive = np.asarray(leader_alive, dtype=bool)
    gap = np.asarray(leader_gap, dtype=float)
    mode[~(has & alive)] = Mode.FREE
    active = has & alive
    mode[active & (mode == Mode.FREE)] = Mode.CATCHUP
    with np.errstate(invalid="ignore"):
        mode[active & (mode == Mode.CATCHUP) & (gap < params.r1)] = Mode.CLOSING
        mode[active & (mode == Mode.CLOSING) & (gap <= params.r2)] = Mode.PLATOONED
    return mode


def mode_transition(
    mode: Mode,
    assignment,
    leader_gap: float | None,
    params: DynamicsParams,
    leader_alive: bool = True,
) -> Mode:
    """Next mode for one vehicle.

    Free becomes CatchUp once an assignment exists, CatchUp becomes Closing
    strictly inside ``r1``, Closing becomes Platooned at ``gap <= r2``. Losing
    the leader (exit) always returns to Free.
    """
    gap = math.nan if leader_gap is None else leader_gap
    out = transition_modes(
        np.array([int(mode)]), [assignment is not None], [leader_alive], [gap], params
    )
    return Mode(int(out[0]))


def _gap(self: VehicleState, leader: VehicleState | None, params: DynamicsParams) -> float:
    if leader is None:
        return math.inf
    return leader.position - self.position - params.vehicle_length


def follow_step(
    self: VehicleState, leader: VehicleState | None, params: DynamicsParams, dt: float
) -> float:
    """Safe car-following acceleration toward the mode's desired speed."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if self.mode is Mode.CATCHUP and self.target_speed is not None:
        desired = float(catchup_target(self.target_speed, params))
    elif self.mode in (Mode.CLOSING, Mode.PLATOONED):
        desired = params.v_cap
    else:
        desired = params.v0_cruise
    v_lead = leader.speed if leader is not None else 0.0
    return float(
        krauss_accel(self.speed, desired, _gap(self, leader, params), v_lead, params.tau, params, dt)
    )


def platoon_gap_step(
    self: VehicleState, leader: VehicleState, params: DynamicsParams, dt: float
) -> float:
    """PD gap regulation toward ``r2``, bounded by ``v_cap`` and the safety rule.

    ``leader.accel`` is taken as the leader's command for this step.
    """
    gap = _gap(self, leader, params)
    v_desired = min(self.speed + float(pd_accel(gap, self.speed, leader.speed, params)) * dt, params.v_cap)
    return float(
        platoon_accel(self.speed, v_desired, gap, leader.speed, leader.accel, params, dt)
    )
