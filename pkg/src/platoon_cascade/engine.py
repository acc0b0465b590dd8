"""Fixed-step simulation loop.

Phase order inside :meth:`Simulation.step`:

1. inject due arrivals (one per entry link per step, only when the entry
   point is clear);
2. deliver detector crossings from the previous move to the junction
   controllers, in crossing-time order, and apply their assignments;
3. mode transitions;
4. accelerations for the whole fleet;
5. kinematic update (Euler, speed clamped at zero), recording detector
   crossings with interpolated times;
6. fuel integration, split between coordination zone and elsewhere by the
   fraction of the step's distance driven in each;
7. junction crossings and merges: a ramp vehicle enters the shared lane at
   the merge point, ordered by position with mainline first on ties, and
   becomes a mainline vehicle at the end of the acceleration lane;
8. exits.

One run owns all of its state; nothing is shared between runs.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace

import numpy as np

from platoon_cascade.coordination import (
    Branch,
    DetectorRecord,
    JunctionController,
    PlatoonAssignment,
    VehicleClass,
    assignment_row,
    process_detection,
)
from platoon_cascade.demand import ArrivalSchedule, FleetMix, ODMatrix, generate_arrivals
from platoon_cascade.dynamics import DynamicsParams, Mode, krauss_accel, platoon_accel, safe_speed, transition_modes
from platoon_cascade.fuel import FuelConfig, fuel_rate
from platoon_cascade.network import Corridor

MAINLINE = -1


class ConfigInvalid(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    corridor: Corridor
    od: ODMatrix
    mix: FleetMix = FleetMix()
    dynamics: DynamicsParams = DynamicsParams()
    fuel: FuelConfig = FuelConfig()
    dt: float = 0.5
    duration: float = 3600.0
    seed: int = 0
    event_log: bool = False
    name: str = "scenario"
    # Arrivals scheduled at or after this time are dropped, leaving the rest
    # of the run to drain the network. None keeps the whole O-D horizon.
    demand_until: float | None = None

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConfigInvalid(f"dt must be positive, got {self.dt}")
        if self.demand_until is not None and self.demand_until < 0:
            raise ConfigInvalid(f"demand cut-off must be >= 0, got {self.demand_until}")
        if self.duration < self.dt:
            raise ConfigInvalid(f"duration {self.duration} shorter than dt {self.dt}")
        try:
            self.dynamics.check_dt(self.dt)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
        nodes = set(self.corridor.node_ids)
        for o, d in self.od.pairs():
            if o not in nodes or d not in nodes:
                raise ConfigInvalid(f"O-D pair {o}->{d} references unknown nodes")
            try:
                self.corridor.route(o, d)
            except ValueError as exc:
                raise ConfigInvalid(f"O-D pair {o}->{d}: {exc}") from None

    def with_thresholds(self, thresholds: dict | float) -> "ScenarioConfig":
        """Copy with thresholds replaced, either for all junctions or by id."""
        js = []
        for j in self.corridor.junctions:
            if isinstance(thresholds, dict):
                r = thresholds.get(j.id, j.threshold_r)
            else:
                r = thresholds
            js.append(replace(j, threshold_r=float(r)))
        return replace(self, corridor=self.corridor.with_junctions(js))

    def baseline(self) -> "ScenarioConfig":
        return self.with_thresholds(0.0)


@dataclass
class SimResult:
    trips: list[dict]
    assignments: list[PlatoonAssignment]
    totals: dict
    vehicles_in_network_at_end: int
    pending_at_end: int
    min_gap: float
    events: list[dict] = field(default_factory=list)

    def assignment_rows(self) -> list[dict]:
        return [assignment_row(a) for a in self.assignments]

    def event_lines(self) -> list[str]:
        return [json.dumps(e) for e in self.events]


SUMMARY_FIELDS = (
    "vehicle_count",
    "cav_count",
    "exited",
    "in_network_at_end",
    "pending_at_end",
    "fuel_total_mL",
    "fuel_total_L",
    "fuel_d1_mL",
    "fuel_post_mL",
    "fuel_per_vehicle_mL",
    "vmt_m",
    "assignments",
    "platoons_formed",
    "mean_platoon_size",
    "time_platooned_s",
)


def summarize(result: SimResult) -> dict:
    """Flat metrics row for CSV output."""
    t = result.totals
    n = t["vehicle_count"]
    hist = t["platoon_size_histogram"]
    formed = t["platoons_formed"]
    return {
        "vehicle_count": n,
        "cav_count": t["cav_count"],
        "exited": t["exited"],
        "in_network_at_end": result.vehicles_in_network_at_end,
        "pending_at_end": result.pending_at_end,
        "fuel_total_mL": t["fuel_total_mL"],
        "fuel_total_L": t["fuel_total_mL"] / 1000.0,
        "fuel_d1_mL": t["fuel_d1_mL"],
        "fuel_post_mL": t["fuel_post_mL"],
        "fuel_per_vehicle_mL": t["fuel_total_mL"] / n if n else 0.0,
        "vmt_m": t["vmt_m"],
        "assignments": len(result.assignments),
        "platoons_formed": formed,
        "mean_platoon_size": (sum(k * c for k, c in hist.items()) / formed) if formed else 0.0,
        "time_platooned_s": t["time_platooned_s"],
    }


class PlatoonTracker:
    """Live platoons built from follower -> leader links.

    A platoon exists while at least two vehicles are linked; its size is the
    peak number of simultaneous members. A follower that already led a
    platoon brings its members along when it joins another.
    """

    def __init__(self):
        self.member: dict[int, int] = {}
        self.members: dict[int, set[int]] = {}
        self.peak: dict[int, int] = {}
        self._next = 0

    def join(self, follower: int, leader: int) -> None:
        pid = self.member.get(leader)
        if pid is None:
            pid = self._next
            self._next += 1
            self.members[pid] = {leader}
            self.member[leader] = pid
        own = self.member.get(follower)
        if own is not None and own != pid:
            for v in self.members.pop(own):
                self.member[v] = pid
                self.members[pid].add(v)
            self.peak.pop(own, None)
        self.member[follower] = pid
        self.members[pid].add(follower)
        self.peak[pid] = max(self.peak.get(pid, 0), len(self.members[pid]))

    def leave(self, vehicle: int) -> None:
        pid = self.member.pop(vehicle, None)
        if pid is None:
            return
        group = self.members[pid]
        group.discard(vehicle)
        if len(group) < 2:
            for v in group:
                self.member.pop(v, None)
            del self.members[pid]

    def sizes(self) -> list[int]:
        return list(self.peak.values())


class Simulation:
    """Mutable state of one run. Use :func:`run` unless stepping by hand."""

    def __init__(self, config: ScenarioConfig, arrivals: ArrivalSchedule | None = None):
        config.validate()
        self.cfg = config
        self.p = config.dynamics
        self.dt = config.dt
        corridor = config.corridor
        if arrivals is None:
            arrivals = generate_arrivals(config.od, config.mix, config.seed)
            if config.demand_until is not None:
                # Ids follow time order, so the cut keeps a prefix.
                kept = tuple(a for a in arrivals.arrivals if a.time < config.demand_until)
                arrivals = ArrivalSchedule(kept)
        self.arrivals = arrivals.arrivals
        n_total = len(self.arrivals)

        js = corridor.junctions
        self.n_j = len(js)
        # Sentinel junction at the corridor end keeps indexing branch-free.
        self.j_pos = np.array([j.position for j in js] + [corridor.mainline_length])
        self.j_d1 = np.array([j.d1 for j in js] + [0.0])
        self.j_det = self.j_pos - self.j_d1
        self.controllers = [JunctionController(j.id) for j in js]

        # Static per-vehicle data, indexed by vehicle id.
        start = np.zeros(n_total)
        exit_x = np.zeros(n_total)
        link = np.full(n_total, MAINLINE, dtype=np.int64)
        first_j = np.zeros(n_total, dtype=np.int64)
        dest = np.zeros(n_total, dtype=np.int64)
        cav = np.zeros(n_total, dtype=bool)
        routes = {}
        for a in self.arrivals:
            key = (a.origin, a.destination)
            if key not in routes:
                routes[key] = corridor.route(*key)
            r = routes[key]
            i = a.vehicle_id
            start[i] = r.start_position
            exit_x[i] = r.exit_position
            dest[i] = a.destination
            cav[i] = a.vehicle_class is VehicleClass.CAV
            if r.on_ramp:
                k = corridor.index_of(a.origin)
                link[i] = k
                first_j[i] = k
        self.s_start, self.s_exit, self.s_link = start, exit_x, link
        self.s_first_j, self.s_dest, self.s_cav = first_j, dest, cav

        self.fuel_d1 = np.zeros(n_total)
        self.fuel_post = np.zeros(n_total)
        self.t_platoon = np.zeros(n_total)
        self.dist = np.zeros(n_total)
        self.t_enter = np.full(n_total, np.nan)
        self.t_exit = np.full(n_total, np.nan)
        self.slot_of = np.full(n_total, -1, dtype=np.int64)

        # Active fleet, compact arrays.
        self.vid = np.zeros(0, dtype=np.int64)
        self.x = np.zeros(0)
        self.v = np.zeros(0)
        self.a = np.zeros(0)
        self.link = np.zeros(0, dtype=np.int64)
        self.junc_x = np.zeros(0)
        self.merge_x = np.zeros(0)
        self.exit_x = np.zeros(0)
        self.nj = np.zeros(0, dtype=np.int64)
        self.cav = np.zeros(0, dtype=bool)
        # Acceleration-lane vehicles that mainline traffic has made room for.
        self.visible = np.zeros(0, dtype=bool)
        self.mode = np.zeros(0, dtype=np.int64)
        self.ass = np.zeros(0, dtype=np.int64)
        self.tgt = np.zeros(0)
        self.ass_jx = np.zeros(0)
        self.trailing = np.zeros(0, dtype=bool)

        fuel = config.fuel
        self.model_cav = fuel.for_class(VehicleClass.CAV.value)
        self.model_bg = fuel.for_class(VehicleClass.BACKGROUND.value)

        self.k = 0
        self.next_arrival = 0
        self.queues: dict[int, deque] = {}
        self.pending_detections: list[tuple] = []
        self.assignments: list[PlatoonAssignment] = []
        self.events: list[dict] = []
        self.injected = 0
        self.exited = 0
        self.min_gap = math.inf
        self.platoons = PlatoonTracker()

    @property
    def t(self) -> float:
        return self.k * self.dt

    def _event(self, t, kind, vehicle, junction=None, **payload):
        if self.cfg.event_log:
            self.events.append(
                {"t": round(float(t), 6), "event_kind": kind, "vehicle": int(vehicle),
                 "junction": junction, "payload": payload}
            )

    # -- phase 1 -----------------------------------------------------------
    def _inject(self):
        t = self.t
        while self.next_arrival < len(self.arrivals) and self.arrivals[self.next_arrival].time <= t:
            a = self.arrivals[self.next_arrival]
            self.queues.setdefault(int(self.s_link[a.vehicle_id]), deque()).append(a.vehicle_id)
            self.next_arrival += 1
        new = []
        p = self.p
        for ln in sorted(self.queues):
            q = self.queues[ln]
            if not q:
                continue
            i = q[0]
            x0 = self.s_start[i]
            on_link = self.link == ln
            v_ins = p.v0_cruise
            if on_link.any():
                xs = self.x[on_link]
                j = int(np.argmin(xs))
                gap = xs[j] - x0 - p.vehicle_length
                if gap <= 0.0:
                    continue
                v_ins = min(v_ins, float(safe_speed(gap, self.v[on_link][j], p.tau, -p.a_min, self.dt)))
            q.popleft()
            new.append((i, v_ins))
        if not new:
            return
        ids = np.array([i for i, _ in new], dtype=np.int64)
        links = self.s_link[ids]
        fj = self.s_first_j[ids]
        on_ramp = links != MAINLINE
        self.vid = np.concatenate([self.vid, ids])
        self.x = np.concatenate([self.x, self.s_start[ids]])
        self.v = np.concatenate([self.v, [v for _, v in new]])
        self.a = np.concatenate([self.a, np.zeros(len(ids))])
        self.link = np.concatenate([self.link, links])
        self.junc_x = np.concatenate([self.junc_x, np.where(on_ramp, self.j_pos[fj], -np.inf)])
        self.merge_x = np.concatenate(
            [self.merge_x, np.where(on_ramp, self.j_pos[fj] + self.cfg.corridor.merge_length, -np.inf)]
        )
        self.exit_x = np.concatenate([self.exit_x, self.s_exit[ids]])
        self.nj = np.concatenate([self.nj, fj])
        self.cav = np.concatenate([self.cav, self.s_cav[ids]])
        self.visible = np.concatenate([self.visible, np.zeros(len(ids), dtype=bool)])
        self.mode = np.concatenate([self.mode, np.zeros(len(ids), dtype=np.int64)])
        self.ass = np.concatenate([self.ass, np.full(len(ids), -1, dtype=np.int64)])
        self.tgt = np.concatenate([self.tgt, np.full(len(ids), np.nan)])
        self.ass_jx = np.concatenate([self.ass_jx, np.full(len(ids), np.nan)])
        self.t_enter[ids] = self.t
        # A detector at the very start of a link is never crossed from behind.
        on_det = self.s_cav[ids] & (self.s_start[ids] >= self.j_det[fj])
        for i, ramp in zip(ids[on_det], on_ramp[on_det]):
            self.pending_detections.append((self.t, int(ramp), int(i), int(self.s_first_j[i])))
        self.injected += len(ids)
        self._reindex()
        for i, v in new:
            self._event(self.t, "inject", i, None, speed=round(v, 6))

    def _reindex(self):
        self.slot_of[self.vid] = np.arange(len(self.vid))

    # -- phase 2 -----------------------------------------------------------
    def _coordinate(self):
        if not self.pending_detections:
            return
        js = self.cfg.corridor.junctions
        p = self.p
        for t_cross, branch_rank, i, jidx in sorted(self.pending_detections):
            junction = js[jidx]
            rec = DetectorRecord(
                junction_id=junction.id,
                branch=Branch.MAINLINE if branch_rank == 0 else Branch.ON_RAMP,
                vehicle_id=i,
                t_detect=t_cross,
                vehicle_class=VehicleClass.CAV,
                destination=int(self.s_dest[i]),
            )
            self._event(t_cross, "detect", i, junction.id, branch=rec.branch.value)
            asg = process_detection(self.controllers[jidx], rec, junction, p.v0_cruise, p.v_cap)
            if asg is None:
                continue
            s = self.slot_of[i]
            if s < 0:
                continue
            self.assignments.append(asg)
            self._event(t_cross, "assign", i, junction.id, leader=asg.leader_id,
                        headway=round(asg.headway, 6), target=round(asg.target_speed, 6))
            if self.ass[s] != asg.leader_id:
                if self.mode[s] == Mode.PLATOONED:
                    self.platoons.leave(i)
                self.mode[s] = Mode.FREE
                self.ass[s] = asg.leader_id
            self.tgt[s] = asg.target_speed
            self.ass_jx[s] = junction.position
        self.pending_detections = []

    # -- phases 3-4 ------------------------------------------------------
    def _lane(self, merged):
        return merged & ((self.link == MAINLINE) | self.visible)

    def _update_visibility(self, merged):
        """Let acceleration-lane vehicles into the mainline order once the
        mainline vehicle behind can absorb them at comfortable deceleration."""
        cand = np.flatnonzero(merged & ~self._lane(merged))
        if not len(cand):
            return
        p = self.p
        blocked_links = set()
        for c in cand[np.argsort(-self.x[cand], kind="stable")]:
            # First in, first out along each acceleration lane.
            if self.link[c] in blocked_links:
                continue
            blocked_links.add(self.link[c])
            lane = np.flatnonzero(self._lane(merged))
            xs = self.x[lane]
            behind = lane[xs <= self.x[c]]
            ahead = lane[xs > self.x[c]]
            if len(behind):
                f = behind[np.argmax(self.x[behind])]
                gap = self.x[c] - self.x[f] - p.vehicle_length
                if gap < 0.0 or self._safe(gap, self.v[c], self.ass[f] == self.vid[c]) < self.v[f] - p.a_max * self.dt:
                    continue
            if len(ahead):
                l = ahead[np.argmin(self.x[ahead])]
                gap = self.x[l] - self.x[c] - p.vehicle_length
                if gap < 0.0 or self._safe(gap, self.v[l], self.ass[c] == self.vid[l]) < self.v[c] + p.a_min * self.dt:
                    continue
            la = self.slot_of[self.ass[c]] if self.ass[c] >= 0 else -1
            if la >= 0 and self.x[la] - self.x[c] - p.vehicle_length < 0.0:
                # Let the assigned leader past first.
                continue
            self.visible[c] = True

    def _safe(self, gap, v_leader, partner):
        b, dt = -self.p.a_min, self.dt
        if partner:
            return float(safe_speed(gap + v_leader * dt, v_leader, dt, b, dt))
        return float(safe_speed(gap, v_leader, self.p.tau, b, dt))

    def _leaders(self, merged):
        n = len(self.x)
        lead = np.full(n, -1, dtype=np.int64)
        lane = self._lane(merged)
        idx = np.flatnonzero(lane)
        if len(idx) > 1:
            s = idx[np.lexsort((self.vid[idx], self.x[idx]))]
            lead[s[:-1]] = s[1:]
        waiting = np.flatnonzero(merged & ~lane)
        if len(waiting):
            # Not yet in the mainline order: follow the nearest vehicle fully
            # ahead in either lane. Anything alongside is in the other lane.
            pool = np.flatnonzero(merged)
            order = pool[np.lexsort((self.vid[pool], self.x[pool]))]
            k = np.searchsorted(self.x[order], self.x[waiting] + self.p.vehicle_length, side="left")
            ok = k < len(order)
            lead[waiting[ok]] = order[k[ok]]
        rest = np.flatnonzero(~merged)
        if len(rest):
            # Upstream ramp vehicles follow anything on their own ramp.
            lead[rest] = self._link_leaders()[rest]
        return lead

    def _link_leaders(self):
        n = len(self.x)
        on_ramp = np.flatnonzero(self.link != MAINLINE)
        s = on_ramp[np.lexsort((self.vid[on_ramp], self.x[on_ramp], self.link[on_ramp]))]
        same = self.link[s[:-1]] == self.link[s[1:]]
        lead = np.full(n, -1, dtype=np.int64)
        lead[s[:-1][same]] = s[1:][same]
        return lead

    def _assigned_leader(self, merged):
        has = self.ass >= 0
        ls = np.where(has, self.slot_of[np.where(has, self.ass, 0)], -1)
        alive = ls >= 0
        lsafe = np.where(alive, ls, 0)
        comparable = alive & ((merged & merged[lsafe]) | (self.link == self.link[lsafe]))
        gap = np.where(comparable, self.x[lsafe] - self.x - self.p.vehicle_length, np.nan)
        return has, alive, lsafe, comparable, gap

    def _control(self):
        p = self.p
        dt = self.dt
        merged = self.x >= self.junc_x
        self._update_visibility(merged)
        has, alive, ls, comp, lgap = self._assigned_leader(merged)
        # A leader alongside or behind has to be let past before the pair
        # can close up. Give up if it has not managed by the end of the
        # acceleration lane, or has stopped.
        with np.errstate(invalid="ignore"):
            behind = comp & (lgap < 0.0)
        merge_end = self.ass_jx + self.cfg.corridor.merge_length
        lane = self._lane(merged)
        same_lane = (lane & lane[ls]) | (~merged & (self.link == self.link[ls]))
        dropped = behind & (same_lane | (self.x >= merge_end) | (self.v[ls] < p.merge_yield))
        if dropped.any():
            for s in np.flatnonzero(dropped):
                self._event(self.t, "dissolve", self.vid[s], None, leader=int(self.ass[s]))
                if self.mode[s] == Mode.PLATOONED:
                    self.platoons.leave(int(self.vid[s]))
            self.ass[dropped] = -1
            self.tgt[dropped] = np.nan
            self.mode[dropped] = Mode.FREE
            has, alive, ls, comp, lgap = self._assigned_leader(merged)
            behind &= ~dropped
        lgap = np.where(behind, np.nan, lgap)
        comp = comp & ~behind

        new_mode = transition_modes(self.mode, has, alive, lgap, p)
        if self.cfg.event_log:
            for s in np.flatnonzero(new_mode != self.mode):
                self._event(self.t, "mode", self.vid[s], None,
                            old=Mode(int(self.mode[s])).name, new=Mode(int(new_mode[s])).name)
        formed = np.flatnonzero((new_mode == Mode.PLATOONED) & (self.mode != Mode.PLATOONED))
        for s in np.flatnonzero((self.mode == Mode.PLATOONED) & (new_mode != Mode.PLATOONED)):
            self.platoons.leave(int(self.vid[s]))
        for s in formed:
            self.platoons.join(int(self.vid[s]), int(self.ass[s]))
        lost = has & ~alive
        self.ass[lost] = -1
        self.tgt[lost] = np.nan
        self.mode = new_mode

        lead = self._leaders(merged)
        has_lead = lead >= 0
        lsafe = np.where(has_lead, lead, 0)
        gap = np.where(has_lead, self.x[lsafe] - self.x - p.vehicle_length, np.inf)
        v_lead = np.where(has_lead, self.v[lsafe], 0.0)

        mode = self.mode
        catch = np.minimum(np.where(np.isnan(self.tgt), p.v0_cruise, self.tgt), p.v_cap)
        v_des = np.full(len(self.x), p.v0_cruise)
        v_des = np.where(mode == Mode.CATCHUP, catch, v_des)
        regulating = (mode >= Mode.CLOSING) & comp
        v_des = np.where((mode >= Mode.CLOSING) & ~comp, catch, v_des)
        if regulating.any():
            a_pd = p.kp * (np.nan_to_num(lgap) - p.r2) + p.kd * (self.v[ls] - self.v)
            ceiling = p.v_cap
            v_des = np.where(regulating, np.minimum(self.v + a_pd * dt, ceiling), v_des)
        v_des = np.where(behind, np.minimum(v_des, np.maximum(self.v[ls] - p.merge_yield, 0.0)), v_des)
        own_platoon = regulating & (lead == ls)
        a = krauss_accel(self.v, v_des, gap, v_lead, p.tau, p, dt)
        limit = np.full(len(self.x), np.inf)
        blocked = merged & ~self._lane(merged)
        if blocked.any():
            # Without a mainline gap the acceleration lane ends in a stop.
            a_stop = krauss_accel(self.v, v_des, self.merge_x - self.x, 0.0, p.tau, p, dt)
            # ... and the vehicle ahead on the same lane still binds.
            own = self._link_leaders()
            has_own = blocked & (own >= 0)
            osafe = np.where(has_own, own, 0)
            own_gap = np.where(has_own, self.x[osafe] - self.x - p.vehicle_length, np.inf)
            a_own = krauss_accel(self.v, v_des, own_gap, self.v[osafe], p.tau, p, dt)
            limit = np.where(blocked, np.minimum(a_stop, a_own), limit)
            a = np.minimum(a, limit)
        idx = np.flatnonzero(own_platoon)
        # Followers use their leader's final command, so resolve chains
        # front to back; each pass fixes at least one more link.
        for _ in range(len(idx)):
            a_new = platoon_accel(self.v[idx], v_des[idx], gap[idx], v_lead[idx], a[lead[idx]], p, dt)
            a_new = np.minimum(a_new, limit[idx])
            if np.array_equal(a_new, a[idx]):
                break
            a[idx] = a_new
        self.a = a
        self.trailing = own_platoon & (mode == Mode.PLATOONED) & (lgap <= p.r2 + p.eps_gap)

    # -- phases 5-8 --------------------------------------------------------
    def _advance(self):
        p = self.p
        dt = self.dt
        t = self.t
        x_old = self.x
        v_new = np.maximum(self.v + self.a * dt, 0.0)
        a_eff = (v_new - self.v) / dt
        x_new = x_old + v_new * dt
        moved = x_new - x_old

        nj = self.nj
        det = self.j_det[nj]
        crossed = self.cav & (nj < self.n_j) & (x_old < det) & (x_new >= det)
        if crossed.any():
            merged = x_old >= self.junc_x
            for s in np.flatnonzero(crossed):
                frac = (det[s] - x_old[s]) / moved[s]
                rank = 0 if (self.link[s] == MAINLINE or merged[s]) else 1
                self.pending_detections.append((t + frac * dt, rank, int(self.vid[s]), int(nj[s])))

        # Fuel.
        route_end = np.minimum(x_new, self.exit_x)
        z0 = det
        z1 = self.j_pos[nj]
        overlap = np.maximum(np.minimum(route_end, z1) - np.maximum(x_old, z0), 0.0)
        safe_moved = np.where(moved > 0, moved, 1.0)
        in_zone_now = (x_old >= z0) & (x_old < z1)
        frac_d1 = np.where(moved > 0, overlap / safe_moved, in_zone_now.astype(float))
        frac_route = np.where(moved > 0, np.maximum(route_end - x_old, 0.0) / safe_moved, 1.0)
        rate = np.where(
            self.cav,
            fuel_rate(v_new, a_eff, self.model_cav) * np.where(self.trailing, 1.0 - self.model_cav.eta, 1.0),
            fuel_rate(v_new, a_eff, self.model_bg) * np.where(self.trailing, 1.0 - self.model_bg.eta, 1.0),
        )
        burn = rate * dt
        ids = self.vid
        self.fuel_d1[ids] += burn * frac_d1
        self.fuel_post[ids] += burn * (frac_route - frac_d1)
        self.t_platoon[ids] += np.where(self.trailing, dt * frac_route, 0.0)
        self.dist[ids] += np.maximum(route_end - x_old, 0.0)

        self.x = x_new
        self.v = v_new
        self.a = a_eff

        # Junction crossings and merges.
        past = x_new >= self.j_pos[nj]
        if past.any():
            if self.cfg.event_log:
                for s in np.flatnonzero(past & (nj < self.n_j)):
                    jid = self.cfg.corridor.junctions[nj[s]].id
                    self._event(t + dt, "junction", self.vid[s], jid)
            self.nj = np.minimum(nj + past, self.n_j)
        joined = (self.link != MAINLINE) & self.visible & (x_new >= self.merge_x)
        if joined.any():
            self.link = np.where(joined, MAINLINE, self.link)

        # Exits.
        out = x_new >= self.exit_x
        if out.any():
            gone = self.vid[out]
            self.t_exit[gone] = t + frac_route[out] * dt
            for i in gone:
                self._event(self.t_exit[i], "exit", i, None)
                self.platoons.leave(int(i))
            self.exited += len(gone)
            self.slot_of[gone] = -1
            keep = ~out
            for name in ("vid", "x", "v", "a", "link", "junc_x", "merge_x", "exit_x", "nj",
                         "cav", "visible", "mode", "ass", "tgt", "ass_jx"):
                setattr(self, name, getattr(self, name)[keep])
            self._reindex()

    def _check(self):
        n = len(self.x)
        if self.injected != self.exited + n:
            raise InvariantViolation(
                f"t={self.t}: injected {self.injected} != exited {self.exited} + active {n}"
            )
        if n < 2:
            return
        s = np.lexsort((self.x, self.link))
        same = self.link[s[:-1]] == self.link[s[1:]]
        if same.any():
            gaps = (self.x[s[1:]] - self.x[s[:-1]] - self.p.vehicle_length)[same]
            g = float(gaps.min())
            self.min_gap = min(self.min_gap, g)
            if g < -1e-6:
                bad = np.flatnonzero(same)[np.argmin(gaps)]
                raise InvariantViolation(
                    f"t={self.t}: collision between vehicles {self.vid[s[bad]]} and "
                    f"{self.vid[s[bad + 1]]} on link {self.link[s[bad]]} (gap {g:.3f} m)"
                )

    def step(self):
        self._inject()
        self._coordinate()
        self._control()
        self._advance()
        self.k += 1
        self._check()

    def run(self) -> SimResult:
        n_steps = math.ceil(self.cfg.duration / self.dt - 1e-9)
        for _ in range(n_steps):
            self.step()
        return self.result()

    def result(self) -> SimResult:
        injected_ids = np.flatnonzero(~np.isnan(self.t_enter))
        trips = []
        for i in injected_ids:
            a = self.arrivals[i]
            trips.append(
                {
                    "vehicle_id": int(i),
                    "class": a.vehicle_class.value,
                    "origin": a.origin,
                    "destination": a.destination,
                    "scheduled_s": a.time,
                    "entered_s": float(self.t_enter[i]),
                    "exited_s": None if np.isnan(self.t_exit[i]) else float(self.t_exit[i]),
                    "distance_m": float(self.dist[i]),
                    "fuel_d1_mL": float(self.fuel_d1[i]),
                    "fuel_post_mL": float(self.fuel_post[i]),
                    "fuel_total_mL": float(self.fuel_d1[i] + self.fuel_post[i]),
                    "time_platooned_s": float(self.t_platoon[i]),
                }
            )
        sizes = self.platoons.sizes()
        fuel_d1 = float(self.fuel_d1.sum())
        fuel_post = float(self.fuel_post.sum())
        totals = {
            "fuel_total_mL": fuel_d1 + fuel_post,
            "fuel_d1_mL": fuel_d1,
            "fuel_post_mL": fuel_post,
            "vehicle_count": self.injected,
            "cav_count": int(self.s_cav[injected_ids].sum()),
            "exited": self.exited,
            "vmt_m": float(self.dist.sum()),
            "platoons_formed": len(sizes),
            "platoon_size_histogram": dict(sorted(Counter(sizes).items())),
            "time_platooned_s": float(self.t_platoon.sum()),
        }
        pending = sum(len(q) for q in self.queues.values()) + len(self.arrivals) - self.next_arrival
        return SimResult(
            trips=trips,
            assignments=list(self.assignments),
            totals=totals,
            vehicles_in_network_at_end=len(self.x),
            pending_at_end=pending,
            min_gap=self.min_gap,
            events=self.events,
        )


def run(config: ScenarioConfig, arrivals: ArrivalSchedule | None = None) -> SimResult:
    """Run one scenario to completion. Identical inputs give identical results."""
    return Simulation(config, arrivals).run()
