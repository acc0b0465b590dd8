"""Corridor topology: one mainline with a cascade of on/off-ramp junctions.

Positions are metres along the mainline from the corridor origin. Ramp
vehicles are tracked in the same coordinate: a point ``s`` metres along an
on-ramp of length ``L`` that merges at ``p`` sits at ``p - L + s``. Both
detectors of a junction therefore share the coordinate ``p - d1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from platoon_cascade.coordination import Branch


class CorridorError(ValueError):
    pass


class NonMonotonePositions(CorridorError):
    pass


class OverlappingZones(CorridorError):
    pass


class RampTooShort(CorridorError):
    pass


class InvalidRadius(CorridorError):
    pass


class UnknownNode(CorridorError):
    pass


class RouteNotThroughJunction(CorridorError):
    pass


class NoSuchBranch(CorridorError):
    pass


@dataclass(frozen=True)
class Junction:
    id: int
    position: float
    has_on_ramp: bool = True
    has_off_ramp: bool = True
    ramp_length: float = 0.0
    d1: float = 1000.0
    threshold_r: float = 0.0

    @classmethod
    def from_dict(cls, d: Mapping) -> "Junction":
        return cls(
            id=int(d["id"]),
            position=float(d["position_m"]),
            has_on_ramp=bool(d.get("on_ramp", True)),
            has_off_ramp=bool(d.get("off_ramp", True)),
            ramp_length=float(d.get("ramp_length_m", d.get("d1_m", 1000.0))),
            d1=float(d.get("d1_m", 1000.0)),
            threshold_r=float(d.get("threshold_s", 0.0)),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position_m": self.position,
            "on_ramp": self.has_on_ramp,
            "off_ramp": self.has_off_ramp,
            "ramp_length_m": self.ramp_length,
            "d1_m": self.d1,
            "threshold_s": self.threshold_r,
        }


@dataclass(frozen=True)
class Route:
    origin: int
    destination: int
    entry_position: float
    exit_position: float
    # Where the vehicle physically starts, in mainline-equivalent metres.
    start_position: float
    on_ramp: bool


@dataclass(frozen=True)
class Corridor:
    junctions: tuple[Junction, ...]
    mainline_length: float
    origin_node_id: int = 1
    end_node_id: int = 0
    # Length of the acceleration lane past each merge point.
    merge_length: float = 300.0
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {j.id: j for j in self.junctions})

    @property
    def node_ids(self) -> list[int]:
        return [self.origin_node_id, *(j.id for j in self.junctions), self.end_node_id]

    def junction(self, node_id: int) -> Junction:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNode(f"no junction with id {node_id}") from None

    def index_of(self, node_id: int) -> int:
        return self.junctions.index(self.junction(node_id))

    def node_order(self, node_id: int) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise UnknownNode(f"unknown node {node_id}") from None

    def route(self, origin: int, destination: int) -> Route:
        if self.node_order(destination) <= self.node_order(origin):
            raise CorridorError(f"route {origin}->{destination} is not eastbound")
        if origin == self.origin_node_id:
            entry = start = 0.0
            on_ramp = False
        else:
            j = self.junction(origin)
            if not j.has_on_ramp:
                raise NoSuchBranch(f"junction {origin} has no on-ramp")
            entry = j.position
            start = j.position - j.ramp_length
            on_ramp = True
        if destination == self.end_node_id:
            exit_pos = self.mainline_length
        else:
            j = self.junction(destination)
            if not j.has_off_ramp:
                raise NoSuchBranch(f"junction {destination} has no off-ramp")
            exit_pos = j.position
        return Route(origin, destination, entry, exit_pos, start, on_ramp)

    def to_dict(self) -> dict:
        return {
            "origin_node": self.origin_node_id,
            "end_node": self.end_node_id,
            "mainline_length_m": self.mainline_length,
            "merge_length_m": self.merge_length,
            "junctions": [j.to_dict() for j in self.junctions],
        }

    def with_junctions(self, junctions: Sequence[Junction], **changes) -> "Corridor":
        spec = self.to_dict()
        spec.update(changes)
        spec["junctions"] = [j.to_dict() for j in junctions]
        return build_corridor(spec)


def build_corridor(spec: Mapping) -> Corridor:
    """Validate a corridor description and return an immutable ``Corridor``."""
    raw = spec.get("junctions") or []
    if not raw:
        raise CorridorError("corridor needs at least one junction")
    junctions = tuple(j if isinstance(j, Junction) else Junction.from_dict(j) for j in raw)
    origin = int(spec.get("origin_node", 1))
    end = int(spec.get("end_node", junctions[-1].id + 1))
    length = float(spec["mainline_length_m"])
    merge_length = float(spec.get("merge_length_m", 300.0))

    ids = [origin, *(j.id for j in junctions), end]
    if len(set(ids)) != len(ids):
        raise CorridorError(f"duplicate node ids in {ids}")
    if merge_length < 0:
        raise CorridorError("merge_length_m must be non-negative")

    prev_pos = 0.0
    for j in junctions:
        if j.position <= prev_pos:
            raise NonMonotonePositions(
                f"junction {j.id} at {j.position} m is not downstream of {prev_pos} m"
            )
        if j.d1 <= 0:
            raise InvalidRadius(f"junction {j.id}: d1 must be positive, got {j.d1}")
        if j.has_on_ramp and j.ramp_length < j.d1:
            raise RampTooShort(
                f"junction {j.id}: ramp {j.ramp_length} m shorter than d1 {j.d1} m"
            )
        if j.threshold_r < 0:
            raise CorridorError(f"junction {j.id}: negative threshold")
        if j.position - j.d1 < prev_pos:
            raise OverlappingZones(
                f"junction {j.id}: detector at {j.position - j.d1} m lies upstream "
                f"of the previous junction/origin at {prev_pos} m"
            )
        prev_pos = j.position
    if length <= junctions[-1].position:
        raise NonMonotonePositions("corridor end must lie past the last junction")

    return Corridor(
        junctions=junctions,
        mainline_length=length,
        origin_node_id=origin,
        end_node_id=end,
        merge_length=merge_length,
    )


def cruising_distance(corridor: Corridor, junction: Junction, route: Route) -> float:
    """Distance driven past ``junction`` before the route leaves the corridor."""
    if not route.entry_position <= junction.position <= route.exit_position:
        raise RouteNotThroughJunction(
            f"route {route.origin}->{route.destination} does not pass junction {junction.id}"
        )
    return min(route.exit_position, corridor.mainline_length) - junction.position


def detector_position(junction: Junction, branch: Branch | str) -> float:
    """Detector coordinate on its own axis: mainline metres or ramp metres."""
    branch = Branch(branch)
    if branch is Branch.MAINLINE:
        return junction.position - junction.d1
    if not junction.has_on_ramp:
        raise NoSuchBranch(f"junction {junction.id} has no on-ramp")
    return junction.ramp_length - junction.d1
