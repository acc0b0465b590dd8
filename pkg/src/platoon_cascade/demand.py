"""Time-sliced O-D demand and seeded Poisson arrival generation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from platoon_cascade.coordination import VehicleClass

OD_HEADER = ("period_start_s", "period_end_s", "origin", "destination", "flow_vph")


class DemandError(ValueError):
    pass


class NegativeFlow(DemandError):
    pass


class WrongDirection(DemandError):
    pass


class MalformedRow(DemandError):
    pass


@dataclass(frozen=True)
class ODMatrix:
    periods: tuple[tuple[float, float], ...]
    # (period index, origin, destination) -> veh/hr
    flows: dict = field(default_factory=dict)

    def flow(self, period: int, origin: int, destination: int) -> float:
        return self.flows.get((period, origin, destination), 0.0)

    def period_total(self, period: int) -> float:
        return sum(f for (p, _, _), f in self.flows.items() if p == period)

    @property
    def horizon(self) -> float:
        return self.periods[-1][1] if self.periods else 0.0

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({(o, d) for (_, o, d) in self.flows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(OD_HEADER)
        for (p, o, d), f in sorted(self.flows.items()):
            start, end = self.periods[p]
            w.writerow([_num(start), _num(end), o, d, _num(f)])
        return buf.getvalue()


def _num(x: float):
    return int(x) if float(x).is_integer() else x


def load_od_matrix(text: str) -> ODMatrix:
    """Parse the O-D CSV (header ``period_start_s,...,flow_vph``)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows:
        raise MalformedRow("empty O-D file")
    header = tuple(c.strip() for c in rows[0])
    if header != OD_HEADER:
        raise MalformedRow(f"expected header {','.join(OD_HEADER)}, got {','.join(header)}")
    period_index: dict[tuple[float, float], int] = {}
    flows: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise MalformedRow(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            start, end = float(row[0]), float(row[1])
            origin, dest = int(row[2]), int(row[3])
            flow = float(row[4])
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from None
        if end <= start:
            raise MalformedRow(f"line {lineno}: empty period [{start}, {end})")
        if flow < 0:
            raise NegativeFlow(f"line {lineno}: flow {flow} < 0")
        if dest <= origin:
            raise WrongDirection(f"line {lineno}: {origin}->{dest} is not eastbound")
        p = period_index.setdefault((start, end), len(period_index))
        if (p, origin, dest) in flows:
            raise MalformedRow(f"line {lineno}: duplicate cell {origin}->{dest}")
        flows[(p, origin, dest)] = flow

    periods = sorted(period_index)
    for (a0, a1), (b0, b1) in zip(periods, periods[1:]):
        if b0 != a1:
            raise MalformedRow(f"periods [{a0},{a1}) and [{b0},{b1}) are not contiguous")
    # Renumber in time order.
    remap = {period_index[p]: i for i, p in enumerate(periods)}
    flows = {(remap[p], o, d): f for (p, o, d), f in flows.items()}
    return ODMatrix(periods=tuple(periods), flows=flows)


def read_od_matrix(path: str | Path) -> ODMatrix:
    return load_od_matrix(Path(path).read_text())


@dataclass(frozen=True)
class FleetMix:
    """Fractions of the base O-D demand realised as each class.

    The two ratios are applied independently to the same base flows, so
    they need not sum to one.
    """

    cav_ratio: float = 0.1
    background_ratio: float = 0.0

    def __post_init__(self):
        for name in ("cav_ratio", "background_ratio"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {r}")

    def ratio(self, cls: VehicleClass) -> float:
        return self.cav_ratio if cls is VehicleClass.CAV else self.background_ratio


@dataclass(frozen=True)
class Arrival:
    time: float
    origin: int
    destination: int
    vehicle_class: VehicleClass
    vehicle_id: int


@dataclass(frozen=True)
class ArrivalSchedule:
    arrivals: tuple[Arrival, ...]

    def __len__(self):
        return len(self.arrivals)

    def __iter__(self):
        return iter(self.arrivals)


_CLASS_CODE = {VehicleClass.CAV: 0, VehicleClass.BACKGROUND: 1}


def stream_rng(seed: int, period: int, origin: int, destination: int, cls: VehicleClass):
    """Independent generator for one (period, O-D pair, class) cell.

    The cell coordinates form the ``spawn_key`` of a ``SeedSequence`` rooted
    at ``seed``; changing one class ratio therefore leaves every other
    cell's draws untouched.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(period, origin, destination, _CLASS_CODE[cls]))
    return np.random.Generator(np.random.PCG64(ss))


def generate_arrivals(od: ODMatrix, mix: FleetMix, seed: int) -> ArrivalSchedule:
    """Poisson arrivals per (period, pair, class), merged in time order.

    Each cell draws a Poisson count for its period and places that many
    uniform arrival times, which is the same process as exponential gaps.
    Ids are assigned after sorting on (time, origin, destination, class).
    """
    raw = []
    for (p, o, d), flow in sorted(od.flows.items()):
        start, end = od.periods[p]
        for cls in (VehicleClass.CAV, VehicleClass.BACKGROUND):
            rate = flow * mix.ratio(cls) / 3600.0
            if rate <= 0.0:
                continue
            rng = stream_rng(seed, p, o, d, cls)
            n = rng.poisson(rate * (end - start))
            times = np.sort(rng.uniform(start, end, size=n))
            raw.extend((float(t), o, d, _CLASS_CODE[cls]) for t in times)
    raw.sort()
    classes = list(_CLASS_CODE)
    return ArrivalSchedule(
        tuple(Arrival(t, o, d, classes[c], i) for i, (t, o, d, c) in enumerate(raw))
    )
