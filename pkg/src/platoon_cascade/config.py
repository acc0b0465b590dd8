"""Scenario files (TOML) and dotted ``KEY=VALUE`` overrides.

Layout::

    name = "i210"
    [simulation]   dt_s, duration_s, seed, event_log
    [demand]       od_path (relative to this file), cav_ratio, background_ratio,
                   until_s (drop arrivals scheduled later)
    [corridor]     origin_node, end_node, mainline_length_m, merge_length_m
    [junction.<node id>]  position_m, on_ramp, off_ramp, ramp_length_m, d1_m, threshold_s
    [dynamics]     any DynamicsParams field
    [fuel]         fixture or c0..c5, eta, theta_l_per_km; [fuel.classes.<class>]
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Iterable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from platoon_cascade.demand import FleetMix, read_od_matrix
from platoon_cascade.dynamics import DynamicsParams
from platoon_cascade.engine import ConfigInvalid, ScenarioConfig
from platoon_cascade.fuel import FuelConfig
from platoon_cascade.network import build_corridor

BASE_DIR_KEY = "__base_dir__"


def load_raw(path: str | Path) -> dict:
    path = Path(path)
    with path.open("rb") as fh:
        raw = tomllib.load(fh)
    raw[BASE_DIR_KEY] = str(path.resolve().parent)
    return raw


def parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_path(raw: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(f"override {dotted}: {k} is not a table")
    node[keys[-1]] = value


def apply_overrides(raw: dict, overrides: Iterable[str | tuple[str, object]]) -> dict:
    """Return a copy of ``raw`` with ``a.b.c=value`` overrides applied."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigInvalid(f"override {item!r} is not KEY=VALUE")
            key, text = item.split("=", 1)
            value = parse_value(text.strip())
        else:
            key, value = item
        key = key.strip()
        if key.startswith("junction."):
            jid = key.split(".")[1]
            if jid not in out.get("junction", {}):
                raise ConfigInvalid(f"override {key}: unknown junction {jid}")
        set_path(out, key, value)
    return out


def junction_ids(raw: dict) -> list[int]:
    return sorted(int(k) for k in raw.get("junction", {}))


def build_scenario(raw: dict) -> ScenarioConfig:
    base = Path(raw.get(BASE_DIR_KEY, "."))
    sim = raw.get("simulation", {})
    dem = raw.get("demand", {})
    try:
        od_path = dem["od_path"]
    except KeyError:
        raise ConfigInvalid("[demand] od_path is required") from None
    od_file = (base / od_path).resolve()
    if not od_file.exists():
        raise FileNotFoundError(f"O-D file not found: {od_file}")
    junctions = [
        {"id": int(k), **v}
        for k, v in sorted(raw.get("junction", {}).items(), key=lambda kv: float(kv[1]["position_m"]))
    ]
    corridor_spec = {**raw.get("corridor", {}), "junctions": junctions}
    try:
        corridor = build_corridor(corridor_spec)
        return ScenarioConfig(
            corridor=corridor,
            od=read_od_matrix(od_file),
            mix=FleetMix(
                cav_ratio=float(dem.get("cav_ratio", 0.1)),
                background_ratio=float(dem.get("background_ratio", 0.0)),
            ),
            dynamics=DynamicsParams.from_dict(raw.get("dynamics", {})),
            fuel=FuelConfig.from_dict(raw.get("fuel", {})),
            dt=float(sim.get("dt_s", 0.5)),
            duration=float(sim.get("duration_s", 3600.0)),
            seed=int(sim.get("seed", 0)),
            event_log=bool(sim.get("event_log", False)),
            name=str(raw.get("name", "scenario")),
            demand_until=float(dem["until_s"]) if "until_s" in dem else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(str(exc)) from exc


def load_scenario(path: str | Path, overrides: Iterable = ()) -> ScenarioConfig:
    return build_scenario(apply_overrides(load_raw(path), overrides))
