import pytest

from platoon_cascade.config import apply_overrides, load_raw, load_scenario, parse_value
from platoon_cascade.engine import ConfigInvalid

from helpers import SCENARIOS


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    cfg = load_scenario(path)
    cfg.validate()
    assert cfg.corridor.junctions


def test_parse_value_types():
    assert parse_value("10") == 10
    assert parse_value("0.5") == 0.5
    assert parse_value("true") is True
    assert parse_value("hdv") == "hdv"


def test_overrides_do_not_mutate():
    raw = load_raw(SCENARIOS / "i210.toml")
    out = apply_overrides(raw, ["junction.3.threshold_s=10", ("demand.cav_ratio", 0.2)])
    assert out["junction"]["3"]["threshold_s"] == 10
    assert out["demand"]["cav_ratio"] == 0.2
    assert raw["junction"]["3"]["threshold_s"] != 10


def test_override_errors():
    raw = load_raw(SCENARIOS / "i210.toml")
    with pytest.raises(ConfigInvalid):
        apply_overrides(raw, ["junction.42.threshold_s=1"])
    with pytest.raises(ConfigInvalid):
        apply_overrides(raw, ["name.x=1"])
    with pytest.raises(ConfigInvalid):
        load_scenario(SCENARIOS / "i210.toml", ["dynamics.warp=9"])


def test_threshold_override_reaches_corridor():
    cfg = load_scenario(SCENARIOS / "i210.toml", ["junction.4.threshold_s=7.5"])
    assert cfg.corridor.junction(4).threshold_r == 7.5
    assert cfg.corridor.junction(3).threshold_r == 20.0


def test_per_class_fuel():
    cfg = load_scenario(
        SCENARIOS / "single_junction.toml",
        ["fuel.classes.background.fixture=\"reference\"", "fuel.eta=0.05"],
    )
    assert cfg.fuel.for_class("cav").eta == 0.05
    assert cfg.fuel.for_class("background").c0 == 0.1


def test_demand_cutoff():
    cfg = load_scenario(SCENARIOS / "single_junction.toml", ["demand.until_s=-1"])
    with pytest.raises(ConfigInvalid):
        cfg.validate()
