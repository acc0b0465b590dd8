import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from platoon_cascade.dynamics import (
    DynamicsParams,
    Mode,
    VehicleState,
    catchup_target,
    follow_step,
    krauss_accel,
    mode_transition,
    platoon_gap_step,
    safe_speed,
    stopping_distance,
)

P = DynamicsParams()
DT = 0.5


def test_params_validation():
    with pytest.raises(ValueError):
        DynamicsParams(r1=5.0, r2=10.0)
    with pytest.raises(ValueError):
        DynamicsParams(a_min=1.0)
    with pytest.raises(ValueError):
        DynamicsParams(v_cap=-1.0)
    with pytest.raises(ValueError):
        P.check_dt(2.0)


def test_free_at_cruise():
    me = VehicleState(0, 0.0, P.v0_cruise)
    assert follow_step(me, None, P, DT) == 0.0


def test_stopped_leader_forces_emergency_brake():
    me = VehicleState(0, 0.0, 10.0)
    leader = VehicleState(1, 10.0, 0.0)  # 5 m gap after the vehicle length
    assert follow_step(me, leader, P, DT) == P.a_min


def test_stopping_distance_discrete_sum():
    # 10 m/s at 4.5 m/s^2 and dt 0.5: speeds 7.75, 5.5, 3.25, 1.0 then 0.
    assert stopping_distance(10.0, 4.5, 0.5) == pytest.approx(0.5 * (7.75 + 5.5 + 3.25 + 1.0))


def test_safe_speed_equal_speed_bound():
    v = 20.0
    assert safe_speed(v * P.tau, v, P.tau, 4.5, DT) == pytest.approx(v)


def test_safe_following_fixed_point():
    v = P.v0_cruise
    lead = VehicleState(1, v * P.tau + P.vehicle_length, v)
    me = VehicleState(0, 0.0, v)
    for _ in range(1000):
        a = follow_step(me, lead, P, DT)
        assert abs(a) <= P.a_max * DT
        me.speed = max(me.speed + a * DT, 0.0)
        me.position += me.speed * DT
        lead.position += lead.speed * DT
    assert me.speed == pytest.approx(lead.speed, abs=1e-9)


@pytest.mark.parametrize(
    "mode, assigned, gap, expected",
    [
        (Mode.FREE, True, 500.0, Mode.CATCHUP),
        (Mode.CATCHUP, True, 80.0, Mode.CLOSING),
        (Mode.CATCHUP, True, 100.0, Mode.CATCHUP),
        (Mode.CLOSING, True, 10.0, Mode.PLATOONED),
        (Mode.CLOSING, True, 10.5, Mode.CLOSING),
        (Mode.PLATOONED, True, 15.0, Mode.PLATOONED),
        (Mode.PLATOONED, False, 10.0, Mode.FREE),
    ],
)
def test_mode_transition_examples(mode, assigned, gap, expected):
    assert mode_transition(mode, object() if assigned else None, gap, P) is expected


def test_leader_exit_returns_free():
    assert mode_transition(Mode.PLATOONED, object(), 10.0, P, leader_alive=False) is Mode.FREE


_ORDER = [Mode.FREE, Mode.CATCHUP, Mode.CLOSING, Mode.PLATOONED]


@given(st.lists(st.tuples(st.booleans(), st.floats(0.0, 600.0)), min_size=1, max_size=30))
def test_modes_only_advance(seq):
    mode = Mode.FREE
    for alive, gap in seq:
        new = mode_transition(mode, object(), gap, P, leader_alive=alive)
        if new is not Mode.FREE:
            assert _ORDER.index(new) >= _ORDER.index(mode)
        mode = new


@pytest.mark.parametrize("target, cap, out", [(25.0, 35.0, 25.0), (40.0, 35.0, 35.0), (35.0, 35.0, 35.0)])
def test_catchup_cap(target, cap, out):
    assert catchup_target(target, DynamicsParams(v_cap=cap)) == out


def test_gap_regulation_signs():
    lead = VehicleState(1, 100.0, 15.0)
    at_r2 = VehicleState(0, 100.0 - P.vehicle_length - P.r2, 15.0, mode=Mode.PLATOONED)
    assert abs(platoon_gap_step(at_r2, lead, P, DT)) < 0.01
    far = VehicleState(0, 100.0 - P.vehicle_length - P.r2 - 20.0, 15.0, mode=Mode.CLOSING)
    assert platoon_gap_step(far, lead, P, DT) > 0


def test_gap_regulation_settles():
    p = DynamicsParams(v_cap=30.0)
    lead = VehicleState(1, 200.0, 20.0)
    me = VehicleState(0, 200.0 - p.vehicle_length - p.r2 - 30.0, 20.0, mode=Mode.CLOSING)
    gaps = []
    for _ in range(int(60 / DT)):
        a = platoon_gap_step(me, lead, p, DT)
        me.speed = max(me.speed + a * DT, 0.0)
        me.position += me.speed * DT
        lead.position += lead.speed * DT
        gaps.append(lead.position - me.position - p.vehicle_length)
    assert min(gaps) >= 0.5 * p.r2
    assert abs(gaps[-1] - p.r2) <= p.eps_gap


@given(
    st.floats(0.0, 30.0),
    st.floats(0.0, 30.0),
    st.floats(0.0, 200.0),
    st.lists(st.floats(-4.5, 1.5), min_size=1, max_size=200),
)
def test_follower_never_collides(v_f, v_l, gap, leader_accels):
    """A Krauss follower stays behind a leader doing anything physically allowed,
    provided it starts in a state from which the bound is reachable."""
    p = DynamicsParams(v_cap=30.0)
    b = -p.a_min
    # Start only from states the follower could have been put in by the rule.
    v_f = min(v_f, float(safe_speed(gap, v_l, p.tau, b, DT)))
    xf, xl = 0.0, gap + p.vehicle_length
    for al in leader_accels:
        a = krauss_accel(v_f, p.v0_cruise, xl - xf - p.vehicle_length, v_l, p.tau, p, DT)
        v_l = max(v_l + al * DT, 0.0)
        v_f = max(v_f + float(a) * DT, 0.0)
        xl += v_l * DT
        xf += v_f * DT
        assert xl - xf - p.vehicle_length >= -1e-6
        assert 0.0 <= v_f <= p.v_max


@given(st.floats(0.0, 500.0), st.floats(0.0, 40.0))
def test_safe_speed_monotone_in_gap(gap, v_l):
    lo = safe_speed(gap, v_l, 1.0, 4.5, DT)
    hi = safe_speed(gap + 1.0, v_l, 1.0, 4.5, DT)
    assert hi >= lo - 1e-9
    assert np.isfinite(lo) and lo >= 0
