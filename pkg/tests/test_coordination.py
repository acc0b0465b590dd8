import pytest
from hypothesis import given
from hypothesis import strategies as st

from platoon_cascade.coordination import (
    Branch,
    DetectorRecord,
    JunctionController,
    NegativeHeadway,
    VehicleClass,
    estimate_junction_arrival,
    platoon_decision,
    process_detection,
    target_speed,
)
from platoon_cascade.network import Junction


def rec(t, vid=0, branch=Branch.MAINLINE, cls=VehicleClass.CAV, dest=None, junction=2):
    return DetectorRecord(junction, branch, vid, t, cls, dest)


def test_arrival_estimate():
    assert estimate_junction_arrival(rec(100.0), 1000.0, 20.0) == 150.0
    assert estimate_junction_arrival(rec(0.0), 1000.0, 25.0) == 40.0
    ramp = rec(100.0, branch=Branch.ON_RAMP)
    assert estimate_junction_arrival(ramp, 1000.0, 20.0) == estimate_junction_arrival(
        rec(100.0), 1000.0, 20.0
    )


@pytest.mark.parametrize(
    "headway, r, expected", [(0.0, 5.0, True), (5.0, 5.0, False), (10.0, 15.0, True)]
)
def test_decision(headway, r, expected):
    assert platoon_decision(rec(50.0), rec(50.0 + headway, 1), r) is expected


def test_decision_rejects_reversed_order():
    with pytest.raises(NegativeHeadway):
        platoon_decision(rec(10.0), rec(9.0, 1), 5.0)


def test_target_speed_examples():
    assert target_speed(10.0, 1000.0, 20.0) == 25.0
    assert target_speed(0.0, 1000.0, 20.0) == 20.0
    assert target_speed(50.0, 1000.0, 20.0) is None


@given(st.floats(0.0, 49.0), st.floats(0.01, 0.99))
def test_target_speed_increasing(h, frac):
    h2 = h + frac * (50.0 - h)
    assert target_speed(h2, 1000.0, 20.0) > target_speed(h, 1000.0, 20.0)


J = Junction(id=2, position=3000.0, d1=1000.0, threshold_r=5.0, ramp_length=1000.0)


def test_assignment_composed():
    state = JunctionController(2)
    assert process_detection(state, rec(100.0, 0, dest=3), J, 20.0) is None
    a = process_detection(state, rec(103.0, 1, Branch.ON_RAMP, dest=3), J, 20.0, v_cap=30.0)
    assert a is not None
    assert (a.leader_id, a.follower_id, a.headway) == (0, 1, 3.0)
    assert a.target_speed == pytest.approx(1000.0 / 47.0)
    assert a.est_junction_arrival == 150.0
    assert a.decided_at == 103.0
    assert not a.capped


def test_leader_exiting_here_cancels():
    state = JunctionController(2)
    process_detection(state, rec(100.0, 0, dest=2), J, 20.0)
    assert process_detection(state, rec(103.0, 1, dest=3), J, 20.0) is None


def test_background_gate():
    state = JunctionController(2)
    process_detection(state, rec(100.0, 0), J, 20.0)
    bg = rec(101.0, 1, cls=VehicleClass.BACKGROUND)
    assert process_detection(state, bg, J, 20.0) is None
    # The background vehicle does not displace the stored tail.
    assert state.last.vehicle_id == 0
    a = process_detection(state, rec(103.0, 2), J, 20.0)
    assert a.leader_id == 0 and a.headway == 3.0


def test_capped_flag():
    state = JunctionController(2)
    process_detection(state, rec(0.0, 0), J, 20.0)
    a = process_detection(state, rec(4.0, 1), J, 20.0, v_cap=21.0)
    assert a.capped and a.target_speed == pytest.approx(1000.0 / 46.0)


@given(
    st.lists(st.floats(0.0, 30.0), min_size=1, max_size=40),
    st.floats(0.0, 60.0),
)
def test_assignments_respect_threshold(gaps, r):
    j = Junction(id=2, position=3000.0, d1=1000.0, threshold_r=r, ramp_length=1000.0)
    state = JunctionController(2)
    t = 0.0
    for i, g in enumerate(gaps):
        t += g
        a = process_detection(state, rec(t, i), j, 20.0)
        if a is None:
            continue
        assert 0.0 <= a.headway < r
        assert a.target_speed > 0
        assert a.target_speed <= target_speed(a.headway, 1000.0, 20.0)
        assert a.follower_id == i and a.leader_id == i - 1


@given(st.lists(st.floats(0.0, 30.0), min_size=1, max_size=40))
def test_zero_threshold_never_assigns(gaps):
    j = Junction(id=2, position=3000.0, d1=1000.0, threshold_r=0.0, ramp_length=1000.0)
    state = JunctionController(2)
    t = 0.0
    for i, g in enumerate(gaps):
        t += g
        assert process_detection(state, rec(t, i), j, 20.0) is None
    assert state.assignments == 0
