"""Servo chain: gestures, head tracking and bus timing."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duobot.motion import (SERVO_LAYOUT, FaceObservation, Group, MotionConfig, MotionError, ServoChain,
                           load_gestures, record, settle_time, track_target, write_trajectory)

GESTURES = load_gestures()
SPECS = {s.name: s for s in SERVO_LAYOUT}
BY_ID = sorted(SERVO_LAYOUT, key=lambda s: s.id)


def test_layout():
    groups = [s.group for s in SERVO_LAYOUT]
    assert len(SERVO_LAYOUT) == 13 and sorted(s.id for s in SERVO_LAYOUT) == list(range(1, 14))
    assert (groups.count(Group.ARM), groups.count(Group.HEAD), groups.count(Group.TORSO)) == (8, 2, 3)
    assert sorted(s.chain_pos for s in SERVO_LAYOUT) == list(range(1, 14))


def test_ten_gestures_shipped():
    assert len(GESTURES) == 10
    assert "wave" in GESTURES


def test_wave_ends_at_last_keyframe():
    chain = ServoChain()
    end = chain.play_gesture("wave")
    chain.run_until(end + 3000, 10)
    for name, v in GESTURES["wave"].final_pose().items():
        assert abs(chain.servos[name].angle - v) <= 0.5


def test_unknown_gesture_lists_all():
    with pytest.raises(MotionError) as e:
        ServoChain().play_gesture("moonwalk")
    msg = str(e.value)
    assert msg.startswith("NOT_FOUND")
    for name in GESTURES:
        assert name in msg


@pytest.mark.parametrize("name", sorted(GESTURES))
def test_gesture_speed_and_limits(name):
    chain = ServoChain()
    end = chain.play_gesture(name)
    dt = 5.0
    rows = record(chain, end + 1500, dt)
    for (t0, a), (t1, b) in zip(rows, rows[1:]):
        for spec, x, y in zip(BY_ID, a, b):
            assert abs(y - x) / (t1 - t0) * 1000 <= spec.max_speed + 1e-6
            assert spec.lo <= y <= spec.hi


@pytest.mark.parametrize("name", sorted(GESTURES))
def test_halving_dt_changes_little(name):
    rows = []
    for dt in (10.0, 5.0):
        chain = ServoChain()
        end = chain.play_gesture(name)
        rows.append({round(t, 6): v for t, v in record(chain, end + 500, dt)})
    coarse, fine = rows
    for t, a in coarse.items():
        b = fine[t]
        assert max(abs(x - y) for x, y in zip(a, b)) < 0.1


def test_zero_offset_is_equilibrium():
    chain = ServoChain()
    before = {n: s.points[:] for n, s in chain.servos.items()}
    chain.track_face(FaceObservation(0.0, 0.0))
    assert {n: s.points for n, s in chain.servos.items()} == before
    chain.step(100)
    assert all(v == 0.0 for v in chain.angles().values())


def test_split_yaw_kinematics():
    chain = ServoChain()
    assert chain.split_yaw(50) == (35, 15)
    assert chain.split_yaw(-50) == (-35, -15)
    assert chain.split_yaw(20) == (20, 0)


def test_large_step_saturates_neck():
    # one full-gain update commands the whole 50 degree offset
    chain = ServoChain(MotionConfig(gain=1.0))
    sent = chain.track_face(FaceObservation(50.0, 0.0))
    assert (sent["head_z"], sent["abs_z"]) == (35, 15)
    chain.run_until(6000, 10)
    assert chain.servos["head_z"].setpoint(chain.t) == 35
    assert chain.servos["abs_z"].setpoint(chain.t) == 15
    # the lagged angles approach the setpoints asymptotically
    assert abs(chain.servos["head_z"].angle - 35) < 1e-6
    assert abs(chain.servos["abs_z"].angle - 15) < 1e-6


def test_closed_loop_large_step_converges_to_split():
    chain = ServoChain()
    errs = track_target(chain, 50.0, 10000)
    assert chain.servos["head_z"].setpoint(chain.t) == 35
    assert abs(chain.servos["abs_z"].angle - 15) < 1e-3
    assert abs(errs[-1][1]) < 1e-3


def test_six_degree_settle():
    errs = track_target(ServoChain(), 6.0, 3000)
    t = settle_time(errs)
    assert t is not None and 800 <= t <= 1200


def test_rate_limit_arithmetic():
    chain = ServoChain()
    chain.send({"abs_z": 30.0})
    chain.step(chain.delay("abs_z"))
    assert chain.servos["abs_z"].angle == 0.0
    chain.step(100)
    assert chain.servos["abs_z"].angle == pytest.approx(6.0, abs=1e-12)


def test_setpoint_at_current_angle_does_not_move():
    chain = ServoChain()
    chain.send({n: 0.0 for n in chain.servos})
    chain.run_until(500, 10)
    assert all(v == 0.0 for v in chain.angles().values())


def test_bus_delay():
    chain = ServoChain(MotionConfig(hop_ms=1.0))
    first = next(s.name for s in SERVO_LAYOUT if s.chain_pos == 1)
    last = next(s.name for s in SERVO_LAYOUT if s.chain_pos == 13)
    assert chain.delay(last) - chain.delay(first) == 12
    chain.send({first: -10.0, last: -10.0})
    chain.step(1.0)
    assert chain.servos[first].setpoint(chain.t) == -10.0
    chain.step(11.0)
    assert chain.servos[last].setpoint(chain.t) == 0.0
    chain.step(1.0)
    assert chain.servos[last].setpoint(chain.t) == -10.0


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        ServoChain().step(0)


def test_out_of_range_offset_clamped_with_warning():
    chain = ServoChain()
    chain.track_face(FaceObservation(120.0, 0.0))
    assert chain.warnings and chain.gaze_cmd[0] == pytest.approx(0.3 * 90)


def test_bad_gesture_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("gesture g\n100 head_z=10\n100 head_z=20\n")
    with pytest.raises(MotionError):
        load_gestures(p)
    p.write_text("gesture g\n100 head_z=99\n")
    with pytest.raises(MotionError):
        load_gestures(p)


def test_write_trajectory(tmp_path):
    chain = ServoChain()
    chain.play_gesture("wave")
    write_trajectory(tmp_path / "t.csv", record(chain, 100, 50))
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].split(",")[1] == BY_ID[0].name


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(sorted(SPECS)), st.floats(-300, 300), st.floats(1, 200)),
                max_size=20))
def test_angles_stay_within_limits(cmds):
    chain = ServoChain()
    for name, v, dt in cmds:
        chain.send({name: v})
        chain.step(dt)
        for n, s in chain.servos.items():
            assert SPECS[n].lo <= s.angle <= SPECS[n].hi


@settings(max_examples=30, deadline=None)
@given(st.floats(-80, 80), st.floats(-20, 20))
def test_tracking_converges_to_split(yaw, pitch):
    chain = ServoChain()
    track_target(chain, yaw, 8000, target_pitch=pitch)
    neck, torso = chain.split_yaw(yaw)
    assert abs(chain.servos["head_z"].angle - neck) < 0.01
    assert abs(chain.servos["abs_z"].angle - torso) < 0.01
