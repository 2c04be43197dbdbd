"""Servo chain simulation: gesture playback, head tracking and bus delay.

Each servo follows its setpoint with a first-order lag of time constant
``tau_ms`` and never moves faster than its ``max_speed``. A setpoint schedule
is piecewise linear in time, and the lag is solved exactly on each linear
piece, so results do not depend on the integration step except through the
rate limit. Setpoints travel down a daisy chain: the servo at chain position
``p`` receives a command ``p * hop_ms`` after it is sent.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

log = logging.getLogger(__name__)


class Group(str, Enum):
    ARM = "ARM"
    HEAD = "HEAD"
    TORSO = "TORSO"


@dataclass(frozen=True)
class ServoSpec:
    id: int
    name: str
    group: Group
    lo: float
    hi: float
    max_speed: float    # deg/s
    chain_pos: int      # 1 = first hop from the controller


# id, name, group, limits, max speed, chain position. The bus runs from the
# controller through the torso and head, then down the left and right arms.
SERVO_LAYOUT: tuple[ServoSpec, ...] = (
    ServoSpec(1, "l_shoulder_y", Group.ARM, -120, 155, 120, 6),
    ServoSpec(2, "l_shoulder_x", Group.ARM, -105, 110, 120, 7),
    ServoSpec(3, "l_arm_z", Group.ARM, -90, 90, 120, 8),
    ServoSpec(4, "l_elbow_y", Group.ARM, -148, 1, 120, 9),
    ServoSpec(5, "r_shoulder_y", Group.ARM, -155, 120, 120, 10),
    ServoSpec(6, "r_shoulder_x", Group.ARM, -110, 105, 120, 11),
    ServoSpec(7, "r_arm_z", Group.ARM, -90, 90, 120, 12),
    ServoSpec(8, "r_elbow_y", Group.ARM, -148, 1, 120, 13),
    ServoSpec(9, "head_z", Group.HEAD, -40, 40, 90, 4),
    ServoSpec(10, "head_y", Group.HEAD, -30, 30, 90, 5),
    ServoSpec(11, "abs_z", Group.TORSO, -60, 60, 60, 1),
    ServoSpec(12, "bust_y", Group.TORSO, -27, 22, 60, 2),
    ServoSpec(13, "bust_x", Group.TORSO, -20, 20, 60, 3),
)
NECK_YAW, NECK_PITCH, TORSO_YAW = "head_z", "head_y", "abs_z"


class MotionError(Exception):
    pass


@dataclass
class MotionConfig:
    tau_ms: float = 250.0
    hop_ms: float = 1.0
    neck_limit: float = 35.0
    torso_limit: float = 60.0
    gain: float = 0.3
    control_period_ms: float = 50.0
    # gesture segments are stretched so setpoints move no faster than this
    # fraction of a servo's speed limit
    speed_margin: float = 0.8


class Servo:
    """One servo with a piecewise-linear setpoint schedule ``[(t_ms, deg), ...]``."""

    def __init__(self, spec: ServoSpec, angle: float = 0.0):
        self.spec = spec
        self.angle = min(max(angle, spec.lo), spec.hi)
        self.points: list[tuple[float, float]] = [(-math.inf, self.angle)]

    def segment(self, t: float) -> tuple[float, float, float]:
        """``(t0, v0, slope)`` of the linear piece in force just after ``t``.

        At a jump (two breakpoints with the same time) the later value wins.
        """
        pts = self.points
        k = len(pts) - 1
        while k > 0 and pts[k][0] > t:
            k -= 1
        t0, v0 = pts[k]
        slope = 0.0
        if k + 1 < len(pts):
            t1, v1 = pts[k + 1]
            if t1 > t0:
                slope = (v1 - v0) / (t1 - t0)
        return t0, v0, slope

    def setpoint(self, t: float) -> float:
        t0, v0, slope = self.segment(t)
        return v0 + slope * (t - t0) if slope else v0

    def command(self, t: float, path: Sequence[tuple[float, float]]) -> None:
        """From time ``t`` on, follow ``path`` (absolute times, non-decreasing).

        The schedule is cut at ``t``; a path that does not start at ``t`` is
        joined to the current setpoint by a ramp.
        """
        clamp = self.clamp
        cur = self.setpoint(t)
        self.points = [p for p in self.points if p[0] < t] + [(t, cur)]
        self.points += [(pt, clamp(v)) for pt, v in path]

    def clamp(self, v: float) -> float:
        return min(max(v, self.spec.lo), self.spec.hi)

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return [p[0] for p in self.points if t0 < p[0] < t1]

    def advance(self, t0: float, t1: float, tau_ms: float) -> None:
        """Integrate over ``[t0, t1]``, splitting at schedule breakpoints."""
        cuts = [t0] + sorted(set(self.breakpoints(t0, t1))) + [t1]
        for a, b in zip(cuts, cuts[1:]):
            self._piece(a, b, tau_ms)
        # drop the breakpoints that can no longer affect the future
        pts = self.points
        k = len(pts) - 1
        while k > 0 and pts[k][0] > t1:
            k -= 1
        if k > 0:
            self.points = pts[k:]

    def _piece(self, a: float, b: float, tau: float) -> None:
        h = b - a
        if h <= 0:
            return
        t0, v0, r = self.segment(a)
        s0 = v0 + r * (a - t0) if r else v0
        s1 = s0 + r * h
        if tau > 0:
            # exact response of a first-order lag to a ramp input
            target = s1 - r * tau + (self.angle - s0 + r * tau) * math.exp(-h / tau)
        else:
            target = s1
        limit = self.spec.max_speed * h / 1000.0
        move = min(max(target - self.angle, -limit), limit)
        self.angle = self.clamp(self.angle + move)


@dataclass
class Keyframe:
    t_ms: float
    targets: dict[str, float]


@dataclass
class GestureScript:
    name: str
    keyframes: list[Keyframe]

    def validate(self, specs: dict[str, ServoSpec]) -> None:
        times = [k.t_ms for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise MotionError(f"gesture {self.name}: keyframe times must strictly increase")
        for k in self.keyframes:
            for name, v in k.targets.items():
                spec = specs.get(name)
                if spec is None:
                    raise MotionError(f"gesture {self.name}: unknown servo {name!r}")
                if not spec.lo <= v <= spec.hi:
                    raise MotionError(f"gesture {self.name}: {name}={v} outside [{spec.lo}, {spec.hi}]")

    def final_pose(self) -> dict[str, float]:
        pose: dict[str, float] = {}
        for k in self.keyframes:
            pose.update(k.targets)
        return pose


def load_gestures(path: str | Path | None = None) -> dict[str, GestureScript]:
    """Parse ``gesture NAME`` headers followed by ``t_ms servo=deg ...`` rows."""
    if path is None:
        text = resources.files("duobot.data").joinpath("gestures.txt").read_text()
    else:
        text = Path(path).read_text()
    out: dict[str, GestureScript] = {}
    cur: GestureScript | None = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "gesture":
            cur = GestureScript(parts[1], [])
            out[cur.name] = cur
            continue
        if cur is None:
            raise MotionError(f"line {n}: keyframe before any gesture header")
        targets = {}
        for item in parts[1:]:
            name, val = item.split("=")
            targets[name] = float(val)
        cur.keyframes.append(Keyframe(float(parts[0]), targets))
    specs = {s.name: s for s in SERVO_LAYOUT}
    for g in out.values():
        g.validate(specs)
    return out


@dataclass
class FaceObservation:
    yaw: float      # horizontal offset of the face from the gaze direction, deg
    pitch: float
    t_ms: float = 0.0


class ServoChain:
    """The 13-servo body on one simulated clock."""

    def __init__(self, config: MotionConfig | None = None,
                 layout: Sequence[ServoSpec] = SERVO_LAYOUT,
                 gestures: dict[str, GestureScript] | None = None):
        self.cfg = config or MotionConfig()
        groups = [s.group for s in layout]
        if (groups.count(Group.ARM), groups.count(Group.HEAD), groups.count(Group.TORSO)) != (8, 2, 3):
            raise MotionError("layout must have 8 ARM, 2 HEAD and 3 TORSO servos")
        self.servos = {s.name: Servo(s) for s in layout}
        self.by_id = {s.id: self.servos[s.name] for s in layout}
        self.gestures = gestures if gestures is not None else load_gestures()
        self.t = 0.0
        self.gaze_cmd = [0.0, 0.0]   # commanded total yaw, neck pitch
        self.tracking = False
        self.warnings: list[str] = []

    # -- bus

    def delay(self, name: str) -> float:
        return self.servos[name].spec.chain_pos * self.cfg.hop_ms

    def send(self, targets: dict[str, float], t: float | None = None) -> None:
        """Broadcast step setpoints; each servo applies its own after the bus delay."""
        t = self.t if t is None else t
        for name, v in targets.items():
            s = self.servos[name]
            td = t + self.delay(name)
            s.command(td, [(td, v)])

    # -- operations

    def play_gesture(self, name: str, t: float | None = None) -> float:
        """Schedule a gesture; returns its (stretched) end time in ms."""
        g = self.gestures.get(name)
        if g is None:
            raise MotionError(f"NOT_FOUND: unknown gesture {name!r}; available: "
                              + ", ".join(sorted(self.gestures)))
        t = self.t if t is None else t
        names = sorted({n for k in g.keyframes for n in k.targets})
        # current setpoints are the implicit first keyframe
        prev = {n: self.servos[n].setpoint(t) for n in names}
        prev_t = 0.0
        times = []
        clock = 0.0
        for k in g.keyframes:
            dur = k.t_ms - prev_t
            for n, v in k.targets.items():
                vmax = self.servos[n].spec.max_speed * self.cfg.speed_margin
                dur = max(dur, abs(v - prev[n]) / vmax * 1000.0)
            clock += dur
            times.append(clock)
            prev_t = k.t_ms
            prev.update(k.targets)
        for n in names:
            d = self.delay(n)
            path = []
            for k, kt in zip(g.keyframes, times):
                if n in k.targets:
                    path.append((t + d + kt, k.targets[n]))
            self.servos[n].command(t + d, path)
        return t + times[-1]

    def split_yaw(self, total: float) -> tuple[float, float]:
        L = self.cfg.neck_limit
        neck = min(max(total, -L), L)
        torso = min(max(total - neck, -self.cfg.torso_limit), self.cfg.torso_limit)
        return neck, torso

    def gaze(self) -> tuple[float, float]:
        s = self.servos
        return s[NECK_YAW].angle + s[TORSO_YAW].angle, s[NECK_PITCH].angle

    def track_face(self, obs: FaceObservation) -> dict[str, float]:
        """One proportional update from a face offset; returns the setpoints sent."""
        yaw, pitch = obs.yaw, obs.pitch
        if not (-90 <= yaw <= 90 and -90 <= pitch <= 90):
            msg = f"face offset ({yaw}, {pitch}) clamped to [-90, 90]"
            log.warning(msg)
            self.warnings.append(msg)
            yaw, pitch = min(max(yaw, -90), 90), min(max(pitch, -90), 90)
        g = self.cfg.gain
        total_lim = self.cfg.neck_limit + self.cfg.torso_limit
        self.gaze_cmd[0] = min(max(self.gaze_cmd[0] + g * yaw, -total_lim), total_lim)
        pspec = self.servos[NECK_PITCH].spec
        self.gaze_cmd[1] = min(max(self.gaze_cmd[1] + g * pitch, pspec.lo), pspec.hi)
        neck, torso = self.split_yaw(self.gaze_cmd[0])
        targets = {NECK_YAW: neck, TORSO_YAW: torso, NECK_PITCH: self.gaze_cmd[1]}
        if yaw != 0 or pitch != 0:
            self.send(targets)
        return targets

    def step(self, dt: float) -> dict[str, float]:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        t1 = self.t + dt
        for s in self.servos.values():
            s.advance(self.t, t1, self.cfg.tau_ms)
        self.t = t1
        return self.angles()

    def run_until(self, t_end: float, dt: float) -> None:
        while self.t < t_end - 1e-9:
            self.step(min(dt, t_end - self.t))

    def angles(self) -> dict[str, float]:
        return {n: s.angle for n, s in self.servos.items()}

    def angle_vector(self) -> list[float]:
        return [self.by_id[i].angle for i in sorted(self.by_id)]


def track_target(chain: ServoChain, target_yaw: float, duration_ms: float, dt: float = 10.0,
                 target_pitch: float = 0.0) -> list[tuple[float, float]]:
    """Closed-loop tracking of a fixed face direction; returns ``(t_ms, yaw error)`` samples.

    The face offset is read from the servo angles every control period
    (no vision latency: servo-only settling).
    """
    cfg = chain.cfg
    out = []
    t0 = chain.t
    next_ctrl = t0
    while chain.t < t0 + duration_ms - 1e-9:
        if chain.t >= next_ctrl - 1e-9:
            gy, gp = chain.gaze()
            chain.track_face(FaceObservation(target_yaw - gy, target_pitch - gp, chain.t))
            next_ctrl += cfg.control_period_ms
        chain.step(min(dt, next_ctrl - chain.t, t0 + duration_ms - chain.t))
        out.append((chain.t - t0, target_yaw - chain.gaze()[0]))
    return out


def settle_time(errors: Sequence[tuple[float, float]], tol: float = 0.5) -> float | None:
    """First time after which ``|error|`` stays below ``tol``; ``None`` if it never does."""
    last_bad = None
    for t, e in errors:
        if abs(e) >= tol:
            last_bad = t
    if last_bad is None:
        return 0.0
    later = [t for t, _ in errors if t > last_bad]
    return later[0] if later else None


def write_trajectory(path: str | Path, rows: Sequence[tuple[float, Sequence[float]]]) -> None:
    """CSV with ``t_ms`` and the 13 angles ordered by servo id."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms"] + [s.name for s in sorted(SERVO_LAYOUT, key=lambda s: s.id)])
        for t, angles in rows:
            w.writerow([f"{t:.3f}"] + [f"{a:.6f}" for a in angles])


def record(chain: ServoChain, duration_ms: float, dt: float) -> list[tuple[float, list[float]]]:
    rows = [(chain.t, chain.angle_vector())]
    end = chain.t + duration_ms
    while chain.t < end - 1e-9:
        chain.step(min(dt, end - chain.t))
        rows.append((chain.t, chain.angle_vector()))
    return rows
