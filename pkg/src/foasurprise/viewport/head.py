"""Synthetic head-orientation traces driven by scripted audio events."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ambisonics.scene import SceneScript, angles_from_direction
from ..errors import ConfigError, InvalidSceneError, LengthMismatchError

HEAD_RATE = 30.0


def wrap_angle(a):
    """Wrap radians to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass
class HeadTrace:
    """Uniformly sampled yaw/pitch in radians."""

    yaw: np.ndarray
    pitch: np.ndarray
    rate: float = HEAD_RATE

    def __post_init__(self):
        self.yaw = np.asarray(self.yaw, dtype=np.float64)
        self.pitch = np.asarray(self.pitch, dtype=np.float64)
        if self.yaw.shape != self.pitch.shape or self.yaw.ndim != 1 or self.yaw.size == 0:
            raise LengthMismatchError("yaw and pitch must be equal-length non-empty 1-D arrays")
        if self.rate <= 0:
            raise ConfigError("sample rate must be positive")
        if not (np.all(np.isfinite(self.yaw)) and np.all(np.isfinite(self.pitch))):
            raise InvalidSceneError("head trace contains non-finite angles")
        if np.any(np.abs(self.pitch) > np.pi / 2 + 1e-12):
            raise InvalidSceneError("pitch outside [-pi/2, pi/2]")

    def __len__(self) -> int:
        return self.yaw.size

    @property
    def duration(self) -> float:
        return len(self) / self.rate

    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.rate

    def index(self, t: float) -> int:
        """Latest sample at or before time t (clamped to the trace)."""
        return int(np.clip(np.floor(t * self.rate + 1e-9), 0, len(self) - 1))

    def angular_velocity(self) -> np.ndarray:
        """(N, 2) yaw/pitch rates in rad/s by backward differences (first row zero)."""
        d_yaw = np.diff(np.unwrap(self.yaw), prepend=self.yaw[0])
        d_pitch = np.diff(self.pitch, prepend=self.pitch[0])
        return np.stack([d_yaw, d_pitch], axis=1) * self.rate

    def to_dict(self) -> dict:
        return {"rate": self.rate, "yaw": self.yaw.tolist(), "pitch": self.pitch.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> HeadTrace:
        return cls(np.array(data["yaw"]), np.array(data["pitch"]), float(data["rate"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> HeadTrace:
        return cls.from_dict(json.loads(Path(path).read_text()))


def drift(t, amplitude_deg: float = 10.0, period_s: float = 8.0) -> np.ndarray:
    """Baseline slow sinusoidal yaw drift in radians."""
    return np.deg2rad(amplitude_deg) * np.sin(2 * np.pi * np.asarray(t, dtype=np.float64) / period_s)


def synth_head_trace(scene: SceneScript, latency: float = 0.3, speed_deg: float = 120.0,
                     dwell: float = 2.0, rate: float = HEAD_RATE, drift_deg: float = 10.0,
                     drift_period: float = 8.0) -> HeadTrace:
    """Drift, plus a constant-speed turn toward every scripted audio event.

    ``latency`` seconds after an onset the head heads for the event direction
    at ``speed_deg``; after arriving it dwells for ``dwell`` seconds and then
    returns to the drift path at the same speed. A later event pre-empts an
    earlier one.
    """
    if latency < 0:
        raise ConfigError("latency must be non-negative")
    if speed_deg <= 0 or rate <= 0:
        raise ConfigError("turn speed and sample rate must be positive")
    scene.validate()
    n = int(round(scene.duration * rate))
    t = np.arange(n) / rate
    base = drift(t, drift_deg, drift_period)
    step = np.deg2rad(speed_deg) / rate

    starts = [(ev.onset + latency, *np.deg2rad(angles_from_direction(ev.direction))) for ev in scene.sorted_events()]
    yaw = np.empty(n)
    pitch = np.empty(n)
    y, p = base[0], 0.0
    target = None  # (yaw, pitch)
    arrived_at = None
    nxt = 0
    for i in range(n):
        while nxt < len(starts) and starts[nxt][0] <= t[i] + 1e-9:
            target, arrived_at = starts[nxt][1:], None
            nxt += 1
        if target is not None and arrived_at is not None and t[i] - arrived_at >= dwell - 1e-9:
            target = None
        goal = target if target is not None else (base[i], 0.0)
        dy, dp = float(wrap_angle(goal[0] - y)), goal[1] - p
        dist = np.hypot(dy, dp)
        if i > 0:
            if dist <= step:
                y, p = goal[0], goal[1]
            else:
                y, p = y + dy * step / dist, p + dp * step / dist
        if target is not None and arrived_at is None and np.hypot(wrap_angle(target[0] - y), target[1] - p) < 1e-12:
            arrived_at = t[i]
        yaw[i] = wrap_angle(y)
        pitch[i] = p
    return HeadTrace(yaw, np.clip(pitch, -np.pi / 2, np.pi / 2), rate)
