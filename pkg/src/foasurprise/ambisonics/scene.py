"""Scripted synthetic scenes and their B-format rendering."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from ..errors import InvalidSceneError
from .clip import DEFAULT_SAMPLE_RATE, AmbisonicsClip

SourceKind = Literal["tone", "burst", "noise"]
KINDS = ("tone", "burst", "noise")

RAMP_SECONDS = 0.005
BURST_SECONDS = 0.050
PIP_SECONDS = 0.200


def direction_from_angles(azimuth_deg: float, elevation_deg: float = 0.0) -> np.ndarray:
    """Unit vector for azimuth (counter-clockwise from +x) and elevation (up from the xy-plane)."""
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def angles_from_direction(direction) -> tuple[float, float]:
    x, y, z = np.asarray(direction, dtype=np.float64)
    azimuth = math.degrees(math.atan2(y, x))
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, z / math.sqrt(x * x + y * y + z * z)))))
    return azimuth, elevation


@dataclass
class SceneEvent:
    onset: float
    duration: float
    direction: list[float]
    kind: SourceKind = "tone"
    level: float = 1.0
    sustained: bool = False
    frequency: float = 480.0

    @property
    def azimuth(self) -> float:
        return angles_from_direction(self.direction)[0]


@dataclass
class VisibleObject:
    direction: list[float]
    saliency: float = 1.0
    onset: float = 0.0
    offset: float | None = None

    def active(self, t: float) -> bool:
        return self.onset <= t and (self.offset is None or t < self.offset)


@dataclass
class SceneScript:
    duration: float
    ambient: float = 0.0
    events: list[SceneEvent] = field(default_factory=list)
    visible_objects: list[VisibleObject] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> SceneScript:
        if not self.duration > 0:
            raise InvalidSceneError(f"duration must be positive, got {self.duration}")
        if self.ambient < 0:
            raise InvalidSceneError("ambient level must be non-negative")
        for i, ev in enumerate(self.events):
            if not 0.0 <= ev.onset < self.duration:
                raise InvalidSceneError(f"event {i}: onset {ev.onset} outside [0, {self.duration})")
            if not ev.duration > 0:
                raise InvalidSceneError(f"event {i}: duration must be positive")
            if ev.level < 0:
                raise InvalidSceneError(f"event {i}: negative level")
            if ev.kind not in KINDS:
                raise InvalidSceneError(f"event {i}: unknown source kind {ev.kind!r}")
            _check_unit(ev.direction, f"event {i}")
        for i, obj in enumerate(self.visible_objects):
            _check_unit(obj.direction, f"visible object {i}")
            if obj.saliency < 0:
                raise InvalidSceneError(f"visible object {i}: negative saliency")
        return self

    def sorted_events(self) -> list[SceneEvent]:
        return sorted(self.events, key=lambda e: e.onset)

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SceneScript:
        try:
            events = [SceneEvent(**e) for e in data.get("events", [])]
            objects = [VisibleObject(**o) for o in data.get("visible_objects", [])]
            script = cls(duration=float(data["duration"]), ambient=float(data.get("ambient", 0.0)),
                         events=events, visible_objects=objects, seed=int(data.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise InvalidSceneError(f"malformed scene script: {exc}") from exc
        return script.validate()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> SceneScript:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_unit(direction, what: str) -> None:
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,) or not np.isfinite(d).all():
        raise InvalidSceneError(f"{what}: direction must be a finite 3-vector")
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise InvalidSceneError(f"{what}: direction is not unit-norm")


def encode_source(signal: np.ndarray, direction, sample_rate: int = DEFAULT_SAMPLE_RATE) -> AmbisonicsClip:
    """Plane-wave encode a mono ``signal`` arriving from unit ``direction``."""
    _check_unit(direction, "source")
    signal = np.asarray(signal, dtype=np.float64)
    u = np.asarray(direction, dtype=np.float64)
    samples = np.empty((4, signal.size))
    samples[0] = signal
    samples[1:] = u[:, None] * signal[None, :]
    return AmbisonicsClip(samples, sample_rate)


def _ramp(n: int, sample_rate: int) -> np.ndarray:
    """Raised-cosine fade-in/out envelope of length ``n``."""
    env = np.ones(n)
    r = min(int(round(RAMP_SECONDS * sample_rate)), n // 2)
    if r > 0:
        rise = 0.5 - 0.5 * np.cos(np.pi * (np.arange(r) + 0.5) / r)
        env[:r] = rise
        env[n - r:] = rise[::-1]
    return env


def event_signal(event: SceneEvent, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Mono waveform of one event, starting at its onset."""
    if event.kind == "tone":
        length = event.duration if event.sustained else min(event.duration, PIP_SECONDS)
        n = max(1, int(round(length * sample_rate)))
        t = np.arange(n) / sample_rate
        wave = np.sin(2.0 * np.pi * event.frequency * t)
    elif event.kind == "burst":
        n = max(1, int(round(min(event.duration, BURST_SECONDS) * sample_rate)))
        wave = rng.standard_normal(n)
    else:
        n = max(1, int(round(event.duration * sample_rate)))
        wave = rng.standard_normal(n)
    return event.level * wave * _ramp(n, sample_rate)


def render_scene(script: SceneScript, sample_rate: int = DEFAULT_SAMPLE_RATE) -> AmbisonicsClip:
    """Render every scripted point source plus ambient noise (W only)."""
    script.validate()
    n = max(1, int(round(script.duration * sample_rate)))
    samples = np.zeros((4, n))
    for event in script.events:
        start = int(round(event.onset * sample_rate))
        # keyed on the event itself so that merging scripts keeps rendering linear
        gen = np.random.default_rng(np.random.SeedSequence([script.seed, start, KINDS.index(event.kind)]))
        wave = event_signal(event, sample_rate, gen)
        stop = min(n, start + wave.size)
        if stop <= start:
            continue
        u = np.asarray(event.direction, dtype=np.float64)
        chunk = wave[: stop - start]
        samples[0, start:stop] += chunk
        samples[1:, start:stop] += u[:, None] * chunk[None, :]
    if script.ambient > 0:
        gen = np.random.default_rng(np.random.SeedSequence([script.seed, 0xA3B1E7]))
        samples[0] += script.ambient * gen.standard_normal(n)
    return AmbisonicsClip(samples, sample_rate)
