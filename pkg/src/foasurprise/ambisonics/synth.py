"""Randomised scene scripts standing in for recorded 360-video soundtracks."""

from __future__ import annotations

import numpy as np

from .scene import SceneEvent, SceneScript, VisibleObject, direction_from_angles

# Multiples of the 240 Hz frame rate: every 100-sample window of a steady tone is identical.
TONE_FREQUENCIES = (240.0, 480.0, 720.0, 960.0)


def _random_direction(gen: np.random.Generator, azimuth_range=(-180.0, 180.0),
                      elevation_range=(-30.0, 30.0)) -> list[float]:
    az = float(gen.uniform(*azimuth_range))
    el = float(gen.uniform(*elevation_range))
    return direction_from_angles(az, el).tolist()


def training_scene(seed: int, duration: float = 10.0, ambient: float = 0.01) -> SceneScript:
    """A clip mixing silence, sustained tones, tone pips, noise bursts and noise beds."""
    gen = np.random.default_rng(np.random.SeedSequence([seed, 0x7C0]))
    events = []
    t = float(gen.uniform(0.2, 1.0))
    while t < duration - 0.3:
        kind = gen.choice(["sustained", "pip", "burst", "noise"], p=[0.45, 0.15, 0.25, 0.15])
        direction = _random_direction(gen)
        level = float(gen.uniform(0.3, 1.0))
        if kind == "sustained":
            length = float(gen.uniform(1.0, 3.0))
            ev = SceneEvent(t, min(length, duration - t), direction, "tone", level, True,
                            float(gen.choice(TONE_FREQUENCIES)))
        elif kind == "pip":
            ev = SceneEvent(t, 0.2, direction, "tone", level, False, float(gen.choice(TONE_FREQUENCIES)))
        elif kind == "burst":
            ev = SceneEvent(t, 0.05, direction, "burst", level)
        else:
            ev = SceneEvent(t, min(float(gen.uniform(0.3, 1.0)), duration - t), direction, "noise", 0.5 * level)
        events.append(ev)
        t += ev.duration + float(gen.uniform(0.3, 1.5))
    return SceneScript(duration, ambient, events, [], seed).validate()


def sustained_tone_scene(seed: int, onset: float = 1.0, hold: float = 3.0, duration: float = 5.0,
                         azimuth: float | None = None, level: float | None = None,
                         ambient: float = 0.01) -> SceneScript:
    """Silence, then a single tone held for ``hold`` seconds."""
    gen = np.random.default_rng(np.random.SeedSequence([seed, 0x5057]))
    az = float(gen.uniform(-180, 180)) if azimuth is None else azimuth
    lvl = float(gen.uniform(0.5, 1.0)) if level is None else level
    freq = float(gen.choice(TONE_FREQUENCIES))
    ev = SceneEvent(onset, hold, direction_from_angles(az).tolist(), "tone", lvl, True, freq)
    return SceneScript(duration, ambient, [ev], [], seed).validate()


def session_scene(seed: int, duration: float = 20.0, n_events: int = 2, rear: bool = True,
                  fov_deg: float = 100.0, ambient: float = 0.01) -> SceneScript:
    """Streaming-session scene: front visual objects plus off-screen audio events.

    Rear events come from azimuths at least ``fov/2 + 30`` degrees from the
    front. Each audio event also spawns a visible object at its direction so
    that it becomes visually salient once it enters the field of view.
    """
    gen = np.random.default_rng(np.random.SeedSequence([seed, 0x5E55]))
    # front content sits where the idle viewer looks (the head drifts within +-10 degrees)
    objects = [VisibleObject(direction_from_angles(float(gen.uniform(-15, 15)),
                                                   float(gen.uniform(-5, 5))).tolist(),
                             float(gen.uniform(0.5, 1.0)))
               for _ in range(3)]
    events = []
    spacing = duration / n_events
    min_off = fov_deg / 2.0 + 30.0
    for i in range(n_events):
        onset = i * spacing + float(gen.uniform(2.0, max(2.0, spacing - 6.0)))
        if rear:
            az = float(gen.uniform(min_off, 360.0 - min_off))
        else:
            az = float(gen.uniform(-fov_deg / 4.0, fov_deg / 4.0))
        az = (az + 180.0) % 360.0 - 180.0
        direction = direction_from_angles(az, 0.0).tolist()
        if gen.random() < 0.5:
            ev = SceneEvent(onset, 1.5, direction, "tone", float(gen.uniform(0.6, 1.0)), True,
                            float(gen.choice(TONE_FREQUENCIES)))
        else:
            ev = SceneEvent(onset, 0.05, direction, "burst", float(gen.uniform(0.6, 1.0)))
        events.append(ev)
        objects.append(VisibleObject(direction, 2.0, onset, onset + 4.0))
    return SceneScript(duration, ambient, events, objects, seed).validate()
