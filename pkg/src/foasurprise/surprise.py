"""Prediction-error surprise, event detection with decay fitting, and direction attribution."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ambisonics.clip import AmbisonicsClip, intensity_direction
from .ambisonics.scene import angles_from_direction
from .encoder import split_latent
from .errors import ConfigError, InvalidDimensionError, InvalidWindowError, TraceTooShortError
from .model import SurpriseModel

MIN_TRACE = 10


@dataclass(frozen=True)
class DetectionPolicy:
    """Eventization rule: S above mean + ``k_sigma`` std of a trailing window.

    ``min_ratio`` additionally requires S to exceed that multiple of the
    trailing mean, which keeps heavy-tailed background fluctuations from
    opening events; ``min_ratio = 0`` gives the bare mean + k std rule.
    """

    window_s: float = 1.0
    k_sigma: float = 2.0
    min_ratio: float = 5.0
    refractory_s: float = 0.25
    warmup_s: float = 0.25
    decay_s: float = 0.5
    min_history: int = 10


@dataclass
class SurpriseEvent:
    onset_frame: int
    peak_frame: int
    peak: float
    direction: np.ndarray | None = None
    half_life_s: float | None = None

    def to_dict(self, frame_rate: float) -> dict:
        if self.direction is None:
            az = el = None
        else:
            az, el = angles_from_direction(self.direction)
        return {"onset_s": self.onset_frame / frame_rate, "peak": self.peak,
                "azimuth_deg": az, "elevation_deg": el, "half_life_s": self.half_life_s}


@dataclass
class SurpriseTrace:
    """S(t) for every predicted frame; ``s[i]`` scores the prediction of frame ``i + 1``."""

    frame_rate: float
    s: np.ndarray
    running_mean: np.ndarray = field(default=None, repr=False)
    running_std: np.ndarray = field(default=None, repr=False)
    events: list[SurpriseEvent] = field(default_factory=list)
    errors: np.ndarray | None = field(default=None, repr=False)  # (T-1, D) signed prediction errors
    latents: np.ndarray | None = field(default=None, repr=False)  # (T, D)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        if np.any(self.s < 0) or not np.all(np.isfinite(self.s)):
            raise InvalidDimensionError("surprise values must be finite and non-negative")

    def __len__(self) -> int:
        return self.s.size

    def frames(self) -> np.ndarray:
        return np.arange(1, self.s.size + 1)

    def times(self) -> np.ndarray:
        return self.frames() / self.frame_rate

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame", "time_s", "S"])
        for f, t, v in zip(self.frames(), self.times(), self.s):
            writer.writerow([int(f), repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def events_json(self) -> str:
        return json.dumps([e.to_dict(self.frame_rate) for e in self.events], indent=2)

    def save(self, csv_path: str | Path, events_path: str | Path) -> None:
        Path(csv_path).write_text(self.to_csv())
        Path(events_path).write_text(self.events_json())


def surprise_score(z_hat, z) -> float:
    """Mean squared distance between predicted and observed latent."""
    z_hat, z = np.asarray(z_hat, dtype=np.float64), np.asarray(z, dtype=np.float64)
    if z_hat.shape != z.shape:
        raise InvalidDimensionError(f"prediction {z_hat.shape} vs latent {z.shape}")
    return float(np.mean((z_hat - z) ** 2))


def surprise_trace(clip: AmbisonicsClip, model: SurpriseModel) -> SurpriseTrace:
    """Score every compressed frame after the first with the one-step prediction error."""
    if clip.sample_rate != model.config.sample_rate:
        raise ConfigError(f"clip sample rate {clip.sample_rate} != model rate {model.config.sample_rate}")
    prepared = model.prepare(clip)
    if prepared.n_frames < 2:
        raise TraceTooShortError("clip is shorter than two compressed frames")
    z, h = model.run(prepared)
    z_hat = model.predict_next(z, h)
    err = z_hat - z[1:]
    s = np.mean(err ** 2, axis=1)
    return SurpriseTrace(model.frame_rate(), s, errors=err, latents=z)


def running_statistics(s: np.ndarray, window: int, warmup: int, min_history: int = MIN_TRACE
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Mean/std of the trailing ``window`` values strictly before each frame.

    Frames inside the warm-up are excluded from the statistics; frames with
    fewer than ``min_history`` usable predecessors get NaN.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.size
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    csum = np.concatenate([[0.0], np.cumsum(s)])
    csq = np.concatenate([[0.0], np.cumsum(s * s)])
    for t in range(n):
        lo = max(warmup, t - window)
        count = t - lo
        if count < min_history:
            continue
        m = (csum[t] - csum[lo]) / count
        var = (csq[t] - csq[lo]) / count - m * m
        mean[t] = m
        std[t] = np.sqrt(max(var, 0.0))
    return mean, std


def fit_half_life(values: np.ndarray, frame_rate: float) -> float | None:
    """Least-squares exponential decay fit on log S; ``None`` when S does not decay."""
    values = np.asarray(values, dtype=np.float64)
    keep = values > 0
    if keep.sum() < 3:
        return None
    t = np.arange(values.size)[keep] / frame_rate
    slope = np.polyfit(t, np.log(values[keep]), 1)[0]
    if not slope < 0:
        return None
    return float(np.log(2.0) / -slope)


def detect_events(trace: SurpriseTrace, policy: DetectionPolicy = DetectionPolicy()) -> list[SurpriseEvent]:
    """Open an event when S crosses the trailing mean + k std; one event per refractory period."""
    s = trace.s
    if s.size < MIN_TRACE:
        raise TraceTooShortError(f"need at least {MIN_TRACE} frames, got {s.size}")
    rate = trace.frame_rate
    window = max(1, round(policy.window_s * rate))
    refractory = max(1, round(policy.refractory_s * rate))
    decay = max(3, round(policy.decay_s * rate))
    warmup = round(policy.warmup_s * rate)
    mean, std = running_statistics(s, window, warmup, min(policy.min_history, max(1, s.size // 2)))
    trace.running_mean, trace.running_std = mean, std

    events: list[SurpriseEvent] = []
    t = warmup
    while t < s.size:
        thr = max(mean[t] + policy.k_sigma * std[t], policy.min_ratio * mean[t])
        if np.isfinite(thr) and s[t] > thr:
            stop = min(s.size, t + refractory)
            peak_idx = t + int(np.argmax(s[t:stop]))
            tail = s[peak_idx: peak_idx + decay + 1]
            events.append(SurpriseEvent(onset_frame=t + 1, peak_frame=peak_idx + 1, peak=float(s[peak_idx]),
                                        half_life_s=fit_half_life(tail, rate)))
            t = stop
        else:
            t += 1
    trace.events = events
    return events


def estimate_direction(clip: AmbisonicsClip, window: tuple[int, int], mode: str = "intensity",
                       trace: SurpriseTrace | None = None, model: SurpriseModel | None = None
                       ) -> np.ndarray | None:
    """Direction of an event spanning compressed frames ``[start, stop)``.

    ``intensity`` averages the acoustic intensity over the window's samples.
    ``latent`` weights the 16 pooled vector channels of z by their squared
    prediction error and normalises the sum. Both return ``None`` when there
    is no usable direction.
    """
    start, stop = (int(v) for v in window)
    if stop <= start or start < 0:
        raise InvalidWindowError(f"invalid event window [{start}, {stop})")
    if mode == "intensity":
        hop = model.compressor.window if model is not None else 100
        if stop * hop > clip.frames:
            raise InvalidWindowError(f"window [{start}, {stop}) exceeds the clip")
        return intensity_direction(clip, (start * hop, stop * hop))
    if mode != "latent":
        raise ConfigError(f"unknown direction mode {mode!r}")
    if trace is None:
        if model is None:
            raise ConfigError("latent mode needs a trace or a model")
        trace = surprise_trace(clip, model)
    # trace rows i score frame i + 1
    lo, hi = max(start, 1), min(stop, len(trace) + 1)
    if hi <= lo:
        raise InvalidWindowError(f"window [{start}, {stop}) has no scored frames")
    _, vec = split_latent(trace.latents[lo:hi])  # (n, 16, 3)
    _, err_vec = split_latent(trace.errors[lo - 1: hi - 1])
    weights = np.sum(err_vec ** 2, axis=-1)  # (n, 16)
    total = np.einsum("nc,ncx->x", weights, vec)
    norm = float(np.linalg.norm(total))
    if norm < 1e-12:
        return None
    return total / norm


def score_clip(clip: AmbisonicsClip, model: SurpriseModel, policy: DetectionPolicy = DetectionPolicy(),
               mode: str = "intensity") -> SurpriseTrace:
    """Trace, events and a direction per event (over the event's refractory span)."""
    trace = surprise_trace(clip, model)
    detect_events(trace, policy)
    span = max(1, round(policy.refractory_s * trace.frame_rate))
    n_frames = len(trace) + 1
    for ev in trace.events:
        window = (ev.onset_frame, min(n_frames, ev.onset_frame + span))
        ev.direction = estimate_direction(clip, window, mode, trace, model)
    return trace
