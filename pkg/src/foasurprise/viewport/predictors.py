"""Viewport predictors: inertia, FOV-limited visual saliency, and the surprise-gated hybrid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..ambisonics.scene import SceneScript, angles_from_direction
from ..errors import ConfigError, UnknownStrategyError, UnnormalizedMapError
from ..surprise import SurpriseTrace
from .head import HeadTrace
from .tiling import TileProbabilityMap, TilingConfig

STRATEGIES = ("inertia", "visual", "hybrid")
TEST_STRATEGIES = ("oracle", "adversarial")
INERTIA_HISTORY_S = 1.0
GATE_HOLD_S = 1.0
AUDIO_MEMORY_S = 2.0  # an event steers the audio map only while the viewer may still be reacting


@dataclass(frozen=True)
class GateParams:
    """alpha = sigmoid(lam * S + beta)."""

    lam: float = 500.0
    beta: float = -3.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.beta)):
            raise ConfigError("gate parameters must be finite")

    def alpha(self, s: float) -> float:
        x = self.lam * s + self.beta
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)


@dataclass
class SessionInputs:
    """Everything a predictor may consult for one session."""

    scene: SceneScript
    head: HeadTrace
    trace: SurpriseTrace | None = None


def fuse(p_visual: TileProbabilityMap, p_audio: TileProbabilityMap, s: float,
         gate: GateParams = GateParams()) -> TileProbabilityMap:
    """Convex blend ``(1 - alpha) * P_visual + alpha * P_audio``."""
    # plain arrays are validated (and rejected if unnormalised) by the map constructor
    p_visual, p_audio = (p if isinstance(p, TileProbabilityMap) else TileProbabilityMap(p) for p in (p_visual, p_audio))
    if p_visual.weights.shape != p_audio.weights.shape:
        raise UnnormalizedMapError("maps cover different tilings")
    a = gate.alpha(s)
    w = (1.0 - a) * p_visual.weights + a * p_audio.weights
    return TileProbabilityMap(w / w.sum())


def _view_deg(head: HeadTrace, i: int) -> tuple[float, float]:
    return float(np.rad2deg(head.yaw[i])), float(np.rad2deg(head.pitch[i]))


def in_fov(view: tuple[float, float], direction_deg: tuple[float, float], tiling: TilingConfig) -> bool:
    dyaw = abs((direction_deg[0] - view[0] + 180.0) % 360.0 - 180.0)
    return dyaw <= tiling.fov_deg[0] / 2.0 and abs(direction_deg[1] - view[1]) <= tiling.fov_deg[1] / 2.0


def inertia_map(head: HeadTrace, t: float, horizon: float, tiling: TilingConfig) -> TileProbabilityMap:
    """Extrapolate yaw/pitch at the angular velocity fitted over the last second of history."""
    i = head.index(t)
    i0 = max(0, i - int(round(INERTIA_HISTORY_S * head.rate)))
    yaw = np.unwrap(head.yaw[i0: i + 1])
    pitch = head.pitch[i0: i + 1]
    if yaw.size >= 2:
        ts = np.arange(yaw.size) / head.rate
        v_yaw, v_pitch = np.polyfit(ts, yaw, 1)[0], np.polyfit(ts, pitch, 1)[0]
    else:
        v_yaw = v_pitch = 0.0
    y = np.rad2deg(yaw[-1] + v_yaw * horizon)
    p = float(np.clip(np.rad2deg(pitch[-1] + v_pitch * horizon), -90.0, 90.0))
    return TileProbabilityMap.centered(tiling, float(y), p)


def visual_map(inputs: SessionInputs, t: float, tiling: TilingConfig) -> TileProbabilityMap:
    """Saliency of scripted objects currently inside the field of view, confined to its tiles."""
    view = _view_deg(inputs.head, inputs.head.index(t))
    mask = np.zeros(tiling.n_tiles)
    mask[list(tiling.viewport_tiles(*view))] = 1.0
    weights = np.zeros(tiling.n_tiles)
    for obj in inputs.scene.visible_objects:
        if not obj.active(t):
            continue
        direction = angles_from_direction(obj.direction)
        if in_fov(view, direction, tiling):
            weights += obj.saliency * tiling.kernel(*direction)
    fallback = tiling.kernel(*view) * mask
    return TileProbabilityMap.from_weights(weights * mask, fallback=fallback)


def gate_signal(trace: SurpriseTrace | None, t: float, hold: float = GATE_HOLD_S) -> float:
    """Peak surprise over the trailing ``hold`` seconds (0 without a trace)."""
    if trace is None or len(trace) == 0:
        return 0.0
    times = trace.times()
    sel = (times <= t + 1e-9) & (times > t - hold)
    return float(trace.s[sel].max()) if sel.any() else 0.0


def latest_event_direction(trace: SurpriseTrace | None, t: float, memory: float = AUDIO_MEMORY_S
                           ) -> tuple[float, float] | None:
    """(azimuth, elevation) of the most recent detected event with a direction, at most ``memory`` s old."""
    if trace is None:
        return None
    for ev in reversed(trace.events):
        onset = ev.onset_frame / trace.frame_rate
        if onset > t + 1e-9 or ev.direction is None:
            continue
        return angles_from_direction(ev.direction) if t - onset < memory else None
    return None


def audio_map(inputs: SessionInputs, t: float, tiling: TilingConfig) -> TileProbabilityMap | None:
    direction = latest_event_direction(inputs.trace, t)
    return None if direction is None else TileProbabilityMap.centered(tiling, *direction)


def hybrid_map(inputs: SessionInputs, t: float, tiling: TilingConfig, gate: GateParams) -> TileProbabilityMap:
    p_visual = visual_map(inputs, t, tiling)
    p_audio = audio_map(inputs, t, tiling)
    if p_audio is None:
        return p_visual
    return fuse(p_visual, p_audio, gate_signal(inputs.trace, t), gate)


def _future_samples(head: HeadTrace, start: float, length: float) -> np.ndarray:
    lo = head.index(start)
    hi = max(lo + 1, min(len(head), int(np.ceil((start + length) * head.rate - 1e-9))))
    return np.arange(lo, hi)


def oracle_map(head: HeadTrace, t: float, horizon: float, tiling: TilingConfig,
               segment: float = 1.0) -> TileProbabilityMap:
    """Tile weights proportional to how long each tile is actually viewed in the target segment."""
    weights = np.zeros(tiling.n_tiles)
    for i in _future_samples(head, t + horizon, segment):
        weights[list(tiling.viewport_tiles(*_view_deg(head, i)))] += 1.0
    return TileProbabilityMap.from_weights(weights)


def adversarial_map(head: HeadTrace, t: float, horizon: float, tiling: TilingConfig,
                    segment: float = 1.0) -> TileProbabilityMap:
    """All mass on the tile antipodal to the true viewport in the middle of the target segment."""
    idx = _future_samples(head, t + horizon, segment)
    yaw, pitch = _view_deg(head, int(idx[idx.size // 2]))
    weights = np.zeros(tiling.n_tiles)
    weights[tiling.tile_of(yaw + 180.0, -pitch)] = 1.0
    return TileProbabilityMap(weights)


def predict_viewport(strategy: str, inputs: SessionInputs, t: float, horizon: float = 1.0,
                     tiling: TilingConfig = TilingConfig(), gate: GateParams = GateParams()) -> TileProbabilityMap:
    """Tile probabilities for the segment starting ``horizon`` seconds after decision time ``t``."""
    if len(inputs.head) == 0 or t < 0:
        raise ConfigError("prediction needs a non-empty head history")
    if strategy == "inertia":
        return inertia_map(inputs.head, t, horizon, tiling)
    if strategy == "visual":
        return visual_map(inputs, t, tiling)
    if strategy == "hybrid":
        if inputs.trace is None:
            raise ConfigError("the hybrid strategy needs a surprise trace")
        return hybrid_map(inputs, t, tiling, gate)
    if strategy == "oracle":
        return oracle_map(inputs.head, t, horizon, tiling)
    if strategy == "adversarial":
        return adversarial_map(inputs.head, t, horizon, tiling)
    raise UnknownStrategyError(f"unknown strategy {strategy!r}")
