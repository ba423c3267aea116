"""Segment-level streaming simulation, KPIs and gate tuning."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..ambisonics.scene import angles_from_direction
from ..errors import ConfigError, LengthMismatchError
from .head import HeadTrace
from .predictors import (GateParams, SessionInputs, audio_map, fuse, gate_signal, in_fov, predict_viewport,
                         visual_map)
from .tiling import TilingConfig, tile_overlap_ratio

SEGMENT_S = 1.0
COVERAGE = 0.9
EPISODE_S = 6.0  # an event's reaction (latency, turn, dwell, return) is over by then
REACTION_S = 2.0  # latency + a 180 degree turn at the default speed (1.8 s), rounded up


@dataclass
class SegmentRecord:
    time: float
    decision_time: float
    kind: str  # "surprise", "general" or "other"
    predicted: tuple[int, ...]
    actual: tuple[int, ...]
    tor: float
    mbits: float
    wasted_mbits: float
    viewed: int
    viewed_high: int


@dataclass
class SessionMetrics:
    tor_general: float | None
    tor_surprise: float | None
    bitrate_mbps: float
    wasted_bw_ratio: float
    viewed_quality_ratio: float
    n_general: int
    n_surprise: int
    strategy: str = ""
    segments: list[SegmentRecord] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("segments")
        return d

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def segments_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "kind", "predicted_tiles", "actual_tiles", "tor", "mbits", "wasted_mbits"])
        for r in self.segments:
            writer.writerow([repr(r.time), r.kind, " ".join(map(str, r.predicted)), " ".join(map(str, r.actual)),
                             repr(r.tor), repr(r.mbits), repr(r.wasted_mbits)])
        return buf.getvalue()

    def save(self, report_path: str | Path, csv_path: str | Path) -> None:
        Path(report_path).write_text(self.to_json())
        Path(csv_path).write_text(self.segments_csv())


def qualifying_onsets(inputs: SessionInputs, tiling: TilingConfig) -> list[float]:
    """Onsets of scripted events whose source lies outside the field of view at onset."""
    head = inputs.head
    out = []
    for ev in inputs.scene.sorted_events():
        i = head.index(ev.onset)
        view = (float(np.rad2deg(head.yaw[i])), float(np.rad2deg(head.pitch[i])))
        if not in_fov(view, angles_from_direction(ev.direction), tiling):
            out.append(ev.onset)
    return out


def classify_segment(decision_time: float, end: float, onsets_all: Sequence[float],
                     onsets_surprise: Sequence[float], reaction: float = REACTION_S,
                     episode: float = EPISODE_S) -> str:
    """Window kind of one prefetch decision.

    ``surprise``: decided within ``reaction`` seconds after an out-of-view
    onset, i.e. while the viewer is reacting to it; ``general``: no event
    episode overlaps the span from decision to segment end; otherwise
    ``other``.
    """
    for o in onsets_surprise:
        if 0.0 <= decision_time - o < reaction - 1e-9:
            return "surprise"
    for o in onsets_all:
        if decision_time < o + episode and o < end:
            return "other"
    return "general"


def segment_times(duration: float, horizon: float, segment: float = SEGMENT_S) -> list[float]:
    """Start times of every full segment whose decision time is non-negative."""
    first = math.ceil(horizon / segment - 1e-9)
    last = math.floor(duration / segment + 1e-9)
    return [k * segment for k in range(first, last)]


def _viewed_sets(head: HeadTrace, start: float, segment: float, tiling: TilingConfig) -> list[frozenset[int]]:
    lo = head.index(start)
    hi = min(len(head), int(round((start + segment) * head.rate)))
    return [tiling.viewport_tiles(float(np.rad2deg(head.yaw[i])), float(np.rad2deg(head.pitch[i])))
            for i in range(lo, max(hi, lo + 1))]


def simulate_session(inputs: SessionInputs, strategy: str, tiling: TilingConfig = TilingConfig(),
                     horizon: float = 1.0, gate: GateParams = GateParams(),
                     segment: float = SEGMENT_S, reaction: float = REACTION_S) -> SessionMetrics:
    """Prefetch every segment ``horizon`` seconds ahead and score it against the true viewport."""
    scene, head = inputs.scene, inputs.head
    if head.duration + 1e-9 < scene.duration:
        raise LengthMismatchError(f"head trace ({head.duration:.3f} s) shorter than scene ({scene.duration:.3f} s)")
    if horizon < 0 or segment <= 0:
        raise ConfigError("horizon must be >= 0 and segment length > 0")
    onsets_all = [ev.onset for ev in scene.sorted_events()]
    onsets_surprise = qualifying_onsets(inputs, tiling)
    records = []
    for start in segment_times(scene.duration, horizon, segment):
        t_dec = start - horizon
        p = predict_viewport(strategy, inputs, t_dec, horizon, tiling, gate)
        predicted = p.top_mass_tiles(COVERAGE)
        records.append(_score_segment(predicted, head, start, t_dec, segment, tiling,
                                      classify_segment(t_dec, start + segment, onsets_all, onsets_surprise, reaction)))
    return summarize(records, tiling, strategy)


def _score_segment(predicted: frozenset[int], head: HeadTrace, start: float, t_dec: float, segment: float,
                   tiling: TilingConfig, kind: str) -> SegmentRecord:
    viewed = _viewed_sets(head, start, segment, tiling)
    actual = frozenset().union(*viewed)
    n_pred = len(predicted)
    mbits = (n_pred * tiling.high_mbps + (tiling.n_tiles - n_pred) * tiling.low_mbps) * segment
    wasted = len(predicted - actual) * tiling.high_mbps * segment
    return SegmentRecord(start, t_dec, kind, tuple(sorted(predicted)), tuple(sorted(actual)),
                         tile_overlap_ratio(predicted, actual), mbits, wasted,
                         sum(len(v) for v in viewed), sum(len(v & predicted) for v in viewed))


def summarize(records: Sequence[SegmentRecord], tiling: TilingConfig, strategy: str = "",
              segment: float = SEGMENT_S) -> SessionMetrics:
    """Pool segment records (possibly from many sessions) into one set of metrics."""
    if not records:
        raise ConfigError("no complete segments to score")

    def mean_tor(kind):
        vals = [r.tor for r in records if r.kind == kind]
        return (float(np.mean(vals)) if vals else None), len(vals)

    tor_g, n_g = mean_tor("general")
    tor_s, n_s = mean_tor("surprise")
    total = sum(r.mbits for r in records)
    viewed = sum(r.viewed for r in records)
    return SessionMetrics(
        tor_general=tor_g, tor_surprise=tor_s,
        bitrate_mbps=total / (len(records) * segment),
        wasted_bw_ratio=sum(r.wasted_mbits for r in records) / total,
        viewed_quality_ratio=sum(r.viewed_high for r in records) / viewed if viewed else 0.0,
        n_general=n_g, n_surprise=n_s, strategy=strategy, segments=list(records))


def pool_metrics(metrics: Iterable[SessionMetrics], tiling: TilingConfig = TilingConfig()) -> SessionMetrics:
    metrics = list(metrics)
    strategy = metrics[0].strategy if metrics else ""
    return summarize([r for m in metrics for r in m.segments], tiling, strategy)


def tune_gate(sessions: Sequence[SessionInputs], grid: Sequence[tuple[float, float]] | Sequence[GateParams],
              tiling: TilingConfig = TilingConfig(), horizon: float = 1.0,
              segment: float = SEGMENT_S, reaction: float = REACTION_S) -> GateParams:
    """Grid point maximising pooled surprise-window TOR of the hybrid predictor.

    Ties go to the smaller ``|lam|`` and then the smaller ``|beta|``.
    """
    grid = [g if isinstance(g, GateParams) else GateParams(*g) for g in grid]
    if not grid:
        raise ConfigError("gate grid is empty")
    if not sessions:
        raise ConfigError("no validation sessions")
    # the gate only changes the blend, so visual/audio maps and actual tiles are computed once
    cases = []
    for inputs in sessions:
        if inputs.trace is None:
            raise ConfigError("gate tuning needs surprise traces")
        onsets_all = [ev.onset for ev in inputs.scene.sorted_events()]
        onsets_surprise = qualifying_onsets(inputs, tiling)
        for start in segment_times(inputs.scene.duration, horizon, segment):
            t_dec = start - horizon
            if classify_segment(t_dec, start + segment, onsets_all, onsets_surprise, reaction) != "surprise":
                continue
            p_visual = visual_map(inputs, t_dec, tiling)
            p_audio = audio_map(inputs, t_dec, tiling)
            actual = frozenset().union(*_viewed_sets(inputs.head, start, segment, tiling))
            cases.append((p_visual, p_audio, gate_signal(inputs.trace, t_dec), actual))

    def score(g: GateParams) -> float:
        if not cases:
            return 0.0
        tors = []
        for p_visual, p_audio, s, actual in cases:
            p = p_visual if p_audio is None else fuse(p_visual, p_audio, s, g)
            tors.append(tile_overlap_ratio(p.top_mass_tiles(COVERAGE), actual))
        return float(np.mean(tors))

    scored = [(-score(g), abs(g.lam), abs(g.beta), i) for i, g in enumerate(grid)]
    return grid[min(scored)[3]]
