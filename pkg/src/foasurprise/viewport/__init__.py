"""Tile-based 360-video streaming simulator with audio-visual viewport prediction."""

from .head import HEAD_RATE, HeadTrace, drift, synth_head_trace, wrap_angle
from .predictors import (STRATEGIES, GateParams, SessionInputs, audio_map, fuse, gate_signal, in_fov,
                         inertia_map, predict_viewport, visual_map)
from .session import (SegmentRecord, SessionMetrics, classify_segment, pool_metrics, qualifying_onsets,
                      segment_times, simulate_session, summarize, tune_gate)
from .tiling import TileProbabilityMap, TilingConfig, tile_overlap_ratio

__all__ = [
    "HEAD_RATE", "STRATEGIES", "GateParams", "HeadTrace", "SegmentRecord", "SessionInputs", "SessionMetrics",
    "TileProbabilityMap", "TilingConfig", "audio_map", "classify_segment", "drift", "fuse", "gate_signal",
    "in_fov", "inertia_map", "pool_metrics", "predict_viewport", "qualifying_onsets", "segment_times",
    "simulate_session", "summarize", "synth_head_trace", "tile_overlap_ratio", "tune_gate", "visual_map",
    "wrap_angle",
]
