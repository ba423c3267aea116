import numpy as np
import pytest

from foasurprise.ambisonics import SceneEvent, SceneScript, VisibleObject, direction_from_angles
from foasurprise.ambisonics.synth import session_scene
from foasurprise.errors import (ConfigError, EmptyViewportError, LengthMismatchError, UnknownStrategyError,
                                UnnormalizedMapError)
from foasurprise.surprise import SurpriseEvent, SurpriseTrace
from foasurprise.viewport import (GateParams, HeadTrace, SessionInputs, TileProbabilityMap, TilingConfig,
                                  classify_segment, fuse, gate_signal, inertia_map, predict_viewport,
                                  segment_times, simulate_session, synth_head_trace, tile_overlap_ratio, tune_gate,
                                  visual_map, wrap_angle)
from foasurprise.viewport.predictors import latest_event_direction

TILING = TilingConfig()


def quiet_scene(duration=20.0, objects=()):
    return SceneScript(duration, 0.0, [], list(objects), 0).validate()


def rear_scene(azimuth=180.0, onset=5.0, duration=20.0):
    ev = SceneEvent(onset, 1.0, direction_from_angles(azimuth).tolist(), "tone", 1.0, True, 480.0)
    return SceneScript(duration, 0.0, [ev], [], 0).validate()


def spike_trace(onset_s, azimuth, duration=20.0, rate=240.0, height=1.0):
    n = int(duration * rate) - 1
    s = np.full(n, 1e-4)
    frame = int(round(onset_s * rate))
    s[frame - 1: frame + 23] = height
    ev = SurpriseEvent(frame, frame, height, direction_from_angles(azimuth))
    return SurpriseTrace(rate, s, events=[ev])


# -- head traces ---------------------------------------------------------------

def test_drift_only_head_stays_near_front():
    head = synth_head_trace(quiet_scene())
    assert len(head) == 600
    assert np.abs(np.rad2deg(head.yaw)).max() <= 10.0 + 1e-9
    assert np.all(head.pitch == 0.0)


def test_head_turns_to_rear_event():
    head = synth_head_trace(rear_scene(180.0, onset=5.0))
    i = head.index(5.0 + 0.3 + 1.8)
    assert abs(np.rad2deg(wrap_angle(head.yaw[i] - np.pi))) <= 2.0
    # still facing front before the reaction latency has elapsed
    assert abs(np.rad2deg(head.yaw[head.index(5.2)])) <= 10.0


def test_head_speed_bound():
    head = synth_head_trace(session_scene(4), speed_deg=120.0)
    step = np.rad2deg(np.abs(wrap_angle(np.diff(head.yaw))))
    assert step.max() <= 120.0 / 30.0 + 1e-9


def test_head_returns_after_dwell():
    head = synth_head_trace(rear_scene(180.0, onset=2.0))
    assert abs(np.rad2deg(head.yaw[head.index(12.0)])) <= 10.0 + 1e-9


def test_head_trace_io_and_validation(tmp_path):
    head = synth_head_trace(quiet_scene(2.0))
    head.save(tmp_path / "h.json")
    loaded = HeadTrace.load(tmp_path / "h.json")
    np.testing.assert_array_equal(loaded.yaw, head.yaw)
    with pytest.raises(LengthMismatchError):
        HeadTrace(np.zeros(3), np.zeros(4))
    with pytest.raises(ConfigError):
        synth_head_trace(quiet_scene(2.0), latency=-1.0)


# -- tiling and maps -------------------------------------------------------------

def test_tile_indexing():
    assert TILING.n_tiles == 32
    assert TILING.tile_of(-180.0, 89.0) == 0
    assert TILING.tile_of(179.9, -89.0) == 31
    assert TILING.tile_of(180.0, 0.0) == TILING.tile_of(-180.0, 0.0)


def test_viewport_tiles_front():
    tiles = TILING.viewport_tiles(0.0, 0.0)
    assert TILING.tile_of(0.0, 0.0) in tiles
    assert all(t % 8 in (2, 3, 4, 5) for t in tiles)


def test_map_validation():
    with pytest.raises(UnnormalizedMapError):
        TileProbabilityMap(np.full(32, 0.1))
    with pytest.raises(UnnormalizedMapError):
        TileProbabilityMap(np.array([1.5, -0.5]))
    uniform = TileProbabilityMap.from_weights(np.zeros(4))
    np.testing.assert_array_equal(uniform.weights, np.full(4, 0.25))


def test_top_mass_tiles():
    m = TileProbabilityMap(np.array([0.5, 0.3, 0.15, 0.05]))
    assert m.top_mass_tiles(0.9) == {0, 1, 2}
    assert m.top_mass_tiles(0.5) == {0}
    assert m.top_mass_tiles(1.0) == {0, 1, 2, 3}


def test_tile_overlap_ratio_examples():
    assert tile_overlap_ratio({1, 2}, {2, 3}) == 0.5
    assert tile_overlap_ratio({1, 2, 3}, {1, 2}) == 1.0
    assert tile_overlap_ratio(set(), {4}) == 0.0
    with pytest.raises(EmptyViewportError):
        tile_overlap_ratio({1}, set())


# -- predictors ------------------------------------------------------------------

def test_inertia_extrapolates_constant_velocity():
    t = np.arange(300) / 30.0
    yaw = wrap_angle(np.deg2rad(20.0 * t))  # 20 deg/s
    head = HeadTrace(yaw, np.zeros(300))
    m = inertia_map(head, 5.0, 1.0, TILING)
    centre = TILING.tile_of(20.0 * 6.0, 0.0)
    assert m.weights[centre] == pytest.approx(m.weights.max(), abs=1e-12)
    np.testing.assert_allclose(m.weights, TileProbabilityMap.centered(TILING, 120.0, 0.0).weights, atol=1e-9)


def test_inertia_static_head():
    head = HeadTrace(np.zeros(60), np.zeros(60))
    m = predict_viewport("inertia", SessionInputs(quiet_scene(2.0), head), 1.0)
    assert m.weights[TILING.tile_of(0.0, 0.0)] == pytest.approx(m.weights.max())


def test_visual_mass_stays_in_fov():
    objects = [VisibleObject(direction_from_angles(10.0, 5.0).tolist(), 1.0),
               VisibleObject(direction_from_angles(170.0).tolist(), 5.0)]  # behind: invisible
    scene = quiet_scene(5.0, objects)
    inputs = SessionInputs(scene, synth_head_trace(scene))
    m = visual_map(inputs, 2.0, TILING)
    fov = TILING.viewport_tiles(*np.rad2deg([inputs.head.yaw[60], inputs.head.pitch[60]]))
    assert m.mass(fov) >= 0.99


def test_visual_falls_back_to_viewport_without_objects():
    scene = quiet_scene(5.0)
    m = visual_map(SessionInputs(scene, synth_head_trace(scene)), 1.0, TILING)
    assert m.mass(TILING.viewport_tiles(0.0, 0.0) | TILING.viewport_tiles(10.0, 0.0)) == pytest.approx(1.0)


def test_fuse_examples():
    a = TileProbabilityMap(np.array([1.0, 0.0]))
    b = TileProbabilityMap(np.array([0.0, 1.0]))
    np.testing.assert_allclose(fuse(a, b, 0.0, GateParams(0.0, 0.0)).weights, [0.5, 0.5])
    np.testing.assert_allclose(fuse(a, b, 3.0, GateParams(0.0, -50.0)).weights, a.weights, atol=1e-20)
    np.testing.assert_allclose(fuse(a, b, 1e9, GateParams(1.0, 0.0)).weights, b.weights)
    weights = [fuse(a, b, s, GateParams(10.0, -1.0)).weights[1] for s in np.linspace(0, 1, 11)]
    assert np.all(np.diff(weights) > 0)
    with pytest.raises(UnnormalizedMapError):
        fuse(np.array([0.7, 0.7]), b, 0.0)


def test_fuse_sums_to_one_random():
    gen = np.random.default_rng(0)
    for _ in range(20):
        a = TileProbabilityMap.from_weights(gen.random(32))
        b = TileProbabilityMap.from_weights(gen.random(32))
        assert fuse(a, b, gen.random(), GateParams(gen.normal() * 100, gen.normal())).weights.sum() == pytest.approx(
            1.0, abs=1e-12)


def test_gate_params_reject_non_finite():
    with pytest.raises(ConfigError):
        GateParams(float("nan"), 0.0)
    assert GateParams(1.0, -1000.0).alpha(0.0) == pytest.approx(0.0)


def test_hybrid_follows_audio_under_huge_surprise():
    scene = rear_scene(180.0, onset=5.0)
    head = synth_head_trace(scene)
    inputs = SessionInputs(scene, head, spike_trace(5.0, 135.0, height=1e6))
    m = predict_viewport("hybrid", inputs, 5.2, gate=GateParams(500.0, -3.0))
    assert m.weights[TILING.tile_of(135.0, 0.0)] == pytest.approx(m.weights.max())
    assert m.mass(TILING.viewport_tiles(135.0, 0.0)) > 0.99


def test_hybrid_equals_visual_without_events():
    scene = quiet_scene(5.0, [VisibleObject(direction_from_angles(5.0).tolist())])
    trace = SurpriseTrace(240.0, np.full(1199, 1e-3))
    inputs = SessionInputs(scene, synth_head_trace(scene), trace)
    np.testing.assert_array_equal(predict_viewport("hybrid", inputs, 2.0).weights,
                                  predict_viewport("visual", inputs, 2.0).weights)


def test_gate_signal_and_audio_memory():
    trace = spike_trace(5.0, 90.0)
    assert gate_signal(None, 5.0) == 0.0
    assert gate_signal(trace, 4.0) == pytest.approx(1e-4)
    assert gate_signal(trace, 5.5) == 1.0
    assert latest_event_direction(trace, 4.9) is None
    assert latest_event_direction(trace, 6.0)[0] == pytest.approx(90.0)
    assert latest_event_direction(trace, 7.5) is None


def test_unknown_strategy_and_missing_trace():
    scene = quiet_scene(2.0)
    inputs = SessionInputs(scene, synth_head_trace(scene))
    with pytest.raises(UnknownStrategyError):
        predict_viewport("telepathy", inputs, 0.5)
    with pytest.raises(ConfigError):
        predict_viewport("hybrid", inputs, 0.5)


# -- sessions ----------------------------------------------------------------------

def test_segment_times_and_classification():
    assert segment_times(5.0, 1.0) == [1.0, 2.0, 3.0, 4.0]
    assert segment_times(5.0, 0.0) == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert classify_segment(5.5, 7.5, [5.0], [5.0]) == "surprise"
    assert classify_segment(7.0, 9.0, [5.0], [5.0]) == "other"
    assert classify_segment(2.0, 4.0, [5.0], [5.0]) == "general"
    assert classify_segment(3.0, 5.0, [5.0], [5.0]) == "general"
    assert classify_segment(5.5, 7.5, [5.0], []) == "other"


def test_oracle_wastes_little_on_drift_only_scenes():
    for seed in range(3):
        scene = session_scene(seed, n_events=1)
        scene.events = []
        inputs = SessionInputs(scene, synth_head_trace(scene))
        metrics = simulate_session(inputs, "oracle")
        assert metrics.wasted_bw_ratio < 0.15


def test_adversarial_sees_no_high_quality():
    scene = session_scene(1)
    metrics = simulate_session(SessionInputs(scene, synth_head_trace(scene)), "adversarial")
    assert metrics.viewed_quality_ratio == 0.0


def test_session_metrics_within_bounds(tmp_path):
    scene = session_scene(2)
    inputs = SessionInputs(scene, synth_head_trace(scene), spike_trace(scene.events[0].onset, 180.0))
    for strategy in ("inertia", "visual", "hybrid"):
        m = simulate_session(inputs, strategy)
        for v in (m.tor_general, m.tor_surprise, m.wasted_bw_ratio, m.viewed_quality_ratio):
            assert v is None or 0.0 <= v <= 1.0
        assert 32 * 0.05 <= m.bitrate_mbps <= 32 * 0.45
        assert m.n_surprise > 0 and m.n_general > 0
    m.save(tmp_path / "r.json", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("time,kind,")
    assert m.to_json() == simulate_session(inputs, "hybrid").to_json()


def test_simulate_rejects_short_head():
    scene = quiet_scene(5.0)
    head = HeadTrace(np.zeros(30), np.zeros(30))
    with pytest.raises(LengthMismatchError):
        simulate_session(SessionInputs(scene, head), "inertia")


def _tuning_sessions():
    out = []
    for seed in range(3):
        scene = session_scene(seed)
        trace = spike_trace(scene.events[0].onset, scene.events[0].azimuth, height=0.01)
        ev2 = scene.events[1]
        frame = int(round(ev2.onset * 240))
        trace.s[frame - 1: frame + 23] = 0.01
        trace.events.append(SurpriseEvent(frame, frame, 0.01, np.asarray(ev2.direction)))
        out.append(SessionInputs(scene, synth_head_trace(scene), trace))
    return out


def test_tune_gate_single_point_and_constructed_best():
    sessions = _tuning_sessions()
    assert tune_gate(sessions, [(3.0, 1.0)]) == GateParams(3.0, 1.0)
    # with accurate audio directions, trusting audio beats ignoring it
    best = tune_gate(sessions, [(0.0, -20.0), (1000.0, 0.0)])
    assert best == GateParams(1000.0, 0.0)


def test_tune_gate_deterministic_and_tie_break():
    sessions = _tuning_sessions()
    grid = [(lam, beta) for lam in (0.0, 100.0, 1000.0) for beta in (-6.0, 0.0)]
    assert tune_gate(sessions, grid) == tune_gate(sessions, grid)
    # identical gates: the smaller |lam| then |beta| wins
    assert tune_gate(sessions, [(0.0, -30.0), (0.0, -40.0)]) == GateParams(0.0, -30.0)
    with pytest.raises(ConfigError):
        tune_gate(sessions, [])
