import json

import numpy as np
import pytest

from foasurprise.ambisonics import SceneEvent, SceneScript, angles_from_direction, direction_from_angles, render_scene
from foasurprise.ambisonics.clip import rotate_foa
from foasurprise.ambisonics.synth import sustained_tone_scene
from foasurprise.errors import ConfigError, InvalidDimensionError, InvalidWindowError, TraceTooShortError
from foasurprise.surprise import (DetectionPolicy, SurpriseTrace, detect_events, estimate_direction, fit_half_life,
                                  running_statistics, score_clip, surprise_score, surprise_trace)

RATE = 240.0


def trace_of(values, rate=RATE):
    return SurpriseTrace(rate, np.asarray(values, dtype=np.float64))


def background(n, seed=0):
    return 1.0 + 0.05 * np.random.default_rng(seed).standard_normal(n)


def test_surprise_score_examples():
    assert surprise_score(np.zeros(4), np.zeros(4)) == 0.0
    assert surprise_score(np.ones(4), np.zeros(4)) == 1.0
    assert surprise_score(np.array([5.0, 0.0]), np.array([0.0, 0.0])) == 12.5
    with pytest.raises(InvalidDimensionError):
        surprise_score(np.zeros(3), np.zeros(4))


def test_trace_rejects_negative():
    with pytest.raises(InvalidDimensionError):
        trace_of([1.0, -1.0])


def test_constant_trace_has_no_events():
    assert detect_events(trace_of(np.ones(1000))) == []


def test_single_spike_detected_at_spike():
    s = background(1000)
    s[600] = 1.0 + 10 * 0.05 + 10.0  # far above both the sigma and ratio thresholds
    events = detect_events(trace_of(s))
    assert len(events) == 1
    assert events[0].onset_frame == 601 and events[0].peak_frame == 601


def test_spikes_one_second_apart_are_two_events():
    s = background(1200)
    s[[300, 540]] = 20.0
    assert [e.onset_frame for e in detect_events(trace_of(s))] == [301, 541]


def test_spikes_within_refractory_merge():
    s = background(1200)
    s[300], s[324] = 20.0, 30.0  # 100 ms apart
    events = detect_events(trace_of(s))
    assert len(events) == 1
    assert events[0].onset_frame == 301 and events[0].peak_frame == 325 and events[0].peak == 30.0


def test_warmup_suppresses_early_spikes():
    s = background(600)
    s[10] = 50.0
    assert detect_events(trace_of(s)) == []


def test_ratio_guard_is_optional():
    s = 1.0 + 0.05 * (-1.0) ** np.arange(800)  # never above mean + 2 std on its own
    s[500] = 1.0 + 0.05 * 6  # many sigma, but only 1.3x the mean
    assert detect_events(trace_of(s)) == []
    assert len(detect_events(trace_of(s), DetectionPolicy(min_ratio=0.0))) == 1


def test_short_trace_raises():
    with pytest.raises(TraceTooShortError):
        detect_events(trace_of(np.ones(5)))


def test_running_statistics_excludes_current_frame():
    s = np.arange(30, dtype=float)
    mean, std = running_statistics(s, window=10, warmup=0, min_history=10)
    assert np.isnan(mean[9])
    assert mean[10] == pytest.approx(4.5)
    assert mean[20] == pytest.approx(14.5)
    assert std[20] == pytest.approx(np.std(np.arange(10, 20)))


def test_half_life_recovered():
    t = np.arange(120) / RATE
    assert fit_half_life(8.0 * 0.5 ** (t / 0.1), RATE) == pytest.approx(0.1, rel=1e-9)
    assert fit_half_life(np.ones(50), RATE) is None
    assert fit_half_life(np.zeros(50), RATE) is None


def test_event_half_life_on_decay():
    s = background(1000) * 0.01
    t = np.arange(400) / RATE
    s[500:900] += 5.0 * 0.5 ** (t / 0.05)
    (ev,) = detect_events(trace_of(s))
    assert ev.half_life_s == pytest.approx(0.05, rel=0.3)


def test_trace_csv_and_json(tmp_path):
    tr = trace_of(background(50))
    tr.events = detect_events(tr)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "frame,time_s,S" and len(lines) == 51
    assert lines[1].startswith("1,")
    tr.save(tmp_path / "t.csv", tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text()) == []


@pytest.fixture(scope="module")
def tone_clip():
    return render_scene(sustained_tone_scene(7, onset=1.0, hold=1.0, duration=2.0, azimuth=120.0, level=0.8))


def test_trace_length_and_determinism(tiny_trained, tone_clip):
    model = tiny_trained.model
    a, b = surprise_trace(tone_clip, model), surprise_trace(tone_clip, model)
    assert len(a) == 480 - 1
    assert a.to_csv() == b.to_csv()
    assert np.all(a.s >= 0)


def test_trace_rejects_rate_mismatch(tiny_trained):
    from foasurprise.ambisonics import AmbisonicsClip
    with pytest.raises(ConfigError):
        surprise_trace(AmbisonicsClip(np.zeros((4, 4800)), 48000), tiny_trained.model)


def test_intensity_direction_of_event(tone_clip):
    d = estimate_direction(tone_clip, (240, 300))
    az, el = angles_from_direction(d)
    assert abs(az - 120.0) < 5.0 and abs(el) < 5.0
    with pytest.raises(InvalidWindowError):
        estimate_direction(tone_clip, (300, 240))
    with pytest.raises(InvalidWindowError):
        estimate_direction(tone_clip, (470, 600))
    with pytest.raises(ConfigError):
        estimate_direction(tone_clip, (240, 300), mode="beamformer")


def test_intensity_direction_none_for_silence():
    clip = render_scene(SceneScript(1.0, 0.0, [], [], 0))
    assert estimate_direction(clip, (10, 20)) is None


def test_direction_follows_rotation(tiny_trained, tone_clip):
    r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    d0 = estimate_direction(tone_clip, (240, 300))
    d1 = estimate_direction(rotate_foa(tone_clip, r), (240, 300))
    np.testing.assert_allclose(d1, r @ d0, atol=1e-12)


def test_latent_mode_returns_unit_vector_or_none(tiny_trained, tone_clip):
    model = tiny_trained.model
    trace = surprise_trace(tone_clip, model)
    d = estimate_direction(tone_clip, (240, 300), mode="latent", trace=trace)
    assert d is None or abs(np.linalg.norm(d) - 1.0) < 1e-12
    with pytest.raises(ConfigError):
        estimate_direction(tone_clip, (240, 300), mode="latent")


def test_score_clip_attaches_directions(tiny_trained):
    scene = SceneScript(3.0, 0.0, [SceneEvent(1.5, 0.05, direction_from_angles(-60.0).tolist(), "burst", 1.0)],
                        [], 3)
    trace = score_clip(render_scene(scene), tiny_trained.model, DetectionPolicy(min_ratio=0.0))
    for ev in trace.events:
        assert ev.direction is None or abs(np.linalg.norm(ev.direction) - 1.0) < 1e-12
    data = json.loads(trace.events_json())
    assert all(set(e) == {"onset_s", "peak", "azimuth_deg", "elevation_deg", "half_life_s"} for e in data)
