import json

import numpy as np
import pytest

from foasurprise.ambisonics import (AmbisonicsClip, SceneEvent, SceneScript, angles_from_direction,
                                    direction_from_angles, encode_source, intensity_direction, read_foa,
                                    render_scene, rotate_foa, write_foa)
from foasurprise.ambisonics.synth import TONE_FREQUENCIES, session_scene, sustained_tone_scene, training_scene
from foasurprise.errors import (ChannelCountError, InvalidRotationError, InvalidSceneError, InvalidWindowError,
                                MagicMismatchError, TruncatedPayloadError)


def random_rotation(gen):
    q, r = np.linalg.qr(gen.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def test_encode_source_is_plane_wave():
    sig = np.sin(np.arange(480) * 0.1)
    u = direction_from_angles(30.0, 10.0)
    clip = encode_source(sig, u)
    np.testing.assert_array_equal(clip.w, sig)
    np.testing.assert_allclose(clip.xyz, u[:, None] * sig[None, :])


def test_angles_roundtrip():
    for az, el in [(0, 0), (90, 0), (-135, 20), (179, -45)]:
        a, e = angles_from_direction(direction_from_angles(az, el))
        assert a == pytest.approx(az) and e == pytest.approx(el)


def test_rotation_moves_intensity_direction():
    gen = np.random.default_rng(0)
    clip = encode_source(gen.normal(size=2400), direction_from_angles(40.0, 15.0))
    r = random_rotation(gen)
    rotated = rotate_foa(clip, r)
    np.testing.assert_array_equal(rotated.w, clip.w)
    np.testing.assert_allclose(intensity_direction(rotated), r @ intensity_direction(clip), atol=1e-12)


def test_rotation_rejects_reflections():
    clip = encode_source(np.ones(10), [1.0, 0.0, 0.0])
    with pytest.raises(InvalidRotationError):
        rotate_foa(clip, np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidRotationError):
        rotate_foa(clip, np.eye(2))


def test_intensity_direction_cases():
    clip = encode_source(np.random.default_rng(1).normal(size=1000), direction_from_angles(-120.0))
    az, _ = angles_from_direction(intensity_direction(clip, (100, 600)))
    assert az == pytest.approx(-120.0)
    assert intensity_direction(AmbisonicsClip(np.zeros((4, 100)))) is None
    with pytest.raises(InvalidWindowError):
        intensity_direction(clip, (500, 400))


def test_clip_validation():
    with pytest.raises(ChannelCountError):
        AmbisonicsClip(np.zeros((3, 10)))
    with pytest.raises(ValueError):
        AmbisonicsClip(np.full((4, 10), np.nan))


def test_foa_roundtrip_exact_for_float32_values(tmp_path):
    data = np.random.default_rng(2).normal(size=(4, 1000)).astype(np.float32).astype(np.float64)
    clip = AmbisonicsClip(data, 24000)
    write_foa(tmp_path / "a.foa", clip)
    assert read_foa(tmp_path / "a.foa") == clip
    header = json.loads((tmp_path / "a.foa.json").read_text())
    assert header["channels"] == ["W", "X", "Y", "Z"] and header["frames"] == 1000


def test_foa_errors(tmp_path):
    clip = AmbisonicsClip(np.zeros((4, 50)))
    path = tmp_path / "a.foa"
    write_foa(path, clip)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(TruncatedPayloadError):
        read_foa(path)
    path.write_bytes(raw + b"\0" * 16)
    with pytest.raises(MagicMismatchError):
        read_foa(path)
    path.write_bytes(raw)
    header = json.loads((tmp_path / "a.foa.json").read_text())
    (tmp_path / "a.foa.json").write_text(json.dumps(header | {"channels": ["W", "X", "Y"]}))
    with pytest.raises(ChannelCountError):
        read_foa(path)
    (tmp_path / "a.foa.json").unlink()
    with pytest.raises(MagicMismatchError):
        read_foa(path)


def test_scene_json_roundtrip(tmp_path):
    scene = session_scene(3)
    scene.save(tmp_path / "s.json")
    assert SceneScript.load(tmp_path / "s.json") == scene


def test_scene_validation():
    with pytest.raises(InvalidSceneError):
        SceneScript(1.0, events=[SceneEvent(2.0, 0.5, [1.0, 0.0, 0.0])]).validate()
    with pytest.raises(InvalidSceneError):
        SceneScript(1.0, events=[SceneEvent(0.1, 0.5, [1.0, 1.0, 0.0])]).validate()
    with pytest.raises(InvalidSceneError):
        SceneScript.from_dict({"events": []})


def test_render_is_deterministic_and_linear():
    a = sustained_tone_scene(0, ambient=0.0)
    b = SceneScript(5.0, 0.0, [SceneEvent(2.5, 0.05, [0.0, 1.0, 0.0], "burst")], [], 0)
    both = SceneScript(5.0, 0.0, a.events + b.events, [], 0)
    np.testing.assert_allclose(render_scene(both).samples,
                               render_scene(a).samples + render_scene(b).samples, atol=1e-12)
    assert render_scene(training_scene(4)) == render_scene(training_scene(4))


def test_sustained_tone_windows_repeat():
    scene = sustained_tone_scene(1, ambient=0.0)
    assert scene.events[0].frequency in TONE_FREQUENCIES
    clip = render_scene(scene)
    start = int(scene.events[0].onset * 24000) + 200
    np.testing.assert_allclose(clip.w[start:start + 100], clip.w[start + 100:start + 200], atol=1e-9)


def test_session_scene_rear_events():
    for seed in range(10):
        for ev in session_scene(seed).events:
            assert abs(ev.azimuth) >= 80.0 - 1e-9
