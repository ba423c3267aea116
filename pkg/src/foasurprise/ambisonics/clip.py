"""B-format clips: construction, rotation, intensity-vector direction and file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    ChannelCountError,
    DataError,
    InvalidRotationError,
    InvalidWindowError,
    MagicMismatchError,
    TruncatedPayloadError,
)

CHANNELS = ("W", "X", "Y", "Z")
CONVENTION = "unscaled-pressure"
DEFAULT_SAMPLE_RATE = 24000


@dataclass(frozen=True)
class AmbisonicsClip:
    """First-order ambisonics signal, ``samples`` shaped (4, N) in W, X, Y, Z order."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    convention: str = CONVENTION

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] != 4:
            raise ChannelCountError(f"expected 4 channels, got shape {samples.shape}")
        if samples.shape[1] < 1:
            raise DataError("clip must contain at least one frame")
        if not np.isfinite(samples).all():
            raise DataError("clip contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.frames / self.sample_rate

    @property
    def w(self) -> np.ndarray:
        return self.samples[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.samples[1:]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AmbisonicsClip):
            return NotImplemented
        return (self.sample_rate == other.sample_rate and self.convention == other.convention
                and np.array_equal(self.samples, other.samples))

    def __hash__(self):
        return hash((self.sample_rate, self.convention, self.samples.tobytes()))


def check_rotation(rotation: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise InvalidRotationError(f"rotation must be 3x3, got {rotation.shape}")
    if np.abs(rotation.T @ rotation - np.eye(3)).max() > tol:
        raise InvalidRotationError("matrix is not orthogonal")
    if abs(np.linalg.det(rotation) - 1.0) > tol:
        raise InvalidRotationError("matrix has determinant != +1")
    return rotation


def rotate_foa(clip: AmbisonicsClip, rotation: np.ndarray) -> AmbisonicsClip:
    """Rotate the sound field: W is untouched, (X, Y, Z) is left-multiplied by R."""
    rotation = check_rotation(rotation)
    out = np.empty_like(clip.samples)
    out[0] = clip.w
    out[1:] = rotation @ clip.xyz
    return AmbisonicsClip(out, clip.sample_rate, clip.convention)


def intensity_direction(clip: AmbisonicsClip, window: slice | tuple[int, int] | None = None) -> np.ndarray | None:
    """Unit vector along the time-averaged active intensity W * (X, Y, Z).

    Returns ``None`` when the mean intensity is numerically zero (silence or a
    perfectly diffuse field).
    """
    start, stop = _window_bounds(window, clip.frames)
    w = clip.w[start:stop]
    mean = (clip.xyz[:, start:stop] * w).mean(axis=1)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        return None
    return mean / norm


def _window_bounds(window, n: int) -> tuple[int, int]:
    if window is None:
        start, stop = 0, n
    elif isinstance(window, slice):
        start, stop, step = window.indices(n)
        if step != 1:
            raise InvalidWindowError("strided windows are not supported")
    else:
        start, stop = (int(v) for v in window)
        if start < 0 or stop > n:
            raise InvalidWindowError(f"window [{start}, {stop}) outside clip of {n} frames")
    if stop <= start:
        raise InvalidWindowError(f"empty window [{start}, {stop})")
    return start, stop


# -- .foa files ----------------------------------------------------------------

def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_foa(path: str | Path, clip: AmbisonicsClip) -> None:
    """Write ``clip`` as little-endian float32 frames plus a JSON sidecar.

    Samples are stored at single precision; clips whose samples are exactly
    representable in float32 round-trip bit-exactly.
    """
    path = Path(path)
    payload = np.ascontiguousarray(clip.samples.T, dtype="<f4")
    path.write_bytes(payload.tobytes())
    header = {
        "sample_rate": int(clip.sample_rate),
        "channels": list(CHANNELS),
        "convention": clip.convention,
        "frames": int(clip.frames),
    }
    sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")


def read_foa(path: str | Path) -> AmbisonicsClip:
    path = Path(path)
    try:
        header = json.loads(sidecar_path(path).read_text())
    except FileNotFoundError as exc:
        raise MagicMismatchError(f"missing sidecar for {path}") from exc
    except json.JSONDecodeError as exc:
        raise MagicMismatchError(f"sidecar for {path} is not valid JSON") from exc
    if not isinstance(header, dict) or not {"sample_rate", "channels", "frames"} <= header.keys():
        raise MagicMismatchError(f"sidecar for {path} lacks required keys")
    channels = header["channels"]
    if not isinstance(channels, list) or len(channels) != 4:
        raise ChannelCountError(f"sidecar declares {channels!r}, expected 4 channels")
    if [str(c).upper() for c in channels] != list(CHANNELS):
        raise MagicMismatchError(f"unsupported channel order {channels!r}")
    frames = int(header["frames"])
    raw = path.read_bytes()
    expected = frames * 4 * 4
    if len(raw) < expected:
        raise TruncatedPayloadError(f"{path}: {len(raw)} bytes, header promises {expected}")
    if len(raw) > expected:
        raise MagicMismatchError(f"{path}: {len(raw) - expected} trailing bytes beyond header")
    data = np.frombuffer(raw, dtype="<f4").reshape(frames, 4).T.astype(np.float64)
    return AmbisonicsClip(data, int(header["sample_rate"]), header.get("convention", CONVENTION))
