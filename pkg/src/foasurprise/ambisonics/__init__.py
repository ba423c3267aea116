from .clip import (
    CHANNELS,
    CONVENTION,
    DEFAULT_SAMPLE_RATE,
    AmbisonicsClip,
    check_rotation,
    intensity_direction,
    read_foa,
    rotate_foa,
    write_foa,
)
from .scene import (
    SceneEvent,
    SceneScript,
    VisibleObject,
    angles_from_direction,
    direction_from_angles,
    encode_source,
    render_scene,
)

__all__ = [
    "CHANNELS", "CONVENTION", "DEFAULT_SAMPLE_RATE", "AmbisonicsClip", "SceneEvent", "SceneScript",
    "VisibleObject", "angles_from_direction", "check_rotation", "direction_from_angles", "encode_source",
    "intensity_direction", "read_foa", "render_scene", "rotate_foa", "write_foa",
]
