"""The full surprise model (compressor, encoder, GRU, heads) and its checkpoint container."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .encoder import LATENT_DIM, Encoder, IrrepsSpec
from .errors import CheckpointError, ConfigError
from .numerics import Tensor
from .ambisonics.clip import AmbisonicsClip
from .temporal import (COEFFS, HIDDEN, HORIZONS, INPUT_FLOOR, WINDOW, GRU, CompressedClip, CompressorConfig, Heads,
                       prepare_clip)

FORMAT_VERSION = 1
MAGIC = b"FOASCKPT"


@dataclass(frozen=True)
class ModelConfig:
    coeffs: int = COEFFS
    window: int = WINDOW
    hidden: int = HIDDEN
    horizons: int = HORIZONS
    sample_rate: int = 24000
    seed: int = 0
    compressor_seed: int = 0
    input_floor: float = INPUT_FLOOR

    @property
    def input_channels(self) -> int:
        return 4 * self.coeffs


class SurpriseModel:
    def __init__(self, config: ModelConfig = ModelConfig(), compressor: CompressorConfig | None = None):
        self.config = config
        self.compressor = compressor or CompressorConfig(window=config.window, hop=config.window,
                                                         coeffs=config.coeffs, seed=config.compressor_seed)
        self.encoder = Encoder(seed=config.seed, spec_in=IrrepsSpec(config.input_channels, 0))
        gen = np.random.default_rng(np.random.SeedSequence([config.seed, 0x6A0]))
        self.gru = GRU(LATENT_DIM, config.hidden, gen)
        self.heads = Heads(config.hidden, LATENT_DIM, config.input_channels, config.horizons, gen)

    @property
    def params(self) -> dict[str, Tensor]:
        return {**self.encoder.params, **self.gru.params, **self.heads.params}

    def frame_rate(self) -> float:
        return self.config.sample_rate / self.compressor.window

    def prepare(self, clip: AmbisonicsClip) -> CompressedClip:
        return prepare_clip(clip, self.compressor, input_floor=self.config.input_floor)

    # -- forward passes ----------------------------------------------------
    def latents(self, node_inputs) -> Tensor:
        """(B, T, 20, C) node inputs -> time-major latents (T, B, 112)."""
        x = node_inputs if isinstance(node_inputs, Tensor) else Tensor(node_inputs)
        b, t = x.shape[0], x.shape[1]
        frames = x.transpose(1, 0, 2, 3).reshape(t * b, *x.shape[2:])
        return self.encoder(frames).reshape(t, b, LATENT_DIM)

    def run(self, clip: CompressedClip) -> tuple[np.ndarray, np.ndarray]:
        """Inference over one clip: latents (T, 112) and contexts (T, H)."""
        z = self.latents(clip.node_inputs[None])
        h = self.gru.unroll(z)
        return z.data[:, 0], h.data[:, 0]

    def predict_next(self, z: np.ndarray, h: np.ndarray) -> np.ndarray:
        """One-step predictions for frames 1..T-1 from (T, D) latents and (T, H) contexts."""
        return self.heads.predict(h[:-1], 1, z[:-1]).data

    # -- checkpoint I/O ----------------------------------------------------
    def save(self, path: str | Path, extra: dict | None = None) -> None:
        names = list(self.params)
        blocks = [("compressor.matrix", self.compressor.matrix)] + [(n, self.params[n].data) for n in names]
        manifest = {
            "format_version": FORMAT_VERSION,
            "model": asdict(self.config),
            "compressor": {"window": self.compressor.window, "hop": self.compressor.hop,
                           "coeffs": self.compressor.coeffs, "seed": self.compressor.seed,
                           "sha256": self.compressor.checksum()},
            "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
            "extra": extra or {},
        }
        header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for _, arr in blocks:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> tuple[SurpriseModel, dict]:
        raw = Path(path).read_bytes()
        if raw[: len(MAGIC)] != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
        (hlen,) = struct.unpack("<Q", raw[len(MAGIC): len(MAGIC) + 8])
        offset = len(MAGIC) + 8
        manifest = json.loads(raw[offset: offset + hlen])
        offset += hlen
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('format_version')}")
        arrays = {}
        for block in manifest["blocks"]:
            n = int(np.prod(block["shape"])) if block["shape"] else 1
            chunk = raw[offset: offset + 8 * n]
            if len(chunk) != 8 * n:
                raise CheckpointError(f"{path}: truncated block {block['name']}")
            arrays[block["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(block["shape"]).astype(np.float64)
            offset += 8 * n
        if offset != len(raw):
            raise CheckpointError(f"{path}: trailing bytes after last block")
        comp = manifest["compressor"]
        compressor = CompressorConfig(comp["window"], comp["hop"], comp["coeffs"], comp["seed"],
                                      arrays.pop("compressor.matrix"))
        if compressor.checksum() != comp["sha256"]:
            raise CheckpointError("compressor checksum mismatch")
        model = cls(ModelConfig(**manifest["model"]), compressor)
        params = model.params
        if set(arrays) != set(params):
            raise ConfigError("checkpoint parameters do not match the model layout")
        for name, arr in arrays.items():
            if params[name].shape != arr.shape:
                raise ConfigError(f"shape mismatch for {name}")
            params[name].data = arr
        return model, manifest["extra"]

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        params = self.params
        for name, arr in values.items():
            params[name].data = np.asarray(arr, dtype=np.float64)
