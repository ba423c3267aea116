"""Frozen orthogonal temporal compression, the GRU context model and the prediction heads."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ambisonics.clip import AmbisonicsClip
from .errors import ConfigError, InvalidHorizonError, InvalidWindowError
from .graph import SphericalGraph, build_dodecahedron
from .numerics import Tensor, as_tensor, orthonormal_matrix, stack

WINDOW = 100
COEFFS = 8
HIDDEN = 128
HORIZONS = 3
RECON_HIDDEN = 64
INPUT_FLOOR = 0.01


@dataclass
class CompressorConfig:
    """Fixed ``coeffs x window`` orthonormal projection shared by every channel and node."""

    window: int = WINDOW
    hop: int = WINDOW
    coeffs: int = COEFFS
    seed: int = 0
    matrix: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.hop != self.window:
            raise ConfigError("only non-overlapping windows (hop == window) are supported")
        if self.matrix is None:
            self.matrix = orthonormal_matrix(self.coeffs, self.window, self.seed)
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (self.coeffs, self.window):
            raise ConfigError(f"compressor matrix shape {self.matrix.shape} != ({self.coeffs}, {self.window})")
        self.matrix.setflags(write=False)

    def checksum(self) -> str:
        return hashlib.sha256(self.matrix.astype("<f8").tobytes()).hexdigest()

    def n_frames(self, n_samples: int) -> int:
        return n_samples // self.window


def compress(window: np.ndarray, config: CompressorConfig) -> np.ndarray:
    """Project one window (L,) or (L, channels) to (d,) or (d, channels)."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape[0] != config.window:
        raise InvalidWindowError(f"window length {window.shape[0]} != {config.window}")
    return config.matrix @ window


def compress_signal(samples: np.ndarray, config: CompressorConfig) -> np.ndarray:
    """Compress (channels, N) into (T, channels, d); a trailing partial window is dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    t = config.n_frames(samples.shape[-1])
    framed = samples[..., : t * config.window].reshape(*samples.shape[:-1], t, config.window)
    coeffs = framed @ config.matrix.T  # (channels, T, d)
    return np.moveaxis(coeffs, -2, 0)


@dataclass
class CompressedClip:
    """Model inputs for one clip: per-node scalars (T, 20, 4d) and global frames (T, 4d)."""

    node_inputs: np.ndarray
    global_frames: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.global_frames.shape[0]


def loudness_compress(x: np.ndarray, floor: float = INPUT_FLOOR) -> np.ndarray:
    """Odd log compression ``sign(x) * log1p(|x| / floor)``; ``floor <= 0`` leaves x unchanged.

    Being odd and elementwise, it commutes with node permutations and sign
    flips, so rotation covariance of the node features is preserved.
    """
    x = np.asarray(x, dtype=np.float64)
    if floor <= 0:
        return x
    return np.sign(x) * np.log1p(np.abs(x) / floor)


def prepare_clip(clip: AmbisonicsClip, config: CompressorConfig, graph: SphericalGraph | None = None,
                 input_floor: float = INPUT_FLOOR) -> CompressedClip:
    """Project onto graph nodes, compress, and log-compress the encoder inputs.

    Node projection scales each channel by a per-node constant, so it
    commutes with the linear window compression; the global frame is
    compressed once and scaled per node. The global frames (reconstruction
    targets) stay linear.
    """
    graph = graph or build_dodecahedron()
    glob = compress_signal(clip.samples, config)  # (T, 4, d)
    scale = np.concatenate([np.ones((graph.n_nodes, 1)), graph.positions], axis=1)  # (20, 4)
    nodes = glob[:, None, :, :] * scale[None, :, :, None]  # (T, 20, 4, d)
    t = glob.shape[0]
    return CompressedClip(loudness_compress(nodes.reshape(t, graph.n_nodes, -1), input_floor),
                          glob.reshape(t, -1))


# -- recurrent context -------------------------------------------------------

class GRU:
    """Single-layer GRU, ``h' = (1 - u) * n + u * h``."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "gru"):
        self.input_dim, self.hidden = input_dim, hidden
        bound = 1.0 / hidden ** 0.5
        self.params: dict[str, Tensor] = {}
        for gate in ("r", "u", "n"):
            self.params[f"{prefix}.wx_{gate}"] = Tensor(rng.uniform(-bound, bound, (input_dim, hidden)), True)
            self.params[f"{prefix}.wh_{gate}"] = Tensor(rng.uniform(-bound, bound, (hidden, hidden)), True)
            self.params[f"{prefix}.bx_{gate}"] = Tensor(np.zeros(hidden), True)
            self.params[f"{prefix}.bh_{gate}"] = Tensor(np.zeros(hidden), True)
        self.prefix = prefix

    def p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"]

    def input_projection(self, z: Tensor) -> dict[str, Tensor]:
        """Input contributions to every gate for all steps at once: (T, B, H) each."""
        z = as_tensor(z)
        if z.shape[-1] != self.input_dim:
            raise ConfigError(f"GRU expects {self.input_dim}-dim inputs, got {z.shape[-1]}")
        return {g: z @ self.p(f"wx_{g}") + self.p(f"bx_{g}") for g in ("r", "u", "n")}

    def cell(self, xr: Tensor, xu: Tensor, xn: Tensor, h: Tensor) -> Tensor:
        r = (xr + h @ self.p("wh_r") + self.p("bh_r")).sigmoid()
        u = (xu + h @ self.p("wh_u") + self.p("bh_u")).sigmoid()
        n = (xn + r * (h @ self.p("wh_n") + self.p("bh_n"))).tanh()
        return n + u * (h - n)

    def step(self, z_t, h_prev) -> Tensor:
        z_t, h_prev = as_tensor(z_t), as_tensor(h_prev)
        if h_prev.shape[-1] != self.hidden:
            raise ConfigError(f"hidden state has dim {h_prev.shape[-1]}, expected {self.hidden}")
        x = self.input_projection(z_t.reshape(1, -1) if z_t.ndim == 1 else z_t)
        h = h_prev.reshape(1, -1) if h_prev.ndim == 1 else h_prev
        out = self.cell(x["r"], x["u"], x["n"], h)
        return out.reshape(self.hidden) if h_prev.ndim == 1 else out

    def unroll(self, z: Tensor, h0: Tensor | None = None) -> Tensor:
        """Run over time-major inputs (T, B, D); returns states (T, B, H)."""
        z = as_tensor(z)
        t_len, batch = z.shape[0], z.shape[1]
        x = self.input_projection(z)
        h = as_tensor(h0) if h0 is not None else Tensor(np.zeros((batch, self.hidden)))
        states = []
        for t in range(t_len):
            h = self.cell(x["r"][t], x["u"][t], x["n"][t], h)
            states.append(h)
        return stack(states)


def gru_step(z_t, h_prev, gru: GRU) -> np.ndarray:
    """One GRU update on plain arrays."""
    return gru.step(z_t, h_prev).data


class Heads:
    """K linear future-latent predictors and a two-layer reconstruction head."""

    def __init__(self, hidden: int, latent: int, recon_dim: int, horizons: int, rng: np.random.Generator,
                 recon_hidden: int = RECON_HIDDEN):
        if horizons < 1:
            raise ConfigError("need at least one prediction horizon")
        self.horizons, self.latent, self.recon_dim = horizons, latent, recon_dim
        self.params: dict[str, Tensor] = {}
        # small prediction weights keep the initial contrastive logits near uniform
        pred_std = 0.1 / hidden ** 0.5
        for k in range(1, horizons + 1):
            self.params[f"heads.pred{k}.w"] = Tensor(rng.normal(0.0, pred_std, (hidden, latent)), True)
            self.params[f"heads.pred{k}.b"] = Tensor(np.zeros(latent), True)
        self.params["heads.recon.w1"] = Tensor(rng.normal(0.0, hidden ** -0.5, (hidden, recon_hidden)), True)
        self.params["heads.recon.b1"] = Tensor(np.zeros(recon_hidden), True)
        self.params["heads.recon.w2"] = Tensor(rng.normal(0.0, recon_hidden ** -0.5, (recon_hidden, recon_dim)), True)
        self.params["heads.recon.b2"] = Tensor(np.zeros(recon_dim), True)

    def prediction_params(self, k: int) -> list[str]:
        return [f"heads.pred{k}.w", f"heads.pred{k}.b"]

    def predict(self, h, k: int, anchor=None) -> Tensor:
        """Future latent from context; with ``anchor`` (the current latent) the head predicts the change."""
        if not 1 <= k <= self.horizons:
            raise InvalidHorizonError(f"horizon {k} outside 1..{self.horizons}")
        out = as_tensor(h) @ self.params[f"heads.pred{k}.w"] + self.params[f"heads.pred{k}.b"]
        return out if anchor is None else out + as_tensor(anchor)

    def reconstruct(self, h) -> Tensor:
        hidden = (as_tensor(h) @ self.params["heads.recon.w1"] + self.params["heads.recon.b1"]).tanh()
        return hidden @ self.params["heads.recon.w2"] + self.params["heads.recon.b2"]


def predict_future(h_t, k: int, heads: Heads) -> np.ndarray:
    h = np.asarray(h_t, dtype=np.float64)
    out = heads.predict(h.reshape(1, -1) if h.ndim == 1 else h, k).data
    return out.reshape(-1) if h.ndim == 1 else out


def reconstruct(h_t, heads: Heads) -> np.ndarray:
    h = np.asarray(h_t, dtype=np.float64)
    out = heads.reconstruct(h.reshape(1, -1) if h.ndim == 1 else h).data
    return out.reshape(-1) if h.ndim == 1 else out
