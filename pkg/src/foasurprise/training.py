"""Dual self-supervised objective, two-phase curriculum and the training loop."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ambisonics.clip import AmbisonicsClip
from .errors import ConfigError, InvalidBatchError, InvalidDimensionError, InvalidEpochError, NumericalError
from .model import ModelConfig, SurpriseModel
from .numerics import OptimizerState, Tensor, adam_step, as_tensor, clip_grad_norm, logsumexp
from .temporal import CompressedClip

log = logging.getLogger(__name__)

PHASE1_LAST_EPOCH = 6
PHASE1_WEIGHTS = (1.0, 0.0)
PHASE2_WEIGHTS = (5.0, 0.2)
LOSS_LOG_COLUMNS = ("epoch", "w_recon", "w_cpc", "recon_loss", "cpc_loss")


def curriculum_weights(epoch: int) -> tuple[float, float]:
    """(w_recon, w_cpc) for a 1-based epoch: pure reconstruction first, then balanced."""
    if epoch < 1:
        raise InvalidEpochError(f"epochs are 1-based, got {epoch}")
    return PHASE1_WEIGHTS if epoch <= PHASE1_LAST_EPOCH else PHASE2_WEIGHTS


def recon_loss(prediction, target) -> Tensor:
    """Mean squared error over all elements."""
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise InvalidDimensionError(f"prediction {prediction.shape} vs target {target.shape}")
    diff = prediction - target
    return (diff * diff).mean()


def infonce_loss(predictions: Sequence, positives: Sequence, pool, temperature: float = 0.5) -> Tensor:
    """Contrastive loss summed over horizons, averaged over anchors.

    ``predictions[k]`` is (M_k, D) predicted latents and ``positives[k]`` the
    (M_k,) indices of their true targets inside ``pool`` (N, D). Every pool
    entry other than the positive acts as a negative.
    """
    pool = as_tensor(pool)
    if pool.ndim != 2 or pool.shape[0] < 2:
        raise InvalidBatchError("candidate pool needs at least two entries")
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    if len(predictions) != len(positives) or not predictions:
        raise InvalidBatchError("need one positive index array per horizon")
    total = None
    for pred, pos in zip(predictions, positives):
        pred = as_tensor(pred)
        pos = np.asarray(pos, dtype=np.intp)
        if pred.shape[0] != pos.shape[0] or pred.shape[0] == 0:
            raise InvalidBatchError("empty or mismatched anchor set")
        if (pos < 0).any() or (pos >= pool.shape[0]).any():
            raise InvalidBatchError("positive index outside the candidate pool")
        logits = (pred @ pool.T) * (1.0 / temperature)  # (M, N)
        term = (logsumexp(logits, axis=-1) - logits[np.arange(pos.size), pos]).mean()
        total = term if total is None else total + term
    return total


@dataclass
class TrainConfig:
    seq_len: int = 64
    batch_size: int = 16
    epochs: int = 10
    temperature: float = 0.5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    align_weight: float = 10.0
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> TrainConfig:
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.seq_len <= self.model.horizons + 1:
            raise ConfigError("sequence length must exceed the number of horizons")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch size and epochs must be positive")
        return self


@dataclass
class EpochRecord:
    epoch: int
    w_recon: float
    w_cpc: float
    recon_loss: float
    cpc_loss: float


@dataclass
class TrainResult:
    model: SurpriseModel
    history: list[EpochRecord]
    optimizer: OptimizerState
    compressor_checksum_before: str
    grad_nonzero: dict[str, bool] = field(default_factory=dict)

    def loss_csv(self) -> str:
        return loss_log_csv(self.history)


def loss_log_csv(history: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOSS_LOG_COLUMNS)
    for r in history:
        writer.writerow([r.epoch, repr(r.w_recon), repr(r.w_cpc), repr(r.recon_loss), repr(r.cpc_loss)])
    return buf.getvalue()


def align_loss(prediction, target) -> Tensor:
    """Squared distance summed over latent dimensions, averaged over anchors.

    The target is treated as a constant so the term only shapes the predictor.
    """
    prediction = as_tensor(prediction)
    diff = prediction - as_tensor(target).detach()
    return (diff * diff).sum(axis=-1).mean()


def batch_losses(model: SurpriseModel, node_inputs: np.ndarray, global_frames: np.ndarray,
                 temperature: float, with_cpc_grad: bool = True) -> tuple[Tensor, Tensor, Tensor]:
    """Reconstruction, contrastive and next-step alignment losses for a (B, T, ...) batch.

    Contrastive candidates are every latent of every crop in the batch. The
    alignment loss regresses the one-step head onto the next latent so that
    its squared error is a meaningful surprise signal.
    """
    b, t = node_inputs.shape[:2]
    z = model.latents(node_inputs)  # (T, B, D)
    h = model.gru.unroll(z)  # (T, B, H)

    target = Tensor(np.swapaxes(global_frames, 0, 1)[1:])  # (T-1, B, 4d)
    l_recon = recon_loss(model.heads.reconstruct(h[:-1]), target)

    pool = z.reshape(t * b, -1)
    h_cpc = h if with_cpc_grad else h.detach()
    pool_cpc = pool if with_cpc_grad else pool.detach()
    preds, positives = [], []
    for k in range(1, model.config.horizons + 1):
        pred = model.heads.predict(h_cpc[: t - k].reshape((t - k) * b, -1), k, pool_cpc[: (t - k) * b])
        idx = (np.arange(k, t)[:, None] * b + np.arange(b)[None, :]).reshape(-1)
        preds.append(pred)
        positives.append(idx)
    l_cpc = infonce_loss(preds, positives, pool_cpc, temperature)
    l_align = align_loss(preds[0], pool[b:])
    return l_recon, l_cpc, l_align


def make_crops(clips: Sequence[CompressedClip], seq_len: int, gen: np.random.Generator
               ) -> list[tuple[int, int]]:
    """(clip index, start frame) for every crop of one epoch, in shuffled order."""
    crops = []
    for ci, clip in enumerate(clips):
        n = clip.n_frames // seq_len
        if n == 0:
            continue
        offset = int(gen.integers(0, clip.n_frames - n * seq_len + 1))
        crops.extend((ci, offset + j * seq_len) for j in range(n))
    order = gen.permutation(len(crops))
    return [crops[i] for i in order]


def train(corpus: Sequence[AmbisonicsClip], config: TrainConfig = TrainConfig(),
          model: SurpriseModel | None = None, start_epoch: int = 1,
          optimizer: OptimizerState | None = None) -> TrainResult:
    """Minimise ``w_recon * L_recon + w_cpc * L_cpc`` with Adam under the curriculum."""
    config.validate()
    if not corpus:
        raise ConfigError("training corpus is empty")
    model = model or SurpriseModel(config.model)
    for clip in corpus:
        if clip.sample_rate != model.config.sample_rate:
            raise ConfigError(f"clip sample rate {clip.sample_rate} != {model.config.sample_rate}")
    prepared = [model.prepare(c) for c in corpus]
    if all(p.n_frames < config.seq_len for p in prepared):
        raise ConfigError("no clip is long enough for one training crop")

    checksum = model.compressor.checksum()
    names = list(model.params)
    state = optimizer or OptimizerState.for_params([model.params[n].data for n in names], lr=config.lr,
                                                  beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history: list[EpochRecord] = []
    grad_nonzero = {n: False for n in names}

    for epoch in range(start_epoch, start_epoch + config.epochs):
        w_recon, w_cpc = curriculum_weights(epoch)
        gen = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
        crops = make_crops(prepared, config.seq_len, gen)
        sums = np.zeros(2)
        count = 0
        for start in range(0, len(crops), config.batch_size):
            chunk = crops[start: start + config.batch_size]
            nodes = np.stack([prepared[c].node_inputs[s: s + config.seq_len] for c, s in chunk])
            frames = np.stack([prepared[c].global_frames[s: s + config.seq_len] for c, s in chunk])
            params = model.params
            for p in params.values():
                p.grad = None
            l_recon, l_cpc, l_align = batch_losses(model, nodes, frames, config.temperature,
                                                   with_cpc_grad=w_cpc > 0)
            total = l_recon * w_recon
            if w_cpc > 0:
                total = total + l_cpc * w_cpc + l_align * (w_cpc * config.align_weight)
            if not math.isfinite(total.item()):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            total.backward()
            grads = [params[n].grad for n in names]
            if w_recon > 0 and w_cpc > 0:
                for n, g in zip(names, grads):
                    if g is not None and np.any(g != 0):
                        grad_nonzero[n] = True
            clip_grad_norm(grads, config.clip_norm)
            new_values, state = adam_step([params[n].data for n in names], grads, state)
            for n, v in zip(names, new_values):
                params[n].data = v
            sums += (l_recon.item(), l_cpc.item())
            count += 1
        record = EpochRecord(epoch, w_recon, w_cpc, float(sums[0] / count), float(sums[1] / count))
        history.append(record)
        log.info("epoch %d  w=(%.1f, %.1f)  recon=%.5f  cpc=%.4f", epoch, w_recon, w_cpc,
                 record.recon_loss, record.cpc_loss)
        if model.compressor.checksum() != checksum:
            raise NumericalError("compressor matrix changed during training")
    return TrainResult(model, history, state, checksum, grad_nonzero)


def save_training(result: TrainResult, checkpoint: str | Path, loss_csv: str | Path, config: TrainConfig) -> None:
    last_epoch = result.history[-1].epoch if result.history else 0
    extra = {"curriculum_epoch": last_epoch, "train_config": _jsonable(asdict(config)),
             "optimizer_step": result.optimizer.step}
    result.model.save(checkpoint, extra)
    Path(loss_csv).write_text(result.loss_csv())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj
