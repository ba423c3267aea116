import numpy as np
import pytest

from foasurprise.ambisonics import render_scene
from foasurprise.ambisonics.synth import training_scene
from foasurprise.model import ModelConfig, SurpriseModel
from foasurprise.numerics import Tensor, grad_check
from foasurprise.training import TrainConfig, batch_losses, train


def _param_owners(model: SurpriseModel) -> dict[str, dict]:
    owners = {}
    for d in (model.encoder.layer1.params, model.encoder.layer2.params, model.gru.params, model.heads.params):
        owners.update({name: d for name in d})
    return owners


def model_grad_error(seed: int, coords_per_block: int = 2, seq_len: int = 5, batch: int = 2,
                     weights=(5.0, 0.2), hidden: int = 128) -> float:
    """grad_check of the full objective w.r.t. a random subset of every parameter block.

    The objective runs encoder -> ``seq_len``-step GRU -> prediction and
    reconstruction heads -> weighted reconstruction + contrastive losses. The
    alignment term is left out: its target is a stop-gradient constant, so
    its update direction is deliberately not the derivative of the loss value.
    """
    gen = np.random.default_rng(seed)
    model = SurpriseModel(ModelConfig(seed=seed, hidden=hidden))
    clip = render_scene(training_scene(seed, duration=0.5))
    prepared = model.prepare(clip)
    starts = gen.integers(0, prepared.n_frames - seq_len, size=batch)
    nodes = np.stack([prepared.node_inputs[s: s + seq_len] for s in starts])
    frames = np.stack([prepared.global_frames[s: s + seq_len] for s in starts])

    owners = _param_owners(model)
    base = {name: d[name].data.copy() for name, d in owners.items()}
    picks = {name: gen.choice(arr.size, size=min(coords_per_block, arr.size), replace=False)
             for name, arr in base.items()}
    sizes = [len(p) for p in picks.values()]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    point = np.concatenate([base[n].reshape(-1)[picks[n]] for n in picks])
    w_recon, w_cpc = weights

    def objective(x: Tensor) -> Tensor:
        for (name, idx), lo, hi in zip(picks.items(), offsets[:-1], offsets[1:]):
            scatter = np.zeros((len(idx), base[name].size))
            scatter[np.arange(len(idx)), idx] = 1.0
            frozen = base[name].reshape(-1).copy()
            frozen[idx] = 0.0
            delta = (x[lo:hi].reshape(1, -1) @ Tensor(scatter)).reshape(-1)
            owners[name][name] = (Tensor(frozen) + delta).reshape(*base[name].shape)
        l_recon, l_cpc, _ = batch_losses(model, nodes, frames, 0.5)
        return l_recon * w_recon + l_cpc * w_cpc

    return grad_check(objective, point, 1e-6)


@pytest.fixture(scope="session")
def tiny_corpus():
    return [render_scene(training_scene(100 + i, duration=2.0)) for i in range(2)]


@pytest.fixture(scope="session")
def tiny_trained(tiny_corpus):
    """A quickly trained small model (both curriculum phases)."""
    config = TrainConfig(seq_len=32, batch_size=8, epochs=7, seed=1, model=ModelConfig(seed=1, hidden=32))
    return train(tiny_corpus, config)



ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion, shown in the terminal summary."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
