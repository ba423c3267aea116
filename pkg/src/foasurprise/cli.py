"""Command-line pipeline: synth-corpus, train, score, simulate, evaluate."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .ambisonics import SceneScript, read_foa, render_scene, write_foa
from .ambisonics.synth import session_scene, training_scene
from .errors import ConfigError, DataError, FoaSurpriseError, NumericalError
from .model import ModelConfig, SurpriseModel
from .surprise import DetectionPolicy, score_clip
from .training import TrainConfig, save_training, train
from .viewport import (STRATEGIES, GateParams, HeadTrace, SessionInputs, TilingConfig, pool_metrics,
                       simulate_session, synth_head_trace, tune_gate)

log = logging.getLogger("foasurprise")


# -- configuration -------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CorpusSection(_Strict):
    n_train: int = Field(6, ge=0)
    train_duration: float = Field(10.0, gt=0)
    n_validation: int = Field(5, ge=0)
    n_sessions: int = Field(20, ge=0)
    session_duration: float = Field(20.0, gt=0)
    events_per_session: int = Field(2, ge=1)
    rear_events: bool = True
    ambient: float = Field(0.01, ge=0)
    latency: float = Field(0.3, ge=0)
    turn_speed_deg: float = Field(120.0, gt=0)


class TrainSection(_Strict):
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
    hidden: int = 128
    horizons: int = 3
    coeffs: int = 8
    input_floor: float = 0.01


class TilingSection(_Strict):
    rows: int = 4
    cols: int = 8
    fov_deg: tuple[float, float] = (100.0, 100.0)
    high_mbps: float = 0.45
    low_mbps: float = 0.05


class GateSection(_Strict):
    grid_lambda: list[float] = [0.0, 100.0, 300.0, 1000.0, 3000.0]
    grid_beta: list[float] = [-6.0, -3.0, 0.0]
    lam: Optional[float] = None  # fixed gate; skips tuning when both are given
    beta: Optional[float] = None


class SimulateSection(_Strict):
    horizon: float = Field(1.0, ge=0)
    strategies: list[str] = list(STRATEGIES)


class DetectionSection(_Strict):
    window_s: float = 1.0
    k_sigma: float = 2.0
    min_ratio: float = 5.0
    refractory_s: float = 0.25
    warmup_s: float = 0.25
    direction_mode: str = "intensity"


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    corpus: CorpusSection = CorpusSection()
    train: TrainSection = TrainSection()
    tiling: TilingSection = TilingSection()
    gate: GateSection = GateSection()
    simulate: SimulateSection = SimulateSection()
    detection: DetectionSection = DetectionSection()

    def train_config(self) -> TrainConfig:
        t = self.train
        model = ModelConfig(coeffs=t.coeffs, hidden=t.hidden, horizons=t.horizons, seed=self.seed,
                            input_floor=t.input_floor)
        return TrainConfig(seq_len=t.seq_len, batch_size=t.batch_size, epochs=t.epochs, temperature=t.temperature,
                           lr=t.lr, beta1=t.beta1, beta2=t.beta2, eps=t.eps, clip_norm=t.clip_norm,
                           align_weight=t.align_weight, seed=self.seed, model=model)

    def tiling_config(self) -> TilingConfig:
        t = self.tiling
        return TilingConfig(t.rows, t.cols, tuple(t.fov_deg), t.high_mbps, t.low_mbps)

    def policy(self) -> DetectionPolicy:
        d = self.detection
        return DetectionPolicy(window_s=d.window_s, k_sigma=d.k_sigma, min_ratio=d.min_ratio,
                               refractory_s=d.refractory_s, warmup_s=d.warmup_s)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def load_config(path: str | None, seed: int | None) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        config = RunConfig.model_validate(data)
        if seed is not None:
            config = config.model_copy(update={"seed": seed})
            RunConfig.model_validate(config.model_dump())
    except pydantic.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return config


# -- helpers -------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_run_record(out: Path, command: str, config: RunConfig, args: argparse.Namespace, outputs: list[str]) -> None:
    record = {
        "command": command,
        "config_sha256": hashlib.sha256(config.canonical_json().encode()).hexdigest(),
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "threads": args.threads,
        "versions": {"foasurprise": __version__, "numpy": np.__version__, "pydantic": pydantic.__version__,
                     "python": platform.python_version()},
        "outputs": sorted(outputs),
    }
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def _session_paths(corpus: Path, split: str) -> list[Path]:
    return sorted((corpus / split).glob("*.scene.json"))


def _load_session(scene_path: Path) -> tuple[SceneScript, HeadTrace, Path]:
    stem = scene_path.name[: -len(".scene.json")]
    head_path = scene_path.with_name(f"{stem}.head.json")
    if not head_path.exists():
        raise DataError(f"missing head trace {head_path}")
    return SceneScript.load(scene_path), HeadTrace.load(head_path), scene_path.with_name(f"{stem}.foa")


def _load_model(path: str | None) -> SurpriseModel | None:
    if path is None:
        return None
    model, _ = SurpriseModel.load(path)
    return model


def _session_inputs(corpus: Path, split: str, model: SurpriseModel | None, policy: DetectionPolicy,
                    mode: str, threads: int) -> list[tuple[str, SessionInputs]]:
    paths = _session_paths(corpus, split)

    def load(p: Path):
        scene, head, foa = _load_session(p)
        trace = score_clip(read_foa(foa), model, policy, mode) if model is not None else None
        return foa.stem, SessionInputs(scene, head, trace)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(load, paths))


# -- commands ------------------------------------------------------------------

def cmd_synth_corpus(config: RunConfig, args) -> list[str]:
    c = config.corpus
    if c.n_train + c.n_validation + c.n_sessions == 0:
        raise ConfigError("corpus would contain no clips")
    out = _out_dir(args.out)
    written: list[Path] = []
    for i in range(c.n_train):
        scene = training_scene(config.seed * 1_000_003 + i, c.train_duration, c.ambient)
        stem = out / "train" / f"clip_{i:03d}"
        stem.parent.mkdir(exist_ok=True)
        write_foa(stem.with_suffix(".foa"), render_scene(scene))
        scene.save(stem.with_suffix(".scene.json"))
        written += [stem.with_suffix(".foa"), stem.with_suffix(".foa.json"), stem.with_suffix(".scene.json")]
    for split, count, base in (("validation", c.n_validation, 500_000), ("sessions", c.n_sessions, 0)):
        for i in range(count):
            scene = session_scene(config.seed * 1_000_003 + base + i, c.session_duration, c.events_per_session,
                                  c.rear_events, config.tiling.fov_deg[0], c.ambient)
            head = synth_head_trace(scene, c.latency, c.turn_speed_deg)
            stem = out / split / f"session_{i:03d}"
            stem.parent.mkdir(exist_ok=True)
            write_foa(stem.with_suffix(".foa"), render_scene(scene))
            scene.save(stem.with_suffix(".scene.json"))
            head.save(stem.with_suffix(".head.json"))
            written += [stem.with_suffix(s) for s in (".foa", ".foa.json", ".scene.json", ".head.json")]
    manifest = {
        "seed": config.seed,
        "counts": {"train": c.n_train, "validation": c.n_validation, "sessions": c.n_sessions},
        "files": [{"path": str(p.relative_to(out)), "sha256": _sha256(p)} for p in sorted(written)],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return ["manifest.json"] + [str(p.relative_to(out)) for p in written]


def cmd_train(config: RunConfig, args) -> list[str]:
    corpus = Path(args.corpus)
    paths = sorted((corpus / "train").glob("*.foa"))
    if not paths:
        raise DataError(f"no training clips under {corpus / 'train'}")
    out = _out_dir(args.out)
    result = train([read_foa(p) for p in paths], config.train_config())
    save_training(result, out / "model.ckpt", out / "loss.csv", config.train_config())
    return ["model.ckpt", "loss.csv"]


def cmd_score(config: RunConfig, args) -> list[str]:
    model = _load_model(args.checkpoint)
    out = _out_dir(args.out)
    trace = score_clip(read_foa(args.clip), model, config.policy(), args.mode or config.detection.direction_mode)
    trace.save(out / "trace.csv", out / "events.json")
    return ["trace.csv", "events.json"]


def resolve_gate(config: RunConfig, validation: list[SessionInputs], tiling: TilingConfig) -> GateParams:
    g = config.gate
    if g.lam is not None and g.beta is not None:
        return GateParams(g.lam, g.beta)
    grid = [(lam, beta) for lam in g.grid_lambda for beta in g.grid_beta]
    if not validation:
        raise DataError("gate tuning needs validation sessions (or set gate.lam and gate.beta)")
    return tune_gate(validation, grid, tiling, config.simulate.horizon)


def cmd_simulate(config: RunConfig, args) -> list[str]:
    strategies = [args.strategy] if args.strategy else config.simulate.strategies
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    if "hybrid" in strategies and args.checkpoint is None:
        raise ConfigError("the hybrid strategy requires --checkpoint")
    model = _load_model(args.checkpoint) if "hybrid" in strategies else None
    corpus, out = Path(args.corpus), _out_dir(args.out)
    tiling, policy, mode = config.tiling_config(), config.policy(), config.detection.direction_mode
    sessions = _session_inputs(corpus, "sessions", model, policy, mode, args.threads)
    if not sessions:
        raise DataError(f"no sessions under {corpus / 'sessions'}")
    gate = GateParams()
    if "hybrid" in strategies:
        validation = [s for _, s in _session_inputs(corpus, "validation", model, policy, mode, args.threads)]
        gate = resolve_gate(config, validation, tiling)
    outputs = []
    for strategy in strategies:
        sdir = out / strategy
        sdir.mkdir(exist_ok=True)
        per_session = []
        for name, inputs in sessions:
            metrics = simulate_session(inputs, strategy, tiling, config.simulate.horizon, gate)
            metrics.save(sdir / f"{name}.json", sdir / f"{name}.csv")
            outputs += [f"{strategy}/{name}.json", f"{strategy}/{name}.csv"]
            per_session.append(metrics)
        pooled = pool_metrics(per_session, tiling)
        report = pooled.summary() | {"gate": {"lam": gate.lam, "beta": gate.beta} if strategy == "hybrid" else None,
                                     "n_sessions": len(per_session)}
        (out / f"{strategy}.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        outputs.append(f"{strategy}.json")
    return outputs


def cmd_evaluate(config: RunConfig, args) -> list[str]:
    reports_dir = Path(args.reports)
    out = _out_dir(args.out)
    reports = {}
    for strategy in STRATEGIES:
        path = reports_dir / f"{strategy}.json"
        if not path.exists():
            raise DataError(f"missing report {path}")
        reports[strategy] = json.loads(path.read_text())
    tor_s = {s: r["tor_surprise"] for s, r in reports.items()}
    tor_g = {s: r["tor_general"] for s, r in reports.items()}
    wasted = {s: r["wasted_bw_ratio"] for s, r in reports.items()}

    def gt(a, b):
        return a is not None and b is not None and a > b

    general = [v for v in tor_g.values() if v is not None]
    summary = {
        "strategies": {s: {"tor_general": tor_g[s], "tor_surprise": tor_s[s], "wasted_bw_ratio": wasted[s],
                           "bitrate_mbps": reports[s]["bitrate_mbps"],
                           "viewed_quality_ratio": reports[s]["viewed_quality_ratio"]} for s in STRATEGIES},
        "ordering": {
            "surprise_hybrid_gt_visual": gt(tor_s["hybrid"], tor_s["visual"]),
            "surprise_visual_gt_inertia": gt(tor_s["visual"], tor_s["inertia"]),
            "surprise_hybrid_margin_ge_0.15": gt(tor_s["hybrid"], None if tor_s["visual"] is None
                                                 else tor_s["visual"] + 0.15 - 1e-12),
            "wasted_hybrid_lt_visual": wasted["hybrid"] < wasted["visual"],
            "wasted_visual_lt_inertia": wasted["visual"] < wasted["inertia"],
            "general_within_0.1": bool(general) and max(general) - min(general) <= 0.1,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _write_csv(out / "tor.csv", ["strategy", "tor_general", "tor_surprise"],
               [[s, tor_g[s], tor_s[s]] for s in STRATEGIES])
    _write_csv(out / "bandwidth.csv", ["strategy", "bitrate_mbps", "wasted_bw_ratio", "viewed_quality_ratio"],
               [[s, reports[s]["bitrate_mbps"], wasted[s], reports[s]["viewed_quality_ratio"]] for s in STRATEGIES])
    return ["summary.json", "tor.csv", "bandwidth.csv"]


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([[("" if v is None else repr(v) if isinstance(v, float) else v) for v in row] for row in rows])
    path.write_text(buf.getvalue())


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "train": cmd_train,
    "score": cmd_score,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker cap")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="foasurprise", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth-corpus", parents=[common], help="write a synthetic corpus")
    p = sub.add_parser("train", parents=[common], help="train on corpus/train")
    p.add_argument("--corpus", required=True)
    p = sub.add_parser("score", parents=[common], help="surprise trace and events for one clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--mode", choices=["intensity", "latent"])
    p = sub.add_parser("simulate", parents=[common], help="streaming simulation over corpus/sessions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--strategy", choices=list(STRATEGIES))
    p = sub.add_parser("evaluate", parents=[common], help="summarise simulation reports")
    p.add_argument("--reports", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        config = load_config(args.config, args.seed)
        outputs = COMMANDS[args.command](config, args)
        write_run_record(Path(args.out), args.command, config, args, outputs)
    except FoaSurpriseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
