"""Command line entry point: ``flashflow <command> [options]``.

Every command resolves its configuration (JSON file, then flag overrides),
writes it to a run manifest before doing any work, and exits with
0 on success, 2 on a configuration error, 3 on a non-finite value and
4 when an input artifact is missing.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from flashflow import __version__, checkpoint, clipio, evaluation, fourier, paradigms, synth
from flashflow.latents import Codec
from flashflow.model import Denoiser
from flashflow.samplers import OracleField, SamplerConfig, initial_noise, sample
from flashflow.training import LatentDataset, TrainConfig, Trainer, model_config_for

log = logging.getLogger("flashflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4
SPLITS = ("in_domain", "out_of_domain")


class ConfigError(Exception):
    pass


class MissingArtifact(Exception):
    pass


@dataclass
class Paths:
    data_dir: str | None = None
    checkpoint: str | None = None
    checkpoint_dir: str | None = None
    report_out: str | None = None
    out_dir: str | None = None
    image: str | None = None
    generated: str | None = None
    reference: str | None = None


@dataclass
class RunConfig:
    split: synth.SplitConfig = field(default_factory=synth.SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    paths: Paths = field(default_factory=Paths)
    # command-specific knobs
    paradigms: list[str] = field(default_factory=lambda: list(paradigms.PARADIGMS))
    eval_videos: int = 16
    model_dim: int = 64
    model_depth: int = 3
    oracle: bool = False
    motion_class: int = 0
    percentiles: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    frame: int = 0

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["train"]["cutoff_percentile_range"] = list(self.train.cutoff_percentile_range)
        return out


_SECTIONS = {"split": synth.SplitConfig, "train": TrainConfig, "sampler": SamplerConfig, "paths": Paths}


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig, rejecting any key it does not know."""
    if "command" in data and "config" in data:  # a run manifest
        data = data["config"]
    unknown = set(data) - _fields(RunConfig)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = RunConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            bad = set(value) - _fields(_SECTIONS[key])
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {', '.join(sorted(bad))}")
            if key == "train" and "cutoff_percentile_range" in value:
                value = {**value, "cutoff_percentile_range": tuple(value["cutoff_percentile_range"])}
            setattr(cfg, key, dataclasses.replace(getattr(cfg, key), **value))
        else:
            setattr(cfg, key, value)
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise MissingArtifact(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data)


# flag name -> (section or None, field)
_OVERRIDES = {
    "split": ("split", "split"),
    "num_videos": ("split", "num_videos"),
    "frames": ("split", "frames"),
    "height": ("split", "height"),
    "width": ("split", "width"),
    "data_seed": ("split", "rng_seed"),
    "lr": ("train", "learning_rate"),
    "batch_size": ("train", "batch_size"),
    "train_steps": ("train", "steps"),
    "train_seed": ("train", "rng_seed"),
    "paradigm": ("sampler", "paradigm"),
    "steps": ("sampler", "steps"),
    "guidance": ("sampler", "guidance"),
    "shift": ("sampler", "shift"),
    "cutoff": ("sampler", "cutoff_percentile"),
    "seed": ("sampler", "rng_seed"),
    "data_dir": ("paths", "data_dir"),
    "checkpoint": ("paths", "checkpoint"),
    "checkpoint_dir": ("paths", "checkpoint_dir"),
    "out": ("paths", "report_out"),
    "out_dir": ("paths", "out_dir"),
    "image": ("paths", "image"),
    "generated": ("paths", "generated"),
    "reference": ("paths", "reference"),
    "eval_videos": (None, "eval_videos"),
    "dim": (None, "model_dim"),
    "depth": (None, "model_depth"),
    "oracle": (None, "oracle"),
    "motion_class": (None, "motion_class"),
    "percentiles": (None, "percentiles"),
    "frame": (None, "frame"),
    "paradigms": (None, "paradigms"),
}


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for flag, (section, name) in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None or value is False:
            continue
        if section is None:
            setattr(cfg, name, value)
        else:  # sections may be frozen
            setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **{name: value}))
    return cfg


def validate(cfg: RunConfig) -> None:
    try:
        cfg.train.validate()
        cfg.sampler.validate()
        if cfg.split.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        for name in cfg.paradigms:
            paradigms.info(name)
        if cfg.eval_videos < 2:
            raise ValueError("eval_videos must be >= 2 (covariances need two samples)")
        if not cfg.percentiles or not all(0 < p <= 1 for p in cfg.percentiles):
            raise ValueError("percentiles must be a nonempty list in (0, 1]")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_manifest(cfg: RunConfig, command: str, path: Path) -> Path:
    """Echo the fully resolved configuration before any work happens."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "version": __version__, "config": cfg.to_dict()}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"missing required path: {what}")
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} not found: {path}")
    return p


def _out_dir(cfg: RunConfig, default: str) -> Path:
    return Path(cfg.paths.out_dir or default)


def _dataset(cfg: RunConfig, split: str, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Clips of ``split``: from ``data_dir`` when given, otherwise rendered from the split config."""
    if cfg.paths.data_dir is not None:
        root = _require(cfg.paths.data_dir, "data directory")
        manifest = root / split / "manifest.tsv"
        if not manifest.exists():
            manifest = root / "manifest.tsv"
        if not manifest.exists():
            raise MissingArtifact(f"no manifest for split {split!r} under {root}")
        items = clipio.load_dataset(manifest, split)
        if not items:
            raise MissingArtifact(f"manifest {manifest} lists no {split} clips")
    else:
        split_cfg = dataclasses.replace(cfg.split, split=split)
        if count is not None:
            split_cfg = dataclasses.replace(split_cfg, num_videos=count)
        items = synth.make_dataset(split_cfg)
    if count is not None:
        items = items[:count]
    return synth.stack_dataset(items)


def _set_threads() -> int:
    threads = int(os.environ.get("FLASHFLOW_THREADS", "1") or 1)
    if threads < 1:
        raise ConfigError("FLASHFLOW_THREADS must be a positive integer")
    torch.set_num_threads(threads)
    return threads


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg, "data")
    write_manifest(cfg, "synth", out / "run_manifest.json")
    for split in SPLITS:
        items = synth.make_dataset(dataclasses.replace(cfg.split, split=split))
        manifest = clipio.save_dataset(out / split, items, split)
        print(f"{split}: {len(items)} clips -> {manifest}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    ckpt = Path(cfg.paths.checkpoint or f"{cfg.sampler.paradigm}.flck")
    write_manifest(cfg, "train", ckpt.with_suffix(".run.json"))
    videos, labels = _dataset(cfg, cfg.split.split)
    codec = Codec(videos.shape[1])
    torch.manual_seed(cfg.train.rng_seed)
    model = Denoiser(
        model_config_for(videos.shape, cfg.sampler.paradigm, dim=cfg.model_dim, depth=cfg.model_depth)
    )
    trainer = Trainer(model, cfg.train, codec)
    data = LatentDataset(videos, labels, codec)
    start = time.time()
    trainer.fit(data, log_every=50)
    checkpoint.save_trainer(ckpt, trainer)
    with open(ckpt.with_suffix(".loss.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss"])
        writer.writerows((i + 1, f"{v:.6g}") for i, v in enumerate(trainer.losses))
    losses = trainer.losses
    head, tail = np.mean(losses[:50]), np.mean(losses[-50:])
    print(f"{cfg.sampler.paradigm}: {len(losses)} steps in {time.time() - start:.0f}s, "
          f"loss {head:.4f} -> {tail:.4f}; checkpoint {ckpt}")
    return EXIT_OK


def _load_denoiser(path: Path) -> Denoiser:
    try:
        return checkpoint.load_model(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: unreadable checkpoint ({exc})") from None


def cmd_sample(cfg: RunConfig, explicit_paradigm: bool = False) -> int:
    """Without an explicit ``--paradigm`` the checkpoint's own paradigm is used."""
    ckpt = _require(cfg.paths.checkpoint, "checkpoint")
    image_path = _require(cfg.paths.image, "conditional image clip")
    out = Path(cfg.paths.report_out or "sample.flv")
    model = _load_denoiser(ckpt)
    if model.config.paradigm != cfg.sampler.paradigm:
        if explicit_paradigm:
            raise ConfigError(
                f"checkpoint was trained as {model.config.paradigm}, sampler asks for {cfg.sampler.paradigm}"
            )
        cfg.sampler.paradigm = model.config.paradigm
    write_manifest(cfg, "sample", out.with_suffix(".run.json"))
    clip = torch.from_numpy(clipio.read_clip(image_path))
    codec = Codec(clip.shape[0])
    video = sample(
        model, clip[None, :, 0], torch.tensor([cfg.motion_class]), cfg.sampler, model.config.frames, codec
    )[0].numpy()
    clipio.write_clip(out, video)
    if cfg.paths.out_dir:
        clipio.dump_frames(cfg.paths.out_dir, video)
    psnr = evaluation.first_frame_fidelity(video, clip[:, 0].numpy())
    print(f"wrote {out}; first-frame PSNR {psnr:.2f} dB")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    gen_manifest = _require(cfg.paths.generated, "generated manifest")
    ref_manifest = _require(cfg.paths.reference, "reference manifest")
    write_manifest(cfg, "eval", Path(cfg.paths.report_out or "eval.csv").with_suffix(".run.json"))
    gen, _ = synth.stack_dataset(clipio.load_dataset(gen_manifest))
    ref, _ = synth.stack_dataset(clipio.load_dataset(ref_manifest))
    if len(gen) == 0 or len(ref) == 0:
        raise MissingArtifact("generated or reference manifest lists no clips")
    report = evaluation.chunkwise_report(gen, ref, cfg.sampler.paradigm, cfg.split.split)
    if not all(np.isfinite(report.scores())):
        raise FloatingPointError(f"non-finite Fréchet score in {report.scores()}")
    text = evaluation.reports_to_csv([report])
    _emit(text, cfg.paths.report_out)
    return EXIT_OK


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    sys.stdout.write(text)


def compare(cfg: RunConfig, threads: int = 1) -> tuple[list[evaluation.ChunkReport], dict[str, str]]:
    """Sample every paradigm on both splits with shared noise and score chunk-wise against ground truth."""
    models: dict[str, object] = {}
    if not cfg.oracle:
        root = Path(cfg.paths.checkpoint_dir or ".")
        missing = [p for p in cfg.paradigms if not (root / f"{p}.flck").exists()]
        if missing:
            raise MissingArtifact(f"missing checkpoints for: {', '.join(missing)} (looked in {root})")
        models = {p: _load_denoiser(root / f"{p}.flck") for p in cfg.paradigms}

    data = {split: _dataset(cfg, split, cfg.eval_videos) for split in SPLITS}

    def job(paradigm: str, split: str) -> evaluation.ChunkReport:
        videos, labels = data[split]
        ref = torch.from_numpy(videos)
        codec = Codec(ref.shape[1])
        sampler = dataclasses.replace(cfg.sampler, paradigm=paradigm)
        if cfg.oracle:
            x = codec.encode(ref)
            model = OracleField(x, initial_noise(sampler.rng_seed, tuple(x.shape)))
        else:
            model = models[paradigm]
        gen = sample(model, ref[:, :, 0], torch.from_numpy(labels), sampler, ref.shape[2], codec)
        return evaluation.chunkwise_report(gen.numpy(), videos, paradigm, split)

    jobs = [(p, s) for p in cfg.paradigms for s in SPLITS]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(lambda ps: job(*ps), jobs))
    for r in reports:
        if not all(np.isfinite(r.scores())):
            raise FloatingPointError(f"non-finite score for {r.paradigm}/{r.split}: {r.scores()}")
    by_key = {(r.paradigm, r.split): r for r in reports}
    verdicts = {
        p: evaluation.pattern_classify(by_key[p, "in_domain"], by_key[p, "out_of_domain"]) for p in cfg.paradigms
    }
    return reports, verdicts


def cmd_compare(cfg: RunConfig, threads: int = 1) -> int:
    out = cfg.paths.report_out or "compare.csv"
    write_manifest(cfg, "compare", Path(out).with_suffix(".run.json"))
    reports, verdicts = compare(cfg, threads)
    _emit(evaluation.reports_to_csv(reports, verdicts), out)
    return EXIT_OK


def cmd_fourier_inspect(cfg: RunConfig) -> int:
    clip_path = _require(cfg.paths.image, "clip")
    out = _out_dir(cfg, "fourier")
    write_manifest(cfg, "fourier-inspect", out / "run_manifest.json")
    clip = clipio.read_clip(clip_path)
    if not 0 <= cfg.frame < clip.shape[1]:
        raise ConfigError(f"frame {cfg.frame} outside a {clip.shape[1]}-frame clip")
    frame = torch.from_numpy(clip[:, cfg.frame]).double()
    rows = []
    for p in cfg.percentiles:
        low, high = fourier.split_bands(frame, p)
        magnitude = high.abs()
        for ch in range(frame.shape[0]):
            clipio.write_pgm(out / f"p{p:.2f}_low_c{ch}.pgm", clipio.to_gray8(low[ch].numpy()))
            clipio.write_pgm(out / f"p{p:.2f}_high_c{ch}.pgm", clipio.to_gray8(magnitude[ch].numpy() * 2 - 1))
        spectrum = fourier.magnitude_map(fourier.dft2d(frame))
        cutoffs = [fourier.cutoff_frequency(spectrum[ch], p).item() for ch in range(frame.shape[0])]
        rows.append([p, float(np.mean(cutoffs)), float((magnitude**2).sum()), float((low**2).sum())])
    with open(out / "energy.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["percentile", "mean_cutoff", "high_energy", "low_energy"])
        writer.writerows([f"{v:.6g}" for v in row] for row in rows)
    print(f"wrote {len(cfg.percentiles)} percentiles to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flashflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", help="JSON run config or a previous run manifest")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("synth", help="render the in-domain and out-of-domain clip sets"))
    p.add_argument("--out-dir")
    p.add_argument("--num-videos", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--data-seed", type=int)

    p = common(sub.add_parser("train", help="train one paradigm and write a checkpoint"))
    p.add_argument("--paradigm", choices=paradigms.ALL_PARADIGMS)
    p.add_argument("--data-dir")
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--num-videos", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--train-steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-seed", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--depth", type=int)

    p = common(sub.add_parser("sample", help="generate a clip from the first frame of a clip file"))
    p.add_argument("--paradigm", choices=paradigms.ALL_PARADIGMS)
    p.add_argument("--checkpoint")
    p.add_argument("--image", help="clip file whose frame 0 is the conditional image")
    p.add_argument("--class", dest="motion_class", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--guidance", type=float)
    p.add_argument("--shift", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output clip file")
    p.add_argument("--out-dir", help="also dump PGM frames here")

    p = common(sub.add_parser("eval", help="chunk-wise Fréchet report of generated vs reference clips"))
    p.add_argument("--generated")
    p.add_argument("--reference")
    p.add_argument("--paradigm", choices=paradigms.ALL_PARADIGMS)
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--out")

    p = common(sub.add_parser("compare", help="chunk-wise report for every paradigm on both splits"))
    p.add_argument("--checkpoint-dir", help="holds <Paradigm>.flck for each paradigm")
    p.add_argument("--data-dir")
    p.add_argument("--paradigms", nargs="+", choices=paradigms.ALL_PARADIGMS)
    p.add_argument("--eval-videos", type=int)
    p.add_argument("--oracle", action="store_true", help="dry run with a perfect-transport denoiser")
    p.add_argument("--steps", type=int)
    p.add_argument("--guidance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = common(sub.add_parser("fourier-inspect", help="band-split images and energy table of one frame"))
    p.add_argument("--image", help="clip file")
    p.add_argument("--frame", type=int)
    p.add_argument("--percentiles", type=float, nargs="+")
    p.add_argument("--out-dir")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "fourier-inspect": cmd_fourier_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        threads = _set_threads()
        cfg = apply_overrides(load_config(args.config), args)
        validate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, threads)
        if args.command == "sample":
            return cmd_sample(cfg, explicit_paradigm=args.paradigm is not None)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
