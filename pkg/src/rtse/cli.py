"""Command-line entry point: ``rtse {mix,train,enhance,eval,sweep}``.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path
from typing import Sequence

import numpy as np

from rtse.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from rtse.config import RunConfig
from rtse.data import MixingDataset, TripletDataset, load_clips, load_triplets, write_mixes
from rtse.dsp import FrameConfig, stft
from rtse.errors import ConfigError, DataError, RtseError
from rtse.metrics import EvalReport, evaluate
from rtse.pipeline import Enhancer, enhance_stream, model_enhance_offline, model_gains, oracle_enhance
from rtse.training.batches import Dataset
from rtse.training.bptt import LossParts
from rtse.training.losses import loss_noise, loss_speech
from rtse.training.loop import TrainState, train
from rtse.training.vad import vad_mask
from rtse.wavio import SAMPLE_RATE, read_wav, write_wav

log = logging.getLogger("rtse")

CHECKPOINT_NAME = "model.ckpt"
LOG_NAME = "train_log.csv"


# -- mix --------------------------------------------------------------------


def cmd_mix(manifest, out_dir, snr_set: Sequence[float] = (40, 30, 20, 10, 0), count: int = 100, seed: int = 0,
            duration_s: float = 10.0, level_db: float = -25.0) -> list[dict]:
    speech, noise = load_clips(manifest)
    if not speech or not noise:
        raise DataError(f"{manifest} needs at least one speech and one noise entry")
    ds = MixingDataset(speech, noise, snr_set, level_db)
    return write_mixes(out_dir, ds, count, duration_s, seed)


# -- train ------------------------------------------------------------------


def dataset_from_config(cfg: RunConfig) -> Dataset:
    if cfg.dataset:
        return TripletDataset(load_triplets(cfg.dataset))
    if cfg.manifest:
        speech, noise = load_clips(cfg.manifest)
        return MixingDataset(speech, noise, cfg.snr_set, cfg.level_db)
    raise ConfigError("training needs either 'dataset' (mixed triplets) or 'manifest' (raw clips)")


def make_checkpoint(cfg: RunConfig, state: TrainState, frame_cfg: FrameConfig = FrameConfig()) -> Checkpoint:
    meta = {"steps": state.step, "loss": cfg.loss, "alpha": cfg.alpha, "beta_db": cfg.beta_db,
            "seed": cfg.seed, "config": cfg.to_dict()}
    return Checkpoint(frame_cfg, cfg.feature_kind(), state.params, state.stats, meta, state.opt)


def cmd_train(cfg: RunConfig, dataset: Dataset | None = None) -> Checkpoint:
    """Train from scratch (or resume) and write ``model.ckpt`` and ``train_log.csv`` under ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    dataset = dataset if dataset is not None else dataset_from_config(cfg)
    frame_cfg = FrameConfig()

    resume = None
    if cfg.resume:
        ck = load_checkpoint(cfg.resume)
        if ck.optimizer is None:
            raise DataError(f"{cfg.resume} holds no optimizer state and cannot be resumed")
        if ck.params.hidden_sizes[0] != cfg.hidden or ck.kind != cfg.feature_kind():
            raise ConfigError("resume checkpoint does not match the configured model/features")
        resume = TrainState(ck.params, ck.optimizer, ck.stats, int(ck.meta["steps"]))

    def periodic(state: TrainState) -> None:
        save_checkpoint(out / f"ckpt_step{state.step:06d}.ckpt", make_checkpoint(cfg, state, frame_cfg))

    state = train(dataset, cfg.loss_config(), steps=cfg.steps, seed=cfg.seed, hidden=cfg.hidden, lr=cfg.lr,
                  seq_len_seconds=cfg.seq_len_seconds, batch_seconds=cfg.batch_seconds, frame_cfg=frame_cfg,
                  kind=cfg.feature_kind(), stats_batches=cfg.stats_batches, log_path=out / LOG_NAME,
                  resume=resume, deterministic=cfg.deterministic, checkpoint_every=cfg.checkpoint_every,
                  on_checkpoint=periodic)
    ckpt = make_checkpoint(cfg, state, frame_cfg)
    save_checkpoint(out / CHECKPOINT_NAME, ckpt)
    return ckpt


# -- enhance ----------------------------------------------------------------


def enhancer_from_checkpoint(ckpt: Checkpoint) -> Enhancer:
    return Enhancer(ckpt.params, ckpt.frame_cfg, ckpt.kind, ckpt.stats)


def cmd_enhance(checkpoint, input_wav, output_wav, chunk_size: int | None = None) -> dict:
    """Enhance one file through the streaming path; returns timing and clipping stats."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    enh = enhancer_from_checkpoint(ckpt)
    x = read_wav(input_wav)
    step = chunk_size or max(len(x), 1)
    t0 = time.perf_counter()
    y = enhance_stream(enh, (x[i : i + step] for i in range(0, len(x), step)), len(x))
    elapsed = time.perf_counter() - t0
    write_wav(output_wav, y)
    duration = len(x) / SAMPLE_RATE
    return {"seconds": duration, "rtf": elapsed / duration if duration else 0.0, "clipped": enh.clipped}


def enhance_raw_stream(ckpt: Checkpoint, fin, fout, chunk_samples: int = 1024) -> dict:
    """Raw 16-bit little-endian mono PCM in, same format out, one chunk at a time."""
    enh = enhancer_from_checkpoint(ckpt)
    to_drop = enh.cfg.frame_len - enh.cfg.hop
    n_in = 0
    n_out = 0
    t0 = time.perf_counter()

    def emit(y):
        nonlocal to_drop, n_out
        if to_drop:
            cut = min(to_drop, len(y))
            y, to_drop = y[cut:], to_drop - cut
        y = y[: max(n_in - n_out, 0)]
        n_out += len(y)
        fout.write(np.clip(np.round(y * 32768.0), -32768, 32767).astype("<i2").tobytes())

    while True:
        raw = fin.read(chunk_samples * 2)
        if not raw:
            break
        x = np.frombuffer(raw[: len(raw) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
        n_in += len(x)
        emit(enh.process(x))
    emit(enh.flush())
    fout.flush()
    elapsed = time.perf_counter() - t0
    duration = n_in / SAMPLE_RATE
    return {"seconds": duration, "rtf": elapsed / duration if duration else 0.0, "clipped": enh.clipped}


# -- eval -------------------------------------------------------------------


def cmd_eval(checkpoint, dataset_dir, out_dir=None, scores=None, triplets=None) -> EvalReport:
    """Noisy passthrough, model (when a checkpoint is given) and oracle Wiener rows."""
    triplets = triplets if triplets is not None else load_triplets(dataset_dir)
    if not triplets:
        raise DataError("evaluation dataset is empty")
    methods = {}
    if checkpoint is not None:
        ck = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
        methods["model"] = lambda noisy, clean, noise: model_enhance_offline(ck.params, noisy, ck.frame_cfg,
                                                                             ck.kind, ck.stats)
    methods["oracle_wiener"] = lambda noisy, clean, noise: oracle_enhance(noisy, clean, noise)
    report = evaluate(triplets, methods)
    if scores:
        report.merge_scores(scores)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        (out / "summary.txt").write_text(report.summary_text())
    return report


# -- sweep ------------------------------------------------------------------


SWEEP_METRICS = {"si_sdr": max, "cd": min, "speech_distortion": min, "residual_noise": min}


def output_energies(ckpt: Checkpoint, triplets) -> tuple[float, float]:
    """Mean speech-distortion and residual-noise energies of the model's gains on each clip."""
    ls, ln = [], []
    for t in triplets:
        cfg = ckpt.frame_cfg
        S, N, X = (np.abs(stft(a, cfg)) for a in (t.clean, t.noise, t.noisy))
        g = model_gains(ckpt.params, X, cfg, ckpt.kind, ckpt.stats)
        ls.append(loss_speech(g, S, vad_mask(S, sample_rate_hz=cfg.sample_rate_hz, fft_size=cfg.fft_size)))
        ln.append(loss_noise(g, N))
    return float(np.mean(ls)), float(np.mean(ln))


def cmd_sweep(cfg: RunConfig, coefficient: str, values: Sequence[float], eval_triplets, out_dir,
              dataset: Dataset | None = None) -> list[dict]:
    """Train one model per alpha (fixed weighting) or beta_db (SNR weighting) and evaluate each."""
    if coefficient not in ("alpha", "beta_db"):
        raise ConfigError("sweep coefficient must be 'alpha' or 'beta_db'")
    if len(values) < 1:
        raise ConfigError("sweep needs at least one coefficient value")
    out = Path(out_dir)
    dataset = dataset if dataset is not None else dataset_from_config(cfg)
    family = "fixed_weighted" if coefficient == "alpha" else "snr_weighted"
    results = []
    for v in values:
        run_cfg = RunConfig.from_dict({**cfg.to_dict(), "loss": family, coefficient: float(v),
                                       "out": str(out / f"{coefficient}_{v:g}"), "resume": None})
        ckpt = cmd_train(run_cfg, dataset)
        report = cmd_eval(ckpt, None, out / f"{coefficient}_{v:g}" / "eval", triplets=eval_triplets)
        ls, ln = output_energies(ckpt, eval_triplets)
        results.append({"si_sdr": report.mean("model", "si_sdr"), "cd": report.mean("model", "cd"),
                        "speech_distortion": ls, "residual_noise": ln})
    rows = []
    for metric, pick in SWEEP_METRICS.items():
        vals = [r[metric] for r in results]
        best = vals.index(pick(vals))
        for i, v in enumerate(values):
            rows.append({"coefficient": coefficient, "value": float(v), "metric": metric, "score": vals[i],
                         "optimal": int(i == best)})
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["coefficient", "value", "metric", "score", "optimal"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": f"{r['value']:g}", "score": f"{r['score']:.6f}"})
    return rows


# -- argument parsing -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_run_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "deterministic":
            p.add_argument(flag, action="store_true", default=None)
        elif f.name == "snr_set":
            p.add_argument(flag, type=_floats, default=None)
        else:
            typ = type(f.default) if isinstance(f.default, (int, float)) else str
            choices = {"feature": ["mag", "lps"], "norm": ["global", "fd", "fi", "none"],
                       "loss": ["mse", "fixed_weighted", "snr_weighted"]}.get(f.name)
            p.add_argument(flag, type=typ, default=None, choices=choices)


def _run_config(args) -> RunConfig:
    base = RunConfig.from_file(args.config).to_dict() if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    return RunConfig.from_dict(base)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mix", help="synthesize noisy/clean/noise triplets from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--snr-set", type=_floats, default=[40.0, 30.0, 20.0, 10.0, 0.0])
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=10.0, help="seconds per mix")
    p.add_argument("--level-db", type=float, default=-25.0)

    p = sub.add_parser("train", help="train a gain estimator")
    _add_run_config_flags(p)

    p = sub.add_parser("enhance", help="enhance a WAV file, or raw PCM on stdin with '-'")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="16 kHz mono WAV, or '-' for raw s16le on stdin")
    p.add_argument("--output", required=True, help="WAV path, or '-' for raw s16le on stdout")
    p.add_argument("--chunk-size", type=int, default=None, help="feed the file in chunks of N samples")

    p = sub.add_parser("eval", help="objective evaluation on a mixed dataset")
    p.add_argument("--checkpoint", help="model to score; omit for noisy and oracle rows only")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scores", help="CSV of external scores (clip_id, method, metric columns)")

    p = sub.add_parser("sweep", help="train/evaluate over alpha or beta values")
    _add_run_config_flags(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--alphas", type=_floats)
    group.add_argument("--betas", type=_floats, help="beta values in dB")
    p.add_argument("--eval-dataset", required=True, help="mixed dataset directory for evaluation")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mix":
            rows = cmd_mix(args.manifest, args.out_dir, args.snr_set, args.count, args.seed, args.duration,
                           args.level_db)
            print(f"wrote {len(rows)} mixes to {args.out_dir}")
        elif args.command == "train":
            cfg = _run_config(args)
            print(json.dumps(cfg.to_dict(), sort_keys=True))
            ckpt = cmd_train(cfg)
            print(f"trained {ckpt.meta['steps']} steps -> {Path(cfg.out) / CHECKPOINT_NAME}")
        elif args.command == "enhance":
            if args.input == "-" or args.output == "-":
                if args.input != "-" or args.output != "-":
                    raise ConfigError("stream mode needs both --input - and --output -")
                stats = enhance_raw_stream(load_checkpoint(args.checkpoint), sys.stdin.buffer, sys.stdout.buffer)
            else:
                stats = cmd_enhance(args.checkpoint, args.input, args.output, args.chunk_size)
            print(f"processed {stats['seconds']:.2f} s, real-time factor {stats['rtf']:.3f}, "
                  f"clipped samples {stats['clipped']}", file=sys.stderr)
        elif args.command == "eval":
            report = cmd_eval(args.checkpoint, args.dataset, args.out_dir, args.scores)
            print(report.summary_text(), end="")
        elif args.command == "sweep":
            cfg = _run_config(args)
            coef, values = ("alpha", args.alphas) if args.alphas else ("beta_db", args.betas)
            if len(values) < 2:
                raise ConfigError("a sweep needs at least two coefficient values")
            rows = cmd_sweep(cfg, coef, values, load_triplets(args.eval_dataset), cfg.out)
            print(f"wrote {len(rows)} rows to {Path(cfg.out) / 'sweep.csv'}")
    except RtseError as exc:
        print(f"rtse: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
