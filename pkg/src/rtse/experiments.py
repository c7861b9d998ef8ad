"""Desk-scale experiment presets shared by ``scripts/`` and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rtse.config import RunConfig
from rtse.data import MixingDataset, Triplet
from rtse.metrics import EvalReport
from rtse.model import init_params
from rtse.pipeline import Enhancer, enhance_signal
from rtse.toy import toy_corpus


@dataclass
class ToySetup:
    """Synthetic train/held-out split: harmonic pseudo-speech in white or babble-like noise."""

    seed: int = 0
    n_speech: int = 8
    n_noise: int = 4
    clip_seconds: float = 8.0
    snr_set: tuple[float, ...] = (0.0, 5.0, 10.0)
    eval_seed: int = 99
    eval_clips: int = 12
    eval_seconds: float = 4.0
    run: dict = field(default_factory=lambda: dict(hidden=64, seq_len_seconds=4.0, batch_seconds=16.0,
                                                   steps=1200, lr=3e-3, deterministic=True))

    def train_dataset(self) -> MixingDataset:
        speech, noise = toy_corpus(self.seed, self.n_speech, self.n_noise, self.clip_seconds)
        return MixingDataset(speech, noise, self.snr_set)

    def eval_triplets(self) -> list[Triplet]:
        # disjoint generator seed, so held-out sources never appear in training
        speech, noise = toy_corpus(self.eval_seed, 4, 4, self.clip_seconds)
        ds = MixingDataset(speech, noise, self.snr_set)
        n = int(round(self.eval_seconds * 16000))
        out = []
        for i in range(self.eval_clips):
            m = ds.draw_mix(np.random.default_rng([self.eval_seed, i]), n)
            out.append(Triplet(f"toy{i:03d}", m["snr_db"], m["noisy"], m["clean"], m["noise"]))
        return out

    def run_config(self, out, **overrides) -> RunConfig:
        return RunConfig(out=str(out), seed=self.seed, snr_set=self.snr_set, **{**self.run, **overrides})


def toy_end_to_end(setup: ToySetup, out_dir, **overrides) -> tuple[EvalReport, float]:
    """Train on the toy corpus, evaluate on the held-out mixes; returns (report, training seconds)."""
    from rtse.cli import cmd_eval, cmd_train

    cfg = setup.run_config(Path(out_dir) / "train", **overrides)
    t0 = time.perf_counter()
    ckpt = cmd_train(cfg, setup.train_dataset())
    elapsed = time.perf_counter() - t0
    return cmd_eval(ckpt, None, Path(out_dir) / "eval", triplets=setup.eval_triplets()), elapsed


def toy_sweep(setup: ToySetup, out_dir, alphas: Sequence[float], **overrides) -> list[dict]:
    from rtse.cli import cmd_sweep

    cfg = setup.run_config(out_dir, **overrides)
    return cmd_sweep(cfg, "alpha", alphas, setup.eval_triplets(), out_dir, setup.train_dataset())


def realtime_factor(hidden: int = 256, seconds: float = 10.0, chunk_size: int | None = 1024, seed: int = 0) -> float:
    """Streaming real-time factor of a randomly initialised model on white noise."""
    x = 0.1 * np.random.default_rng(seed).standard_normal(int(seconds * 16000))
    _, rtf = enhance_signal(Enhancer(init_params(seed, hidden=hidden)), x, chunk_size)
    return rtf
