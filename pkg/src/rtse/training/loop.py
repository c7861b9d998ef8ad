"""Training loop: Adam on BPTT gradients, CSV logging, checkpoints and resume."""
from __future__ import annotations

import contextlib
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from rtse.dsp import FrameConfig
from rtse.errors import NumericError
from rtse.features import FeatureKind, GlobalStats, accumulate_global
from rtse.model import ModelParams, init_params
from rtse.training.batches import Batch, Dataset, batch_rng, draw_batch
from rtse.training.bptt import LossParts, backward
from rtse.training.losses import LossConfig
from rtse.training.optim import AdamState, adam_update

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "loss", "l_speech", "l_noise", "alpha", "grad_norm")


@dataclass
class StepResult:
    parts: LossParts
    grad_norm: float

    @property
    def loss(self) -> float:
        return self.parts.loss


def train_step(params: ModelParams, batch: Batch, loss_cfg: LossConfig,
               opt: AdamState) -> tuple[ModelParams, AdamState, StepResult]:
    grads, parts = backward(params, batch, loss_cfg)
    grad_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if not np.isfinite(grad_norm):
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise NumericError(f"non-finite gradients in {', '.join(bad)}; step aborted")
    arrays, opt = adam_update(params.arrays(), grads, opt)
    return ModelParams.from_arrays(arrays, params.version), opt, StepResult(parts, grad_norm)


def estimate_global_stats(dataset: Dataset, seed: int, n_batches: int, seq_len_seconds: float,
                          frame_cfg: FrameConfig, kind: FeatureKind, batch_seconds: float = 60.0) -> GlobalStats:
    """Per-bin moments of un-normalized features over ``n_batches`` seeded draws."""
    raw = FeatureKind(kind.transform, "none", kind.tau)
    stats = GlobalStats.empty(frame_cfg.n_bins)
    for i in range(n_batches):
        batch = draw_batch(dataset, np.random.default_rng([seed, 0, i]), seq_len_seconds, frame_cfg, raw,
                           batch_seconds=batch_seconds)
        stats = accumulate_global(stats, batch.features.reshape(-1, frame_cfg.n_bins))
    return stats


def format_row(step: int, res: StepResult) -> list[str]:
    p = res.parts
    return [str(step), *(f"{v:.10g}" for v in (p.loss, p.l_speech, p.l_noise, p.alpha, res.grad_norm))]


def read_log(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


@dataclass
class TrainState:
    params: ModelParams
    opt: AdamState
    stats: GlobalStats | None
    step: int = 0


def train(dataset: Dataset, loss_cfg: LossConfig, *, steps: int, seed: int = 0, hidden: int = 256,
          lr: float = 1e-3, seq_len_seconds: float = 10.0, batch_seconds: float = 60.0,
          frame_cfg: FrameConfig = FrameConfig(), kind: FeatureKind = FeatureKind(), stats_batches: int = 4,
          log_path=None, resume: TrainState | None = None, deterministic: bool = False,
          checkpoint_every: int = 0, on_checkpoint: Callable[[TrainState], None] | None = None) -> TrainState:
    """Run (or continue) training up to ``steps`` total steps.

    Batch ``i`` is drawn from a generator seeded with ``(seed, i)``, so a
    resumed run follows exactly the trajectory of an uninterrupted one.
    """
    limits = threadpool_limits(1) if deterministic else contextlib.nullcontext()
    with limits:
        if resume is None:
            stats = None
            if kind.normalization == "global":
                stats = estimate_global_stats(dataset, seed, stats_batches, seq_len_seconds, frame_cfg, kind,
                                              batch_seconds)
            state = TrainState(init_params(seed, hidden, frame_cfg.n_bins), AdamState(lr=lr), stats, 0)
        else:
            state = resume

        fh = None
        writer = None
        if log_path is not None:
            log_path = Path(log_path)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            keep = []
            if state.step > 0 and log_path.exists():
                with open(log_path, newline="") as old:
                    keep = [r for r in list(csv.reader(old))[1:] if int(r[0]) < state.step]
            fh = open(log_path, "w", newline="")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_COLUMNS)
            writer.writerows(keep)
        try:
            while state.step < steps:
                batch = draw_batch(dataset, batch_rng(seed, state.step), seq_len_seconds, frame_cfg, kind,
                                   state.stats, batch_seconds, loss_cfg.vad)
                params, opt, res = train_step(state.params, batch, loss_cfg, state.opt)
                state = TrainState(params, opt, state.stats, state.step + 1)
                if writer is not None:
                    writer.writerow(format_row(state.step - 1, res))
                    fh.flush()
                if state.step % 50 == 0:
                    log.info("step %d loss %.6g", state.step, res.loss)
                if checkpoint_every and on_checkpoint and state.step % checkpoint_every == 0:
                    on_checkpoint(state)
        finally:
            if fh is not None:
                fh.close()
    return state
