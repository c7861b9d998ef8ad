"""Minibatches of fixed total duration split into equal-length sequences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Protocol

import numpy as np

from rtse.dsp import FrameConfig, stft
from rtse.errors import ConfigError
from rtse.features import FeatureKind, GlobalStats, sequence_features
from rtse.training.vad import VadConfig, vad_mask


class Dataset(Protocol):
    def draw(self, rng: np.random.Generator, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
        """Return time-aligned (clean, scaled noise) excerpts of ``n_samples``."""


@dataclass
class Batch:
    """Stacked sequences, all arrays laid out (sequence, frame, bin)."""

    features: np.ndarray
    noisy: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    sa_mask: np.ndarray  # (sequence, frame) bool
    seq_len_seconds: float

    @property
    def n_sequences(self) -> int:
        return self.clean.shape[0]

    @property
    def snr(self) -> np.ndarray:
        """Linear global SNR of each sequence on its magnitude spectra."""
        return (self.clean**2).sum(axis=(1, 2)) / (self.noise**2).sum(axis=(1, 2))


def sequences_per_batch(seq_len_seconds: float, batch_seconds: float = 60.0) -> int:
    if not seq_len_seconds > 0:
        raise ConfigError("seq_len_seconds must be positive")
    return max(1, int(round(batch_seconds / seq_len_seconds)))


def batch_from_signals(clean: np.ndarray, noise: np.ndarray, frame_cfg: FrameConfig, kind: FeatureKind,
                       stats: GlobalStats | None = None, vad: VadConfig = VadConfig(),
                       seq_len_seconds: float | None = None) -> Batch:
    """Build a batch from (sequences, samples) clean speech and noise waveforms."""
    clean = np.atleast_2d(clean)
    noise = np.atleast_2d(noise)
    S = np.stack([np.abs(stft(c, frame_cfg)) for c in clean])
    N = np.stack([np.abs(stft(n, frame_cfg)) for n in noise])
    X = np.stack([np.abs(stft(c + n, frame_cfg)) for c, n in zip(clean, noise)])
    feats = np.stack([sequence_features(x, kind, frame_cfg.hop_seconds, stats) for x in X])
    masks = np.stack([vad_mask(s, vad, frame_cfg.sample_rate_hz, frame_cfg.fft_size) for s in S])
    if seq_len_seconds is None:
        seq_len_seconds = clean.shape[1] / frame_cfg.sample_rate_hz
    return Batch(feats, X, S, N, masks, seq_len_seconds)


def draw_batch(dataset: Dataset, rng: np.random.Generator, seq_len_seconds: float, frame_cfg: FrameConfig,
               kind: FeatureKind, stats: GlobalStats | None = None, batch_seconds: float = 60.0,
               vad: VadConfig = VadConfig()) -> Batch:
    n_seq = sequences_per_batch(seq_len_seconds, batch_seconds)
    n_samples = int(round(seq_len_seconds * frame_cfg.sample_rate_hz))
    pairs = [dataset.draw(rng, n_samples) for _ in range(n_seq)]
    clean = np.stack([p[0] for p in pairs])
    noise = np.stack([p[1] for p in pairs])
    return batch_from_signals(clean, noise, frame_cfg, kind, stats, vad, seq_len_seconds)


def batch_rng(seed: int, step: int) -> np.random.Generator:
    """Per-step generator, so any step's batch can be rebuilt without replaying earlier ones."""
    return np.random.default_rng([seed, step])


def make_batches(dataset: Dataset, seq_len_seconds: float, frame_cfg: FrameConfig = FrameConfig(),
                 kind: FeatureKind = FeatureKind(), seed: int = 0, stats: GlobalStats | None = None,
                 batch_seconds: float = 60.0, vad: VadConfig = VadConfig(), start_step: int = 0) -> Iterator[Batch]:
    """Endless stream of batches; batch ``i`` depends only on ``(seed, start_step + i)``."""
    step = start_step
    while True:
        yield draw_batch(dataset, batch_rng(seed, step), seq_len_seconds, frame_cfg, kind, stats,
                         batch_seconds, vad)
        step += 1
