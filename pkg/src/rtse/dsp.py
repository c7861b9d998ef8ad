"""Streaming STFT analysis, gain application and weighted overlap-add synthesis.

Framing convention: the analysis buffer starts out filled with zeros, and every
``hop`` new samples produce one frame made of the most recent ``frame_len``
samples.  Frame ``m`` therefore covers input samples
``[(m + 1) * hop - frame_len, (m + 1) * hop)``.  Synthesis emits ``hop``
samples per frame, and output sample ``j`` reconstructs input sample
``j - latency_samples(cfg)`` where the latency is ``frame_len - hop``
(384 samples = 24 ms at the default configuration).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from rtse.errors import ConfigError, ContractError, FrameSizeError, StateError


def make_window(frame_len: int) -> np.ndarray:
    """Periodic (DFT-even) Hamming window ``0.54 - 0.46 cos(2 pi n / N)``."""
    if not isinstance(frame_len, (int, np.integer)) or frame_len <= 0 or frame_len % 2:
        raise ConfigError(f"window length must be a positive even integer, got {frame_len!r}")
    n = np.arange(frame_len)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / frame_len)


@dataclass(frozen=True)
class FrameConfig:
    sample_rate_hz: int = 16000
    frame_len: int = 512
    hop: int = 128
    fft_size: int = 512
    window: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.frame_len <= 0 or self.frame_len % 4:
            raise ConfigError(f"frame_len must be a positive multiple of 4, got {self.frame_len}")
        if self.hop * 4 != self.frame_len:
            raise ConfigError(f"hop must equal frame_len / 4 (75% overlap), got hop={self.hop}")
        if self.fft_size < self.frame_len:
            raise ConfigError("fft_size must be >= frame_len")
        w = make_window(self.frame_len)
        w.setflags(write=False)
        object.__setattr__(self, "window", w)

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate_hz

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate_hz / self.fft_size

    def to_dict(self) -> dict:
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "frame_len": self.frame_len,
            "hop": self.hop,
            "fft_size": self.fft_size,
        }


def latency_samples(cfg: FrameConfig) -> int:
    """Algorithmic delay between an input sample and its reconstruction."""
    return cfg.frame_len - cfg.hop


@dataclass
class Spectrum:
    bins: np.ndarray
    frame_index: int = 0


def analyze(samples, cfg: FrameConfig, frame_index: int = 0) -> Spectrum:
    """Window one frame and take its real FFT (``fft_size // 2 + 1`` bins)."""
    x = np.asarray(samples)
    if x.ndim != 1 or x.shape[0] != cfg.frame_len:
        raise FrameSizeError(f"expected {cfg.frame_len} samples, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    w = cfg.window.astype(x.dtype, copy=False)
    return Spectrum(np.fft.rfft(x * w, n=cfg.fft_size), frame_index)


def apply_gain(noisy: Spectrum, gain) -> Spectrum:
    """Scale each bin by a real gain in [0, 1]; the noisy phase is kept."""
    g = np.asarray(gain)
    if g.shape != noisy.bins.shape:
        raise ContractError(f"gain shape {g.shape} does not match spectrum {noisy.bins.shape}")
    if not (np.all(g >= 0.0) and np.all(g <= 1.0)):
        raise ContractError("gain values must lie in [0, 1]")
    return Spectrum(noisy.bins * g, noisy.frame_index)


def _overlap_norm(cfg: FrameConfig) -> np.ndarray:
    w2 = cfg.window**2
    return w2.reshape(-1, cfg.hop).sum(axis=0)


@dataclass
class OlaState:
    cfg: FrameConfig
    tail: np.ndarray
    norm: np.ndarray

    @classmethod
    def initial(cls, cfg: FrameConfig, dtype=np.float64) -> "OlaState":
        return cls(cfg, np.zeros(cfg.frame_len - cfg.hop, dtype=dtype), _overlap_norm(cfg).astype(dtype))


def synthesize(spec: Spectrum, state: OlaState, cfg: FrameConfig) -> tuple[np.ndarray, OlaState]:
    """Inverse FFT, synthesis window and overlap-add; returns ``hop`` samples.

    The state is updated in place and also returned.
    """
    if state.cfg != cfg or state.tail.shape[0] != cfg.frame_len - cfg.hop:
        raise StateError("OlaState was initialised for a different FrameConfig")
    if spec.bins.shape != (cfg.n_bins,):
        raise FrameSizeError(f"expected {cfg.n_bins} bins, got {spec.bins.shape}")
    dtype = state.tail.dtype
    frame = np.fft.irfft(spec.bins, n=cfg.fft_size)[: cfg.frame_len].astype(dtype, copy=False)
    frame = frame * cfg.window.astype(dtype, copy=False)
    frame[: -cfg.hop] += state.tail
    out = frame[: cfg.hop] / state.norm
    state.tail = frame[cfg.hop :].copy()
    return out, state


class Framer:
    """Cuts an arbitrary chunked sample stream into overlapping analysis frames."""

    def __init__(self, cfg: FrameConfig, dtype=np.float64):
        self.cfg = cfg
        self.buf = np.zeros(cfg.frame_len, dtype=dtype)
        self.pending = np.zeros(0, dtype=dtype)
        self.frame_index = 0

    def push(self, samples) -> Iterator[np.ndarray]:
        hop = self.cfg.hop
        data = np.concatenate([self.pending, np.asarray(samples, dtype=self.buf.dtype).ravel()])
        pos = 0
        while data.shape[0] - pos >= hop:
            self.buf[:-hop] = self.buf[hop:]
            self.buf[-hop:] = data[pos : pos + hop]
            pos += hop
            self.frame_index += 1
            yield self.buf.copy()
        self.pending = data[pos:]

    def flush(self) -> Iterator[np.ndarray]:
        """Zero-pad the partial hop and drain the latency with silence."""
        hop = self.cfg.hop
        n_pad = (-self.pending.shape[0]) % hop + self.cfg.frame_len - hop
        yield from self.push(np.zeros(n_pad, dtype=self.buf.dtype))


def n_frames(n_samples: int, cfg: FrameConfig) -> int:
    """Frames produced by pushing ``n_samples`` and flushing."""
    return -(-n_samples // cfg.hop) + (cfg.frame_len - cfg.hop) // cfg.hop


def stft(x, cfg: FrameConfig) -> np.ndarray:
    """Offline STFT with exactly the streaming framing; shape (frames, bins)."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    lat = cfg.frame_len - cfg.hop
    total = n_frames(x.shape[0], cfg)
    padded = np.zeros((total - 1) * cfg.hop + cfg.frame_len, dtype=x.dtype)
    padded[lat : lat + x.shape[0]] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.frame_len)[:: cfg.hop]
    return np.fft.rfft(frames * cfg.window.astype(x.dtype, copy=False), n=cfg.fft_size, axis=-1)


def istft(spec: np.ndarray, cfg: FrameConfig, length: int, dtype=np.float64) -> np.ndarray:
    """Inverse of :func:`stft`, latency-compensated to ``length`` samples."""
    state = OlaState.initial(cfg, dtype)
    out = [synthesize(Spectrum(frame, i), state, cfg)[0] for i, frame in enumerate(spec)]
    y = np.concatenate(out) if out else np.zeros(0, dtype=dtype)
    lat = latency_samples(cfg)
    y = y[lat : lat + length]
    if y.shape[0] < length:
        y = np.concatenate([y, np.zeros(length - y.shape[0], dtype=dtype)])
    return y
