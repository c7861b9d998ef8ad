"""End-to-end enhancement: STFT -> features -> GRU gain -> noisy phase -> overlap-add."""
from __future__ import annotations

import time

import numpy as np

from rtse.dsp import FrameConfig, Framer, OlaState, analyze, apply_gain, istft, latency_samples, stft, synthesize
from rtse.features import FeatureExtractor, FeatureKind, GlobalStats, sequence_features
from rtse.model import GruState, ModelParams, forward_frame, forward_sequence


class Enhancer:
    """Frame-by-frame streaming enhancer for one audio stream.

    Memory use is constant in the stream length.  Output lags the input by
    ``latency_samples(frame_cfg)`` samples; :meth:`flush` drains that tail.
    """

    def __init__(self, params: ModelParams, frame_cfg: FrameConfig = FrameConfig(),
                 kind: FeatureKind = FeatureKind(), stats: GlobalStats | None = None):
        self.params = params
        self.cfg = frame_cfg
        self.kind = kind
        self.stats = stats
        self.reset()

    def reset(self) -> None:
        self.framer = Framer(self.cfg)
        self.features = FeatureExtractor(self.kind, self.cfg.n_bins, self.cfg.hop_seconds, self.stats)
        self.gru = GruState.zeros(self.params)
        self.ola = OlaState.initial(self.cfg)
        self.clipped = 0
        self.frames = 0

    def _frame(self, frame: np.ndarray) -> np.ndarray:
        spec = analyze(frame, self.cfg, self.frames)
        gain, self.gru = forward_frame(self.params, self.gru, self.features(np.abs(spec.bins)))
        out, self.ola = synthesize(apply_gain(spec, gain), self.ola, self.cfg)
        self.frames += 1
        return out

    def _emit(self, blocks: list[np.ndarray]) -> np.ndarray:
        if not blocks:
            return np.zeros(0)
        y = np.concatenate(blocks)
        over = np.abs(y) > 1.0
        if over.any():
            self.clipped += int(over.sum())
            y = np.clip(y, -1.0, 1.0)
        return y

    def process(self, chunk) -> np.ndarray:
        return self._emit([self._frame(f) for f in self.framer.push(chunk)])

    def flush(self) -> np.ndarray:
        return self._emit([self._frame(f) for f in self.framer.flush()])


def enhance_stream(enhancer: Enhancer, chunks, n_samples: int | None = None) -> np.ndarray:
    """Feed chunks through ``enhancer`` and return the latency-aligned output."""
    out = [enhancer.process(c) for c in chunks]
    out.append(enhancer.flush())
    y = np.concatenate(out)
    lat = latency_samples(enhancer.cfg)
    y = y[lat:]
    return y if n_samples is None else y[:n_samples]


def enhance_signal(enhancer: Enhancer, x: np.ndarray, chunk_size: int | None = None) -> tuple[np.ndarray, float]:
    """Enhance a whole signal (optionally in chunks); returns (output, real-time factor)."""
    x = np.asarray(x, dtype=np.float64)
    enhancer.reset()
    step = chunk_size or max(len(x), 1)
    t0 = time.perf_counter()
    y = enhance_stream(enhancer, (x[i : i + step] for i in range(0, len(x), step)), len(x))
    elapsed = time.perf_counter() - t0
    duration = len(x) / enhancer.cfg.sample_rate_hz
    return y, (elapsed / duration if duration > 0 else 0.0)


def model_gains(params: ModelParams, noisy_stftm: np.ndarray, frame_cfg: FrameConfig = FrameConfig(),
                kind: FeatureKind = FeatureKind(), stats: GlobalStats | None = None) -> np.ndarray:
    """Offline gains for a (frames, bins) noisy magnitude sequence."""
    feats = sequence_features(noisy_stftm, kind, frame_cfg.hop_seconds, stats)
    return forward_sequence(params, feats[:, None, :]).gain[:, 0, :]


def apply_gains_offline(noisy: np.ndarray, gains: np.ndarray, frame_cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    return istft(stft(noisy, frame_cfg) * gains, frame_cfg, len(noisy))


def oracle_enhance(noisy: np.ndarray, clean: np.ndarray, noise: np.ndarray,
                   frame_cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    from rtse.metrics import oracle_wiener

    g = oracle_wiener(np.abs(stft(clean, frame_cfg)), np.abs(stft(noise, frame_cfg)))
    return apply_gains_offline(noisy, g, frame_cfg)


def model_enhance_offline(params: ModelParams, noisy: np.ndarray, frame_cfg: FrameConfig = FrameConfig(),
                          kind: FeatureKind = FeatureKind(), stats: GlobalStats | None = None) -> np.ndarray:
    g = model_gains(params, np.abs(stft(noisy, frame_cfg)), frame_cfg, kind, stats)
    return apply_gains_offline(noisy, g, frame_cfg)
