"""Energy-based frame-level voice activity detector for clean training utterances."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from rtse.errors import ConfigError, ContractError


@dataclass(frozen=True)
class VadConfig:
    band_hz: tuple[float, float] = (300.0, 5000.0)
    smooth_frames: int = 3
    threshold_db: float = 30.0

    def __post_init__(self):
        lo, hi = self.band_hz
        if not 0 <= lo < hi:
            raise ConfigError(f"invalid VAD band {self.band_hz}")
        if self.smooth_frames < 1 or self.smooth_frames % 2 == 0:
            raise ConfigError("smooth_frames must be a positive odd integer")

    def band_bins(self, sample_rate_hz: int = 16000, fft_size: int = 512) -> slice:
        """Bins whose centre frequency lies inside the band (both edges inclusive)."""
        lo, hi = self.band_hz
        if hi > sample_rate_hz / 2:
            raise ConfigError(f"VAD band upper edge {hi} Hz exceeds Nyquist")
        df = sample_rate_hz / fft_size
        return slice(int(np.ceil(lo / df)), int(np.floor(hi / df)) + 1)


class SilentUtteranceWarning(UserWarning):
    pass


def frame_band_power(clean_stftm, cfg: VadConfig = VadConfig(), sample_rate_hz: int = 16000,
                     fft_size: int = 512) -> np.ndarray:
    mag = np.asarray(clean_stftm, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[1] != fft_size // 2 + 1:
        raise ContractError(f"expected (frames, {fft_size // 2 + 1}) magnitudes, got {mag.shape}")
    band = mag[:, cfg.band_bins(sample_rate_hz, fft_size)]
    return (band * band).sum(axis=1)


def vad_mask(clean_stftm, cfg: VadConfig = VadConfig(), sample_rate_hz: int = 16000,
             fft_size: int = 512) -> np.ndarray:
    """Per-frame speech activity of a whole clean utterance.

    In-band power is smoothed with a centred moving average (zero padded at
    the edges); a frame is voiced iff its smoothed power is strictly greater
    than the utterance peak lowered by ``threshold_db``.
    """
    power = frame_band_power(clean_stftm, cfg, sample_rate_hz, fft_size)
    if power.size == 0:
        return np.zeros(0, dtype=bool)
    smoothed = np.convolve(power, np.ones(cfg.smooth_frames), mode="same") / cfg.smooth_frames
    peak = smoothed.max()
    if peak <= 0:
        warnings.warn("utterance has no in-band energy; no frame is speech-active", SilentUtteranceWarning)
        return np.zeros(power.shape[0], dtype=bool)
    return smoothed > peak * 10.0 ** (-cfg.threshold_db / 10.0)
