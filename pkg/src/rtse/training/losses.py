"""Training objectives on magnitude spectra.

All inputs are (frames, bins) magnitudes of a single sequence; "mean" is taken
jointly over frames and bins.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from rtse.errors import ConfigError, ContractError
from rtse.training.vad import VadConfig

FAMILIES = ("mse", "fixed_weighted", "snr_weighted")


@dataclass(frozen=True)
class LossConfig:
    family: str = "fixed_weighted"
    alpha: float = 0.35
    beta_db: float = 18.2
    vad: VadConfig = field(default_factory=VadConfig)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown loss family {self.family!r}; choose from {FAMILIES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not np.isfinite(self.beta_db):
            raise ConfigError("beta_db must be finite")

    @property
    def beta_linear(self) -> float:
        return db_to_power_ratio(self.beta_db)


def db_to_power_ratio(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def _check_shapes(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ContractError(f"shape mismatch: {shape} vs {np.shape(a)}")


def loss_mse(gain, clean, noisy) -> float:
    _check_shapes(gain, clean, noisy)
    gain, clean, noisy = (np.asarray(a, dtype=np.float64) for a in (gain, clean, noisy))
    return float(np.mean((clean - gain * noisy) ** 2))


def loss_speech(gain, clean, sa_mask) -> float:
    """Speech distortion over speech-active frames; 0 when no frame is active."""
    _check_shapes(gain, clean)
    mask = np.asarray(sa_mask, dtype=bool)
    if mask.shape != np.shape(clean)[:1]:
        raise ContractError(f"mask shape {mask.shape} does not match {np.shape(clean)[:1]} frames")
    if not mask.any():
        return 0.0
    s = np.asarray(clean, dtype=np.float64)[mask]
    g = np.asarray(gain, dtype=np.float64)[mask]
    return float(np.mean((s - g * s) ** 2))


def loss_noise(gain, noise) -> float:
    """Residual noise energy over all frames."""
    _check_shapes(gain, noise)
    return float(np.mean((np.asarray(gain, dtype=np.float64) * np.asarray(noise, dtype=np.float64)) ** 2))


def loss_weighted(gain, clean, noise, sa_mask, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * loss_speech(gain, clean, sa_mask) + (1.0 - alpha) * loss_noise(gain, noise)


class ZeroNoiseWarning(UserWarning):
    pass


def snr_alpha(clean, noise, beta_linear: float) -> float:
    """Speech-distortion weight ``snr / (snr + beta)`` from the global SNR."""
    if not beta_linear > 0:
        raise ContractError("beta must be positive")
    e_s = float(np.sum(np.square(clean, dtype=np.float64)))
    e_n = float(np.sum(np.square(noise, dtype=np.float64)))
    if e_n <= 0.0:
        warnings.warn("noise energy is zero; alpha saturates to 1", ZeroNoiseWarning)
        return 1.0
    snr = e_s / e_n
    return snr / (snr + beta_linear)
