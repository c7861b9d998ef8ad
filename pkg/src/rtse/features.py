"""Network input features: magnitude or log-power spectra plus normalization.

Three normalizations are available on top of the transform:

* ``global``: per-bin standardization with mean/std accumulated over a training set,
* ``fd_online``: per-bin running mean and second moment with exponential forgetting,
* ``fi_online``: the same running statistics averaged over bins, so a single
  mean/std pair is applied to the whole frame.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from rtse.errors import ConfigError, ContractError, UninitializedStatsError

LPS_FLOOR = 1e-12
VAR_FLOOR = 1e-10

TRANSFORMS = ("magnitude", "lps")
NORMALIZATIONS = ("none", "global", "fd_online", "fi_online")


@dataclass(frozen=True)
class FeatureKind:
    transform: str = "lps"
    normalization: str = "fd_online"
    tau: float = 3.0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown feature transform {self.transform!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")


def lps(mag) -> np.ndarray:
    """Natural-log power spectrum floored at -120 dB."""
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise ContractError("magnitudes must be non-negative")
    return np.log(np.maximum(mag * mag, LPS_FLOOR))


def transform(mag, kind: FeatureKind) -> np.ndarray:
    if kind.transform == "lps":
        return lps(mag)
    return np.asarray(mag, dtype=np.float64)


# -- global normalization ---------------------------------------------------


@dataclass(frozen=True)
class GlobalStats:
    """Mergeable per-bin moments (count, mean, sum of squared deviations)."""

    mean: np.ndarray
    m2: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, n_bins: int) -> "GlobalStats":
        return cls(np.zeros(n_bins), np.zeros(n_bins), 0)

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.full_like(self.mean, np.sqrt(VAR_FLOOR))
        return np.sqrt(np.maximum(self.m2 / self.count, VAR_FLOOR))

    def merge(self, other: "GlobalStats") -> "GlobalStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return GlobalStats(mean, m2, n)


def accumulate_global(stats: GlobalStats, frames) -> GlobalStats:
    """Fold one frame (or a (frames, bins) block) into the running moments."""
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if x.shape[1] != stats.mean.shape[0]:
        raise ContractError(f"frame has {x.shape[1]} bins, stats have {stats.mean.shape[0]}")
    mean = x.mean(axis=0)
    block = GlobalStats(mean, ((x - mean) ** 2).sum(axis=0), x.shape[0])
    return stats.merge(block)


def apply_global(stats: GlobalStats, frame) -> np.ndarray:
    if stats.count < 2:
        raise UninitializedStatsError("global statistics need at least two accumulated frames")
    return (np.asarray(frame, dtype=np.float64) - stats.mean) / stats.std


# -- online normalization ---------------------------------------------------


def smoothing_constant(tau: float, hop_seconds: float) -> float:
    """Forgetting factor ``exp(-hop / tau)`` of the running statistics."""
    if not (tau > 0 and hop_seconds > 0):
        raise ConfigError("tau and hop_seconds must be positive")
    return float(np.exp(-hop_seconds / tau))


@dataclass(frozen=True)
class NormState:
    """Running first and second moments per bin.

    A state with ``frame_count == 0`` is seeded from the first frame it sees
    (mean = x, second moment = x**2) instead of from zeros.
    """

    mu: np.ndarray
    m2: np.ndarray
    c: float
    frame_count: int = 0

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ConfigError(f"smoothing constant must lie in (0, 1), got {self.c}")

    @classmethod
    def initial(cls, n_bins: int, c: float) -> "NormState":
        return cls(np.zeros(n_bins), np.zeros(n_bins), c, 0)


def _update(state: NormState, frame) -> tuple[np.ndarray, NormState]:
    x = np.asarray(frame, dtype=np.float64)
    if x.shape != state.mu.shape:
        raise ContractError(f"frame shape {x.shape} does not match state {state.mu.shape}")
    if state.frame_count == 0:
        mu, m2 = x.copy(), x * x
    else:
        c = state.c
        mu = c * state.mu + (1.0 - c) * x
        m2 = c * state.m2 + (1.0 - c) * x * x
    return x, replace(state, mu=mu, m2=m2, frame_count=state.frame_count + 1)


def fd_normalize(state: NormState, frame) -> tuple[np.ndarray, NormState]:
    """Per-bin online mean/variance normalization (statistics updated first)."""
    x, state = _update(state, frame)
    var = np.maximum(state.m2 - state.mu**2, VAR_FLOOR)
    return (x - state.mu) / np.sqrt(var), state


def fi_normalize(state: NormState, frame) -> tuple[np.ndarray, NormState]:
    """Online normalization with one mean/std shared by all bins.

    The shared mean is the bin average of the running means; the shared
    variance is the bin average of the per-bin running variances.
    """
    x, state = _update(state, frame)
    mean = state.mu.mean()
    var = max(float(np.mean(state.m2 - state.mu**2)), VAR_FLOOR)
    return (x - mean) / np.sqrt(var), state


class FeatureExtractor:
    """Stateful per-stream feature pipeline (transform, then normalization)."""

    def __init__(self, kind: FeatureKind, n_bins: int, hop_seconds: float, stats: GlobalStats | None = None):
        if kind.normalization == "global" and (stats is None or stats.count < 2):
            raise UninitializedStatsError("global normalization requires accumulated GlobalStats")
        self.kind = kind
        self.stats = stats
        self.c = smoothing_constant(kind.tau, hop_seconds)
        self.state = NormState.initial(n_bins, self.c)

    def reset(self) -> None:
        self.state = NormState.initial(self.state.mu.shape[0], self.c)

    def __call__(self, mag) -> np.ndarray:
        f = transform(mag, self.kind)
        norm = self.kind.normalization
        if norm == "fd_online":
            out, self.state = fd_normalize(self.state, f)
        elif norm == "fi_online":
            out, self.state = fi_normalize(self.state, f)
        elif norm == "global":
            out = apply_global(self.stats, f)
        else:
            out = f
        return out


def sequence_features(
    mags, kind: FeatureKind, hop_seconds: float, stats: GlobalStats | None = None
) -> np.ndarray:
    """Features of a whole (frames, bins) magnitude sequence from a fresh state.

    Produces exactly what :class:`FeatureExtractor` yields frame by frame.
    """
    mags = np.asarray(mags, dtype=np.float64)
    ext = FeatureExtractor(kind, mags.shape[-1], hop_seconds, stats)
    if kind.normalization in ("none", "global"):
        # stateless: vectorize
        return ext(mags)
    return np.stack([ext(m) for m in mags]) if len(mags) else np.zeros_like(mags)
