"""Synthetic desk-scale corpus: harmonic pseudo-speech plus white / babble-like noise."""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from rtse.data import Clip

SR = 16000


def harmonic_speech(rng: np.random.Generator, duration: float, sr: int = SR) -> np.ndarray:
    """Voiced "syllables" with gliding pitch and two moving resonances, separated by pauses."""
    n = int(round(duration * sr))
    out = np.zeros(n)
    pos = int(rng.integers(0, int(0.2 * sr)))
    while pos < n:
        length = int(rng.uniform(0.12, 0.35) * sr)
        seg = np.arange(min(length, n - pos))
        glide = rng.uniform(-0.15, 0.15) * seg / max(length, 1)
        f0 = rng.uniform(95.0, 240.0) * (1.0 + glide)
        phase = 2 * np.pi * np.cumsum(f0) / sr
        formants = np.sort(rng.uniform([300.0, 900.0], [900.0, 3000.0]))
        sig = np.zeros(len(seg))
        mean_f0 = float(np.mean(f0)) if len(seg) else 100.0
        for h in range(1, int(5000.0 / mean_f0) + 1):
            fh = h * mean_f0
            env = sum(np.exp(-0.5 * ((fh - fc) / 180.0) ** 2) for fc in formants) + 0.03
            sig += env / np.sqrt(h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        sig *= np.hanning(len(seg) + 2)[1:-1] ** 0.7
        out[pos : pos + len(seg)] += sig * rng.uniform(0.4, 1.0)
        pos += len(seg) + int(rng.uniform(0.04, 0.25) * sr)
        if rng.random() < 0.15:
            pos += int(rng.uniform(0.3, 0.8) * sr)
    return out


def white_noise(rng: np.random.Generator, duration: float, sr: int = SR) -> np.ndarray:
    return rng.standard_normal(int(round(duration * sr)))


def babble_noise(rng: np.random.Generator, duration: float, sr: int = SR) -> np.ndarray:
    """Speech-shaped (low-pass tilted) noise with syllable-rate amplitude modulation."""
    n = int(round(duration * sr))
    x = lfilter([1.0], [1.0, -0.9], rng.standard_normal(n))
    t = np.arange(n) / sr
    mod = np.ones(n)
    for _ in range(4):
        mod += 0.5 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    return x * np.maximum(mod, 0.2)


def toy_corpus(seed: int = 0, n_speech: int = 8, n_noise: int = 4, duration: float = 8.0) -> tuple[list[Clip], list[Clip]]:
    rng = np.random.default_rng(seed)
    speech = [Clip(harmonic_speech(rng, duration), SR, f"toy_speech_{i}", "speech") for i in range(n_speech)]
    makers = (white_noise, babble_noise)
    noise = [Clip(makers[i % 2](rng, duration), SR, f"toy_{makers[i % 2].__name__}_{i}", "noise")
             for i in range(n_noise)]
    return speech, noise


def write_toy_corpus(out_dir, seed: int = 0, n_speech: int = 8, n_noise: int = 4, duration: float = 8.0):
    """Write the toy clips as 16 kHz WAVs plus a ``manifest.tsv``; returns the manifest path."""
    from pathlib import Path

    from rtse.wavio import write_wav

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    speech, noise = toy_corpus(seed, n_speech, n_noise, duration)
    lines = []
    for clip in speech + noise:
        name = f"{clip.source_id}.wav"
        # keep headroom so float WAVs stay within [-1, 1]
        x = clip.samples / max(1.0, 1.25 * float(np.max(np.abs(clip.samples))))
        write_wav(root / name, x)
        lines.append(f"{clip.role}\t{name}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
