"""Objective evaluation: SI-SDR, cepstral distance and the oracle Wiener gain.

Cepstral distance used here: per frame, the real cepstrum is the inverse DFT of
the natural-log magnitude spectrum (power floored at 1e-12), and

    CD = (10 / ln 10) * sqrt(2 * sum_{q=1..24} (c_ref[q] - c_est[q])**2)

averaged over frames that the energy VAD marks active in either signal.
Quefrency 0 is excluded, so the measure ignores overall gain.  Absolute values
are not comparable with other CD definitions (LPC cepstra, other orders).
"""
from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from rtse.dsp import FrameConfig, stft
from rtse.errors import ContractError
from rtse.features import LPS_FLOOR
from rtse.training.vad import SilentUtteranceWarning, VadConfig, vad_mask

SI_SDR_CAP_DB = 100.0
CD_ORDER = 24


def si_sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB, capped at +/-100 dB."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise ContractError(f"length mismatch: {ref.shape} vs {est.shape}")
    e_ref = float(ref @ ref)
    if e_ref <= 0.0:
        raise ContractError("reference is silent")
    target = (float(est @ ref) / e_ref) * ref
    num = float(target @ target)
    err = target - est
    den = float(err @ err)
    if den <= 0.0 or num <= 0.0:
        return SI_SDR_CAP_DB if den <= 0.0 and num > 0.0 else -SI_SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def real_cepstrum(mag: np.ndarray, fft_size: int) -> np.ndarray:
    log_mag = 0.5 * np.log(np.maximum(mag * mag, LPS_FLOOR))
    return np.fft.irfft(log_mag, n=fft_size, axis=-1)


def cepstral_distance_frames(reference, estimate, cfg: FrameConfig = FrameConfig(),
                             order: int = CD_ORDER) -> np.ndarray:
    """Per-frame cepstral distance (all frames, no VAD selection)."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise ContractError(f"length mismatch: {ref.shape} vs {est.shape}")
    if ref.shape[0] < cfg.frame_len:
        raise ContractError(f"signals shorter than one frame ({cfg.frame_len} samples)")
    c_ref = real_cepstrum(np.abs(stft(ref, cfg)), cfg.fft_size)
    c_est = real_cepstrum(np.abs(stft(est, cfg)), cfg.fft_size)
    d = c_ref[:, 1 : order + 1] - c_est[:, 1 : order + 1]
    return (10.0 / math.log(10.0)) * np.sqrt(2.0 * np.sum(d * d, axis=1))


def active_frames(reference, estimate, cfg: FrameConfig = FrameConfig(), vad: VadConfig = VadConfig()) -> np.ndarray:
    m_ref = vad_mask(np.abs(stft(np.asarray(reference, dtype=np.float64), cfg)), vad, cfg.sample_rate_hz, cfg.fft_size)
    m_est = vad_mask(np.abs(stft(np.asarray(estimate, dtype=np.float64), cfg)), vad, cfg.sample_rate_hz, cfg.fft_size)
    return m_ref | m_est


def cepstral_distance(reference, estimate, cfg: FrameConfig = FrameConfig(), order: int = CD_ORDER,
                      vad: VadConfig = VadConfig()) -> float:
    """Mean cepstral distance over speech-active frames (all frames if none are active)."""
    per_frame = cepstral_distance_frames(reference, estimate, cfg, order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SilentUtteranceWarning)
        mask = active_frames(reference, estimate, cfg, vad)
    if not mask.any():
        mask = np.ones_like(mask)
    return float(per_frame[mask].mean())


def oracle_wiener(clean_stftm, noise_stftm) -> np.ndarray:
    """Ideal gain ``|S|^2 / (|S|^2 + |N|^2)`` with 0/0 taken as 0."""
    s2 = np.square(np.asarray(clean_stftm, dtype=np.float64))
    n2 = np.square(np.asarray(noise_stftm, dtype=np.float64))
    if s2.shape != n2.shape:
        raise ContractError(f"shape mismatch: {s2.shape} vs {n2.shape}")
    total = s2 + n2
    return np.divide(s2, total, out=np.zeros_like(total), where=total > 0)


# -- reports ----------------------------------------------------------------


@dataclass
class EvalRow:
    clip_id: str
    snr_db: float
    method: str
    si_sdr: float
    cd: float
    delta_si_sdr: float = float("nan")
    delta_cd: float = float("nan")
    extra: dict[str, float] = field(default_factory=dict)


BASE_METRICS = ("si_sdr", "cd", "delta_si_sdr", "delta_cd")


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    @property
    def extra_metrics(self) -> list[str]:
        return sorted({k for r in self.rows for k in r.extra})

    def _value(self, row: EvalRow, metric: str) -> float:
        return row.extra.get(metric, float("nan")) if metric not in BASE_METRICS else getattr(row, metric)

    def aggregate(self) -> list[dict]:
        """Mean of every metric per (method, condition); condition ``all`` pools every SNR.

        Non-finite values are left out of the mean and counted in ``excluded_<metric>``.
        """
        groups: dict[tuple[str, str], list[EvalRow]] = defaultdict(list)
        for r in self.rows:
            groups[(r.method, f"{r.snr_db:g}")].append(r)
            groups[(r.method, "all")].append(r)
        metrics = list(BASE_METRICS) + self.extra_metrics
        out = []
        for method in self.methods:
            conds = sorted({c for m, c in groups if m == method and c != "all"}, key=float, reverse=True)
            for cond in conds + ["all"]:
                rows = groups[(method, cond)]
                agg = {"method": method, "condition": cond, "n": len(rows)}
                for m in metrics:
                    vals = np.array([self._value(r, m) for r in rows], dtype=np.float64)
                    ok = np.isfinite(vals)
                    agg[m] = float(vals[ok].mean()) if ok.any() else float("nan")
                    agg[f"excluded_{m}"] = int((~ok).sum())
                out.append(agg)
        return out

    def mean(self, method: str, metric: str, condition: str = "all") -> float:
        for agg in self.aggregate():
            if agg["method"] == method and agg["condition"] == condition:
                return agg[metric]
        raise KeyError((method, condition))

    def merge_scores(self, path) -> None:
        """Attach externally computed scores (CSV with ``clip_id``, ``method`` and metric columns)."""
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                for r in self.rows:
                    if r.clip_id == rec["clip_id"] and r.method == rec["method"]:
                        for k, v in rec.items():
                            if k not in ("clip_id", "method"):
                                r.extra[k] = float(v)

    def write_csv(self, path) -> None:
        extras = self.extra_metrics
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["clip_id", "snr_db", "method", *BASE_METRICS, *extras])
            for r in self.rows:
                w.writerow([r.clip_id, f"{r.snr_db:g}", r.method,
                            *(f"{self._value(r, m):.6f}" for m in BASE_METRICS),
                            *(f"{r.extra.get(m, float('nan')):.6f}" for m in extras)])

    def summary_text(self) -> str:
        """Overall means per method in SI-SDR, CD, external-score column order."""
        cols = ["si_sdr", "cd", *self.extra_metrics]
        head = f"{'Method':<24}" + "".join(f"{c.upper():>12}" for c in cols) + f"{'N':>6}"
        lines = [head, "-" * len(head)]
        for agg in self.aggregate():
            if agg["condition"] != "all":
                continue
            lines.append(f"{agg['method']:<24}" + "".join(f"{agg[c]:>12.3f}" for c in cols) + f"{agg['n']:>6}")
        flagged = sum(v for a in self.aggregate() if a["condition"] == "all"
                      for k, v in a.items() if k.startswith("excluded_"))
        if flagged:
            lines.append(f"({flagged} non-finite scores excluded)")
        return "\n".join(lines) + "\n"


Enhance = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def evaluate(triplets: Iterable, methods: dict[str, Enhance], cfg: FrameConfig = FrameConfig()) -> EvalReport:
    """Score every method on every (noisy, clean, noise) triplet.

    A ``noisy`` passthrough row is always included and is the baseline for
    the delta columns.
    """
    report = EvalReport()
    for t in triplets:
        base_sdr = si_sdr(t.clean, t.noisy)
        base_cd = cepstral_distance(t.clean, t.noisy, cfg)
        report.rows.append(EvalRow(t.clip_id, t.snr_db, "noisy", base_sdr, base_cd, 0.0, 0.0))
        for name, fn in methods.items():
            est = fn(t.noisy, t.clean, t.noise)
            sdr = si_sdr(t.clean, est)
            cd = cepstral_distance(t.clean, est, cfg)
            report.rows.append(EvalRow(t.clip_id, t.snr_db, name, sdr, cd, sdr - base_sdr, cd - base_cd))
    return report
