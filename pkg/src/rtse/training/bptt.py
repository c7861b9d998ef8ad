"""Exact reverse-mode gradients through the unrolled GRU stack (full BPTT)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rtse.errors import ContractError, NumericError
from rtse.model import GruLayerParams, LayerCache, ModelParams, forward_sequence
from rtse.training.batches import Batch
from rtse.training.losses import LossConfig


@dataclass
class LossParts:
    loss: float
    l_speech: float
    l_noise: float
    alpha: float  # mean weight over the batch (nan for mse)


def sequence_alphas(batch: Batch, cfg: LossConfig) -> np.ndarray:
    if cfg.family == "snr_weighted":
        snr = batch.snr
        return snr / (snr + cfg.beta_linear)
    return np.full(batch.n_sequences, cfg.alpha)


def objective(gain: np.ndarray, batch: Batch, cfg: LossConfig) -> tuple[LossParts, np.ndarray]:
    """Batch loss (mean of per-sequence losses) and its gradient w.r.t. ``gain``.

    ``gain`` is laid out (sequence, frame, bin) like the batch arrays.
    """
    S, N, X = batch.clean, batch.noise, batch.noisy
    if gain.shape != S.shape:
        raise ContractError(f"gain shape {gain.shape} does not match batch {S.shape}")
    B, T, K = S.shape
    mask = batch.sa_mask.astype(np.float64)[:, :, None]
    n_sa = batch.sa_mask.sum(axis=1)
    denom = np.maximum(n_sa, 1)[:, None, None] * K

    e_speech = S - gain * S
    l_speech = (e_speech**2 * mask).sum(axis=(1, 2)) / denom[:, 0, 0]
    d_speech = -2.0 * e_speech * S * mask / denom
    l_noise = ((gain * N) ** 2).mean(axis=(1, 2))
    d_noise = 2.0 * gain * N * N / (T * K)

    if cfg.family == "mse":
        e = S - gain * X
        per_seq = (e**2).mean(axis=(1, 2))
        d_gain = -2.0 * e * X / (T * K)
        alpha = float("nan")
    else:
        a = sequence_alphas(batch, cfg)[:, None, None]
        per_seq = a[:, 0, 0] * l_speech + (1.0 - a[:, 0, 0]) * l_noise
        d_gain = a * d_speech + (1.0 - a) * d_noise
        alpha = float(a.mean())
    parts = LossParts(float(per_seq.mean()), float(l_speech.mean()), float(l_noise.mean()), alpha)
    return parts, d_gain / B


def _layer_backward(layer: GruLayerParams, cache: LayerCache, d_out: np.ndarray,
                    need_input_grad: bool) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    T, B, H = d_out.shape
    hs, Z, R, C = cache.h, cache.z, cache.r, cache.c
    d_az = np.empty_like(Z)
    d_ar = np.empty_like(R)
    d_ah = np.empty_like(C)
    U_zr = np.concatenate([layer.U_z, layer.U_r])  # (2H, H)
    U_h = layer.U_h
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = d_out[t] + dh_next
        h, z, r, c = hs[t], Z[t], R[t], C[t]
        dah = dh * z * (1.0 - c * c)
        drh = dah @ U_h
        dar = drh * h * r * (1.0 - r)
        daz = dh * (c - h) * z * (1.0 - z)
        dh_next = dh * (1.0 - z) + drh * r + np.concatenate([daz, dar], axis=1) @ U_zr
        d_az[t], d_ar[t], d_ah[t] = daz, dar, dah

    X = cache.x.reshape(T * B, -1)
    Hp = hs[:-1].reshape(T * B, H)
    RH = (R * hs[:-1]).reshape(T * B, H)
    daz_f, dar_f, dah_f = (a.reshape(T * B, H) for a in (d_az, d_ar, d_ah))
    grads = {
        "W_z": daz_f.T @ X, "W_r": dar_f.T @ X, "W_h": dah_f.T @ X,
        "U_z": daz_f.T @ Hp, "U_r": dar_f.T @ Hp, "U_h": dah_f.T @ RH,
        "b_z": daz_f.sum(axis=0), "b_r": dar_f.sum(axis=0), "b_h": dah_f.sum(axis=0),
    }
    d_in = None
    if need_input_grad:
        d_in = d_az @ layer.W_z + d_ar @ layer.W_r + d_ah @ layer.W_h
    return grads, d_in


def _first_bad_frame(a: np.ndarray) -> int:
    bad = ~np.isfinite(a).reshape(a.shape[0], a.shape[1], -1).all(axis=2)
    return int(np.argwhere(bad)[0][1]) if bad.any() else -1


def backward(params: ModelParams, batch: Batch, cfg: LossConfig) -> tuple[dict[str, np.ndarray], LossParts]:
    """Gradients of the batch loss w.r.t. every array in ``params.arrays()``."""
    if batch.n_sequences == 0 or batch.clean.shape[1] == 0:
        raise ContractError("batch is empty")
    cache = forward_sequence(params, batch.features.transpose(1, 0, 2))
    gain = cache.gain.transpose(1, 0, 2)
    with np.errstate(invalid="ignore", over="ignore"):
        parts, d_gain = objective(gain, batch, cfg)
    if not np.isfinite(parts.loss):
        frame = _first_bad_frame(gain)
        if frame < 0:
            frame = _first_bad_frame(np.concatenate([batch.features, batch.clean, batch.noise, batch.noisy], axis=2))
        raise NumericError(f"non-finite loss (first non-finite frame index: {frame})")

    g_t = cache.gain
    d_act = d_gain.transpose(1, 0, 2) * g_t * (1.0 - g_t)  # (T, B, K)
    T, B, K = d_act.shape
    top = cache.layers[-1].h[1:]
    grads = {
        "fc.weight": d_act.reshape(T * B, K).T @ top.reshape(T * B, -1),
        "fc.bias": d_act.sum(axis=(0, 1)),
    }
    d_h = d_act @ params.fc_weight
    for i in range(len(params.layers) - 1, -1, -1):
        layer_grads, d_h = _layer_backward(params.layers[i], cache.layers[i], d_h, need_input_grad=i > 0)
        for name, g in layer_grads.items():
            grads[f"gru{i}.{name}"] = g
    return grads, parts


def batch_loss(params: ModelParams, batch: Batch, cfg: LossConfig) -> float:
    """Forward-only batch loss; used by finite-difference checks."""
    gain = forward_sequence(params, batch.features.transpose(1, 0, 2)).gain.transpose(1, 0, 2)
    return objective(gain, batch, cfg)[0].loss
