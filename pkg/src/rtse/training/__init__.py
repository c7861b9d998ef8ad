from rtse.training.batches import Batch, make_batches, sequences_per_batch
from rtse.training.bptt import LossParts, backward, batch_loss
from rtse.training.losses import (
    LossConfig,
    loss_mse,
    loss_noise,
    loss_speech,
    loss_weighted,
    snr_alpha,
)
from rtse.training.optim import AdamState, adam_update
from rtse.training.vad import VadConfig, vad_mask

__all__ = [
    "AdamState", "Batch", "LossConfig", "LossParts", "VadConfig", "adam_update", "backward", "batch_loss",
    "loss_mse", "loss_noise", "loss_speech", "loss_weighted", "make_batches", "sequences_per_batch",
    "snr_alpha", "vad_mask",
]
