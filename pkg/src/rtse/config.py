"""Run configuration shared by the CLI and the experiment scripts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from rtse.errors import ConfigError
from rtse.features import FeatureKind
from rtse.training.losses import LossConfig

FEATURE_ALIASES = {"mag": "magnitude", "magnitude": "magnitude", "lps": "lps"}
NORM_ALIASES = {"global": "global", "fd": "fd_online", "fi": "fi_online", "none": "none"}


@dataclass
class RunConfig:
    manifest: str | None = None
    dataset: str | None = None
    out: str = "run"
    resume: str | None = None
    seq_len_seconds: float = 10.0
    batch_seconds: float = 60.0
    loss: str = "fixed_weighted"
    alpha: float = 0.35
    beta_db: float = 18.2
    hidden: int = 256
    lr: float = 1e-3
    seed: int = 0
    steps: int = 1000
    snr_set: tuple[float, ...] = (40.0, 30.0, 20.0, 10.0, 0.0)
    feature: str = "lps"
    norm: str = "fd"
    tau: float = 3.0
    level_db: float = -25.0
    checkpoint_every: int = 0
    stats_batches: int = 4
    deterministic: bool = False

    def __post_init__(self):
        self.snr_set = tuple(float(s) for s in self.snr_set)
        if self.feature not in FEATURE_ALIASES:
            raise ConfigError(f"--feature must be one of mag, lps (got {self.feature!r})")
        if self.norm not in NORM_ALIASES:
            raise ConfigError(f"--norm must be one of global, fd, fi, none (got {self.norm!r})")
        if self.seq_len_seconds <= 0 or self.batch_seconds <= 0:
            raise ConfigError("sequence and batch durations must be positive")
        if self.hidden <= 0 or self.steps < 0 or self.lr < 0:
            raise ConfigError("hidden must be positive; steps and lr non-negative")
        self.loss_config()
        self.feature_kind()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_set"] = list(self.snr_set)
        return d

    def loss_config(self) -> LossConfig:
        return LossConfig(self.loss, self.alpha, self.beta_db)

    def feature_kind(self) -> FeatureKind:
        return FeatureKind(FEATURE_ALIASES[self.feature], NORM_ALIASES[self.norm], self.tau)
