"""Stacked-GRU gain estimator: three GRU layers and a sigmoid output layer.

GRU convention used throughout (weights are stored ``(out, in)``)::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    hc = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * hc
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from rtse.errors import ContractError

MODEL_VERSION = "gru3-fc-sigmoid/1"
GATE_NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


@dataclass
class GruLayerParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        H, D = self.W_z.shape
        for name in GATE_NAMES:
            a = getattr(self, name)
            want = (H, D) if name[0] == "W" else (H, H) if name[0] == "U" else (H,)
            if a.shape != want:
                raise ContractError(f"{name} has shape {a.shape}, expected {want}")

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]


@dataclass
class ModelParams:
    layers: list[GruLayerParams]
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    version: str = MODEL_VERSION

    def __post_init__(self):
        prev = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.input_size != prev:
                raise ContractError(f"layer {i} expects input {layer.input_size}, previous width is {prev}")
            prev = layer.hidden_size
        if self.fc_weight.shape != (self.fc_bias.shape[0], prev):
            raise ContractError(f"fc_weight shape {self.fc_weight.shape} inconsistent with hidden {prev}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_size

    @property
    def output_dim(self) -> int:
        return self.fc_bias.shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.hidden_size for layer in self.layers]

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat, ordered view of every trainable array (shared, not copied)."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name in GATE_NAMES:
                out[f"gru{i}.{name}"] = getattr(layer, name)
        out["fc.weight"] = self.fc_weight
        out["fc.bias"] = self.fc_bias
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], version: str = MODEL_VERSION) -> "ModelParams":
        n_layers = len({k.split(".")[0] for k in arrays if k.startswith("gru")})
        layers = [GruLayerParams(**{n: arrays[f"gru{i}.{n}"] for n in GATE_NAMES}) for i in range(n_layers)]
        return cls(layers, arrays["fc.weight"], arrays["fc.bias"], version)

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays({k: v.copy() for k, v in self.arrays().items()}, self.version)

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays().values())


@dataclass
class GruState:
    h: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros(cls, params: ModelParams, batch: tuple[int, ...] = ()) -> "GruState":
        return cls([np.zeros(batch + (n,)) for n in params.hidden_sizes])


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(seed: int, hidden: int = 256, input_dim: int = 257, n_layers: int = 3,
                output_dim: int | None = None) -> ModelParams:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    if hidden <= 0 or input_dim <= 0 or n_layers <= 0:
        raise ContractError("hidden, input_dim and n_layers must be positive")
    output_dim = input_dim if output_dim is None else output_dim
    rng = np.random.default_rng(seed)
    layers = []
    d = input_dim
    for _ in range(n_layers):
        W = {n: _glorot(rng, hidden, d) for n in ("W_z", "W_r", "W_h")}
        U = {n: _glorot(rng, hidden, hidden) for n in ("U_z", "U_r", "U_h")}
        b = {n: np.zeros(hidden) for n in ("b_z", "b_r", "b_h")}
        layers.append(GruLayerParams(**W, **U, **b))
        d = hidden
    return ModelParams(layers, _glorot(rng, output_dim, hidden), np.zeros(output_dim))


def gru_step(layer: GruLayerParams, h_prev, x) -> np.ndarray:
    """One GRU update. ``x``/``h_prev`` may carry leading batch dimensions."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape[-1] != layer.input_size or h_prev.shape[-1] != layer.hidden_size:
        raise ContractError(
            f"gru_step got x[..., {x.shape[-1]}] and h[..., {h_prev.shape[-1]}], "
            f"layer is {layer.input_size} -> {layer.hidden_size}"
        )
    z = expit(x @ layer.W_z.T + h_prev @ layer.U_z.T + layer.b_z)
    r = expit(x @ layer.W_r.T + h_prev @ layer.U_r.T + layer.b_r)
    hc = np.tanh(x @ layer.W_h.T + (r * h_prev) @ layer.U_h.T + layer.b_h)
    return (1.0 - z) * h_prev + z * hc


def forward_frame(params: ModelParams, state: GruState, features) -> tuple[np.ndarray, GruState]:
    """Map one feature frame to one gain frame, advancing the recurrent state."""
    if len(state.h) != len(params.layers):
        raise ContractError("GruState does not match the number of layers")
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ContractError(f"expected {params.input_dim} features, got {x.shape[-1]}")
    hs = []
    for layer, h in zip(params.layers, state.h):
        x = gru_step(layer, h, x)
        hs.append(x)
    gain = expit(x @ params.fc_weight.T + params.fc_bias)
    return gain, GruState(hs)


# -- whole-sequence forward pass with activations kept for BPTT -------------


@dataclass
class LayerCache:
    x: np.ndarray  # (T, B, D) layer input
    h: np.ndarray  # (T + 1, B, H) hidden states, h[0] is the initial state
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray  # candidate activation


@dataclass
class SequenceCache:
    layers: list[LayerCache]
    gain: np.ndarray  # (T, B, K)


def _layer_sequence(layer: GruLayerParams, X: np.ndarray, h0: np.ndarray) -> LayerCache:
    T, B, _ = X.shape
    H = layer.hidden_size
    Az = X @ layer.W_z.T + layer.b_z
    Ar = X @ layer.W_r.T + layer.b_r
    Ah = X @ layer.W_h.T + layer.b_h
    U_zr = np.concatenate([layer.U_z, layer.U_r]).T
    U_hT = layer.U_h.T
    hs = np.empty((T + 1, B, H))
    hs[0] = h0
    Z = np.empty((T, B, H))
    R = np.empty((T, B, H))
    C = np.empty((T, B, H))
    for t in range(T):
        h = hs[t]
        zr = h @ U_zr
        z = expit(Az[t] + zr[:, :H])
        r = expit(Ar[t] + zr[:, H:])
        c = np.tanh(Ah[t] + (r * h) @ U_hT)
        hs[t + 1] = (1.0 - z) * h + z * c
        Z[t], R[t], C[t] = z, r, c
    return LayerCache(X, hs, Z, R, C)


def forward_sequence(params: ModelParams, features: np.ndarray) -> SequenceCache:
    """Run a (frames, batch, bins) feature block from zero state, keeping activations."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise ContractError(f"expected (T, B, {params.input_dim}) features, got {X.shape}")
    caches = []
    for layer in params.layers:
        cache = _layer_sequence(layer, X, np.zeros((X.shape[1], layer.hidden_size)))
        caches.append(cache)
        X = cache.h[1:]
    gain = expit(X @ params.fc_weight.T + params.fc_bias)
    return SequenceCache(caches, gain)
